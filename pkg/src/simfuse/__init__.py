"""Fusion of retrieved lists using inter-document similarities."""

from simfuse.fusion import METHODS, FusedRanking, fuse

__version__ = "0.1.0"

__all__ = ["METHODS", "FusedRanking", "fuse", "__version__"]
