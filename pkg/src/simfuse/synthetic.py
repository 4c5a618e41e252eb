"""Seeded synthetic collections where relevant documents share vocabulary.

Each query owns a topical vocabulary used by its relevant documents.
Non-relevant documents each draw on their own unrelated topic, so they are
mutually dissimilar. Three runs retrieve mostly disjoint relevant subsets
and share a few non-relevant "popular" documents, which favors methods that
reward multiple appearances without looking at content.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from simfuse.corpus import Document
from simfuse.runio import QrelSet, RunList

__all__ = ["SyntheticCollection", "make_collection"]


@dataclass
class SyntheticCollection:
    docs: dict[str, Document]
    runs: list[dict[str, RunList]]
    qrels: QrelSet


def _text(rng: random.Random, topic: list[str], background: list[str], length: int, share: float) -> str:
    return " ".join(rng.choice(topic) if rng.random() < share else rng.choice(background) for _ in range(length))


def make_collection(
    seed: int = 0,
    n_queries: int = 10,
    n_relevant: int = 15,
    n_nonrelevant: int = 60,
    k: int = 20,
    n_runs: int = 3,
    doc_length: int = 80,
    topic_share: float = 0.07,
    singleton_share: float = 0.6,
    popular: int = 3,
) -> SyntheticCollection:
    rng = random.Random(seed)
    background = [f"bg{i}" for i in range(400)]
    docs: dict[str, Document] = {}
    runs: list[dict[str, RunList]] = [{} for _ in range(n_runs)]
    judgments: dict[str, dict[str, int]] = {}

    for q in range(n_queries):
        qid = f"q{q + 1}"
        topic = [f"q{q}t{i}" for i in range(40)]
        rel_ids = [f"{qid}-r{i:02d}" for i in range(n_relevant)]
        non_ids = [f"{qid}-n{i:02d}" for i in range(n_nonrelevant)]
        for d in rel_ids:
            docs[d] = Document(d, _text(rng, topic, background, doc_length, topic_share))
        for i, d in enumerate(non_ids):
            own = [f"{qid}n{i}x{j}" for j in range(40)]
            docs[d] = Document(d, _text(rng, own, background, doc_length, topic_share))
        judgments[qid] = {d: 1 for d in rel_ids} | {d: 0 for d in non_ids}

        members: list[list[str]] = [[] for _ in range(n_runs)]
        for d in rel_ids:
            u = rng.random()
            n_in = 1 if u < singleton_share else (2 if u < singleton_share + (1 - singleton_share) / 2 else n_runs)
            for r in rng.sample(range(n_runs), n_in):
                members[r].append(d)
        shared = rng.sample(non_ids, popular)
        rest = [d for d in non_ids if d not in shared]
        for r in range(n_runs):
            chosen_rel = members[r][: k // 2]
            fill = k - len(chosen_rel) - len(shared)
            picked = chosen_rel + shared + rng.sample(rest, fill)
            scored = []
            for d in picked:
                relevant = judgments[qid][d] == 1
                base = rng.uniform(4.0, 10.0) if relevant else rng.uniform(4.5, 10.0)
                scored.append((d, round(base, 4)))
            scored.sort(key=lambda x: -x[1])
            runs[r][qid] = RunList.from_scores(qid, f"synth{r + 1}", scored)

    for i in range(200):
        d = f"extra{i:03d}"
        docs[d] = Document(d, _text(rng, background, background, doc_length, 0.0))
    return SyntheticCollection(docs, runs, QrelSet(judgments))
