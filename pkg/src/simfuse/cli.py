"""Command-line front end.

Every flag may also be given in a JSON config file (``--config``) using the
flag name without dashes as key (``grid-lambda`` -> ``grid_lambda``);
command-line flags win over the file.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

from simfuse import corpus as corpus_mod
from simfuse.evaluation import (
    EvalReport,
    evaluate,
    mean_overlap,
    overlap_analysis,
    report_rows,
    singleton_relevant_curve,
    summary_text,
    write_report_csv,
)
from simfuse.fusion import BASELINE_METHODS, METHODS
from simfuse.harness import (
    DEFAULT_ALPHAS,
    DEFAULT_LAMBDAS,
    ExperimentConfig,
    SweepGrid,
    evaluate_grid,
    fused_rankings,
    load_experiment,
    loo_cross_validation,
    map_at_k,
    per_query_upper_bound,
    prepare_tasks,
    random_run_experiment,
    random_triplets,
    select_runs_by_map,
    sweep,
)
from simfuse.runio import read_qrels, read_run, truncate, write_qrels, write_runs
from simfuse.similarity import SmoothingParams

log = logging.getLogger("simfuse")

DEFAULTS = {
    "runs": [],
    "corpus": None,
    "qrels": None,
    "method": "bagdupmnz",
    "lambda": 1.0,
    "alpha": 5,
    "k": 20,
    "grid_lambda": list(DEFAULT_LAMBDAS),
    "grid_alpha": list(DEFAULT_ALPHAS),
    "seed": 0,
    "samples": 20,
    "out": None,
    "stopwords": None,
    "mu": 1000.0,
    "stem": True,
    "solver": "power",
    "collection_stats": "corpus",
    "baselines": ["combsum", "combmnz"],
    "run_tag": None,
    "m": 3,
    "k_values": [10, 20, 30, 40, 50, 75, 100],
    "random_triplets": False,
}


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def _names(text: str) -> list[str]:
    return [x for x in text.replace(",", " ").split() if x]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of default flag values")
    common.add_argument("--runs", nargs="+", default=None, help="TREC run files")
    common.add_argument("--corpus", default=None, help="JSON-lines corpus with id/text fields")
    common.add_argument("--qrels", default=None)
    common.add_argument("--method", default=None, help=f"one of: {', '.join(METHODS)}")
    common.add_argument("--lambda", dest="lambda", type=float, default=None)
    common.add_argument("--alpha", type=int, default=None)
    common.add_argument("--k", type=int, default=None, help="documents kept per run (default 20)")
    common.add_argument("--grid-lambda", dest="grid_lambda", type=_floats, default=None)
    common.add_argument("--grid-alpha", dest="grid_alpha", type=_ints, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--samples", type=int, default=None)
    common.add_argument("--out", default=None, help="output file (fuse, eval) or directory")
    common.add_argument("--stopwords", default=None, help="stopword file, one term per line")
    common.add_argument("--mu", type=float, default=None, help="Dirichlet smoothing (default 1000)")
    common.add_argument("--stem", dest="stem", action="store_true", default=None)
    common.add_argument("--no-stem", dest="stem", action="store_false")
    common.add_argument("--solver", choices=["power", "direct"], default=None)
    common.add_argument("--collection-stats", dest="collection_stats", choices=["corpus", "pool"], default=None)
    common.add_argument("--baselines", type=_names, default=None, help="comparison fusion methods")
    common.add_argument("--run-tag", dest="run_tag", default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="simfuse", description="Similarity-based fusion of retrieved lists")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fuse", parents=[common], help="fuse runs with one method and parameter setting")
    sub.add_parser("eval", parents=[common], help="score run files against qrels")
    sub.add_parser("sweep", parents=[common], help="pick (lambda, alpha) maximizing mean p@5")
    sub.add_parser("cv", parents=[common], help="leave-one-out cross-validation over queries")
    sub.add_parser("oracle", parents=[common], help="per-query best parameter setting")
    sub.add_parser("sample", parents=[common], help="fuse random run triplets (--method takes a list)")
    overlap = sub.add_parser("overlap", parents=[common], help="relevant/non-relevant overlap across runs")
    overlap.add_argument("--k-values", dest="k_values", type=_ints, default=None)
    overlap.add_argument("--random-triplets", dest="random_triplets", action="store_true", default=None)
    select = sub.add_parser("select-runs", parents=[common], help="order runs by MAP@k")
    select.add_argument("--m", type=int, default=None, help="number of runs to keep")
    demo = sub.add_parser("demo-data", parents=[common], help="write a synthetic collection")
    demo.add_argument("--queries", type=int, default=10)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    file_values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_values = json.load(fh)
        if not isinstance(file_values, dict):
            raise SystemExit("config file must hold a JSON object")
        unknown = set(file_values) - set(DEFAULTS)
        if unknown:
            raise SystemExit(f"unknown config keys: {', '.join(sorted(unknown))}")
    opts = {}
    for key, default in DEFAULTS.items():
        value = getattr(args, key, None)
        if value is None:
            value = file_values.get(key, default)
        opts[key] = value
    return opts


def _config(opts: dict) -> ExperimentConfig:
    method = opts["method"]
    if method.lower() not in METHODS:
        raise SystemExit(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    return ExperimentConfig(
        method=method.lower(),
        grid=SweepGrid(tuple(opts["grid_lambda"]), tuple(opts["grid_alpha"]), opts["k"]),
        runs=tuple(opts["runs"]),
        corpus=opts["corpus"],
        qrels=opts["qrels"],
        stopwords=opts["stopwords"],
        stem=opts["stem"],
        mu=opts["mu"],
        collection_stats=opts["collection_stats"],
        seed=opts["seed"],
        samples=opts["samples"],
        solver=opts["solver"],
    )


def _emit(opts: dict, name: str, text: str) -> None:
    out = opts["out"]
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text, encoding="utf-8")


def _write_csv(opts: dict, name: str, rows) -> None:
    if opts["out"]:
        buf = io.StringIO()
        write_report_csv(rows, buf)
        _emit(opts, name, buf.getvalue())


def _context(config: ExperimentConfig, need_corpus: bool):
    data = load_experiment(config, need_corpus=need_corpus)
    stats = data.stats if config.collection_stats == "corpus" else None
    tasks = prepare_tasks(
        list(data.runs.values()), data.qrels, config.grid.k, data.vectors, stats, SmoothingParams(config.mu)
    )
    return data, tasks


def _reference_reports(data, tasks, k: int, baselines: Sequence[str]) -> dict[str, EvalReport]:
    queries = [t.query_id for t in tasks]
    reports = {}
    for tag, run in data.runs.items():
        rankings = {q: truncate(run[q], k) for q in queries if q in run}
        reports[tag] = evaluate(rankings, data.qrels, k, tag, queries)
    for name in baselines:
        fused = {t.query_id: BASELINE_METHODS[name](t.lists) for t in tasks}
        reports[name] = evaluate(fused, data.qrels, k, name, queries)
    return reports


def _fmt_point(point) -> str:
    lam, alpha = point
    return "-" if lam is None else f"lambda={lam:g} alpha={alpha}"


def cmd_fuse(opts: dict) -> int:
    config = _config(opts)
    needs = config.method in METHODS and config.method not in BASELINE_METHODS
    data, tasks = _context(config, needs)
    point = (opts["lambda"], opts["alpha"]) if needs else (None, None)
    rankings = fused_rankings(tasks, config.method, point, config.solver)
    tag = opts["run_tag"] or f"simfuse-{config.method}"
    ordered = [rankings[q] for q in sorted(rankings) if len(rankings[q])]
    if opts["out"]:
        with open(opts["out"], "w", encoding="utf-8") as fh:
            write_runs(ordered, tag, fh)
    else:
        write_runs(ordered, tag, sys.stdout)
    return 0


def cmd_eval(opts: dict) -> int:
    if not opts["runs"] or not opts["qrels"]:
        raise SystemExit("eval needs --runs and --qrels")
    qrels = read_qrels(opts["qrels"])
    runs = {}
    for path in opts["runs"]:
        run = read_run(path)
        tag = next((lst.run_tag for lst in run.values()), Path(path).stem)
        runs[tag if tag not in runs else f"{tag}:{Path(path).stem}"] = run
    queries = sorted(set(qrels.judgments) & set().union(*(set(r) for r in runs.values())))
    reports = {
        tag: evaluate({q: truncate(run[q], opts["k"]) for q in queries if q in run}, qrels, opts["k"], tag, queries)
        for tag, run in runs.items()
    }
    compare = list(reports)
    text = summary_text(reports, compare)
    sys.stdout.write(text)
    if opts["out"]:
        buf = io.StringIO()
        write_report_csv(report_rows(reports, compare), buf)
        Path(opts["out"]).write_text(buf.getvalue(), encoding="utf-8")
    return 0


def _grid_rows(result_table, queries) -> list[dict]:
    rows = []
    for point, per_query in result_table.items():
        lam, alpha = point
        row = {"lambda": "" if lam is None else lam, "alpha": "" if alpha is None else alpha}
        for metric in ("p@5", "p@10", "map"):
            vals = [per_query[q][metric] for q in queries]
            row[metric] = sum(vals) / len(vals) if vals else 0.0
        rows.append(row)
    return rows


def _experiment(opts: dict, kind: str) -> int:
    config = _config(opts)
    data, tasks = _context(config, config.method not in BASELINE_METHODS)
    if not tasks:
        raise SystemExit("no query has both judgments and retrieved documents")
    baselines = [b for b in opts["baselines"] if b != config.method]
    table = evaluate_grid(tasks, data.qrels, config.method, config.grid, config.solver)
    result = sweep(tasks, data.qrels, config.method, config.grid, table=table)
    queries = result.queries
    reports = _reference_reports(data, tasks, config.grid.k, baselines)
    header = [f"method: {config.method}", f"queries: {len(queries)}"]
    if kind == "sweep":
        reports[config.method] = result.report(config.method, config.grid.k)
        header.append(f"selected: {_fmt_point(result.best)}")
        best = fused_rankings(tasks, config.method, result.best, config.solver)
        if opts["out"]:
            buf = io.StringIO()
            write_runs([best[q] for q in sorted(best)], opts["run_tag"] or f"simfuse-{config.method}", buf)
            _emit(opts, "fused.run", buf.getvalue())
    elif kind == "cv":
        cv = loo_cross_validation(tasks, data.qrels, config.method, config.grid, table=table)
        reports[f"{config.method}-cv"] = cv.report(f"{config.method}-cv", config.grid.k)
        header.append("per-query settings:")
        header += [f"  {q}: {_fmt_point(p)}" for q, p in sorted(cv.chosen.items())]
    elif kind == "oracle":
        reports[config.method] = result.report(config.method, config.grid.k)
        oracle = per_query_upper_bound(tasks, data.qrels, config.method, config.grid, table=table)
        reports[f"{config.method}-oracle"] = oracle.report(f"{config.method}-oracle", config.grid.k)
        header.append(f"global setting: {_fmt_point(result.best)}")
    compare = list(data.runs) + baselines
    text = "\n".join(header) + "\n" + summary_text(reports, compare)
    sys.stdout.write(text)
    _emit(opts, "summary.txt", text)
    _write_csv(opts, "report.csv", report_rows(reports, compare))
    _write_csv(opts, "grid.csv", _grid_rows(table, queries))
    return 0


def cmd_sample(opts: dict) -> int:
    methods = _names(opts["method"]) if isinstance(opts["method"], str) else list(opts["method"])
    if methods == ["bagdupmnz"] and "method" not in opts.get("_explicit", ()):
        methods = ["combsum", "bagsum", "combmnz", "bagdupmnz"]
    for m in methods:
        if m not in METHODS:
            raise SystemExit(f"unknown method {m!r}")
    config = _config({**opts, "method": methods[0]})
    needs = any(m not in BASELINE_METHODS for m in methods)
    data = load_experiment(config, need_corpus=needs)
    if config.collection_stats == "pool":
        data.stats = None
    triplets, reports = random_run_experiment(
        data, methods, config.grid, config.seed, config.samples, SmoothingParams(config.mu), solver=config.solver
    )
    compare = ["run1", "run2", "run3"]
    pairs = {"bagsum": "combsum", "bagdupmnz": "combmnz"}
    lines = [f"samples: {len(triplets)} (seed {config.seed})"]
    lines += [f"  {i + 1:2d}: {' '.join(t)}" for i, t in enumerate(triplets)]
    text = "\n".join(lines) + "\n" + summary_text(reports, compare + [m for m in methods if m in pairs.values()])
    sys.stdout.write(text)
    _emit(opts, "summary.txt", text)
    _emit(opts, "triplets.txt", "".join(" ".join(t) + "\n" for t in triplets))
    _write_csv(opts, "report.csv", report_rows(reports, compare))
    return 0


def cmd_overlap(opts: dict) -> int:
    config = _config(opts)
    data = load_experiment(config, need_corpus=False)
    k = config.grid.k
    if opts["random_triplets"]:
        groups = random_triplets(data.runs, config.seed, config.samples, data.qrels, k)
    else:
        groups = [tuple(data.runs)]
    rel_rows, non_rows, curves = [], [], []
    for group in groups:
        runs = [data.runs[t] for t in group]
        queries = [q for q in data.qrels.query_ids if any(q in r for r in runs)]
        reps = []
        for q in queries:
            lists = [truncate(r[q], k) for r in runs if q in r]
            reps.append(overlap_analysis(lists, data.qrels))
        rel, non = mean_overlap(reps)
        rel_rows.append(rel)
        non_rows.append(non)
        per_k = {}
        for q in queries:
            lists = [r[q] for r in runs if q in r]
            for kk, pct in singleton_relevant_curve(lists, data.qrels, opts["k_values"]):
                if not math.isnan(pct):
                    per_k.setdefault(kk, []).append(pct)
        curves.append({kk: sum(v) / len(v) for kk, v in per_k.items()})

    def avg(rows):
        rows = [r for r in rows if r is not None]
        return tuple(sum(c) / len(c) for c in zip(*rows)) if rows else None

    rel, non = avg(rel_rows), avg(non_rows)
    m = len(groups[0])
    lines = [
        f"run sets: {len(groups)}, k={k}",
        "% of documents found in exactly n runs",
        "n              " + "".join(f"{i:>8d}" for i in range(1, m + 1)),
    ]
    for name, row in (("relevant", rel), ("non-relevant", non)):
        cells = "".join(f"{v:8.1f}" for v in row) if row else "     n/a"
        lines.append(f"{name:<15}{cells}")
    lines.append("relevant in exactly one run, by k:")
    for kk in opts["k_values"]:
        vals = [c[kk] for c in curves if kk in c]
        lines.append(f"  k={kk:<4d} {sum(vals) / len(vals):6.1f}" if vals else f"  k={kk:<4d}    n/a")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    _emit(opts, "overlap.txt", text)
    return 0


def cmd_select_runs(opts: dict) -> int:
    config = _config(opts)
    data = load_experiment(config, need_corpus=False)
    chosen = select_runs_by_map(data.runs, data.qrels, config.grid.k, opts["m"])
    lines = [f"run{i}\t{tag}\t{map_at_k(data.runs[tag], data.qrels, config.grid.k):.4f}" for i, tag in enumerate(chosen, 1)]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    _emit(opts, "selected.txt", text)
    return 0


def cmd_demo_data(opts: dict, queries: int) -> int:
    from simfuse.synthetic import make_collection

    if not opts["out"]:
        raise SystemExit("demo-data needs --out <directory>")
    coll = make_collection(seed=opts["seed"], n_queries=queries)
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "corpus.jsonl", "w", encoding="utf-8") as fh:
        corpus_mod.write_corpus(coll.docs.values(), fh)
    with open(out / "qrels.txt", "w", encoding="utf-8") as fh:
        write_qrels(coll.qrels, fh)
    for i, run in enumerate(coll.runs, start=1):
        with open(out / f"run{i}.txt", "w", encoding="utf-8") as fh:
            for qid in sorted(run):
                lst = run[qid]
                for e in lst.entries:
                    fh.write(f"{qid} Q0 {e.doc_id} {e.rank} {e.score:.6g} {lst.run_tag}\n")
    print(f"wrote {len(coll.docs)} documents, {len(coll.runs)} runs and qrels to {out}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    opts = resolve(args)
    opts["_explicit"] = {k for k in DEFAULTS if getattr(args, k, None) is not None}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            opts["_explicit"] |= set(json.load(fh))
    command = args.command
    if command == "fuse":
        return cmd_fuse(opts)
    if command == "eval":
        return cmd_eval(opts)
    if command in ("sweep", "cv", "oracle"):
        return _experiment(opts, command)
    if command == "sample":
        return cmd_sample(opts)
    if command == "overlap":
        return cmd_overlap(opts)
    if command == "select-runs":
        return cmd_select_runs(opts)
    if command == "demo-data":
        return cmd_demo_data(opts, args.queries)
    parser.error(f"unknown command {command}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
