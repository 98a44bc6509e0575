"""Command-line driver wiring the toolkit into reproducible experiments.

Subcommands: synth | ingest | mine | plan | train | eval | ablate | report.
Exit codes: 0 success, 1 usage error, 2 data error. Every subcommand
accepts --config pointing at a flat key=value file; explicit flags win
over config values. All randomness flows from explicit seeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .batcher import BatchConfig, build_epoch_plan, build_random_plan
from .corpus import Corpus, CorpusError, filter_min_words, load_corpus, save_corpus
from .evalkit import MetricsReport, average_runs, build_task, evaluate
from .miner import MinerConfig, TrainingPair, select_training_pairs
from .synth import SynthConfig, generate
from .trainer import (
    ProjectionModel,
    TrainConfig,
    epoch_vectors,
    load_model,
    run_training,
    save_history,
    save_model,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage problems instead of exiting."""

    def error(self, message):
        raise UsageError(message)


def _read_config(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    config: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read config file {path}: {exc}") from exc
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CorpusError(f"config line {line_no}: expected key = value")
        key, value = line.split("=", 1)
        config[key.strip().replace("-", "_")] = value.strip()
    return config


def _resolve(args: argparse.Namespace, config: dict[str, str], key: str, default, cast):
    """Flag if given, else config-file value, else default."""
    flag_value = getattr(args, key)
    if flag_value is not None:
        return flag_value
    if key in config:
        return cast(config[key])
    return default


def _load_pairs(path: str) -> list[TrainingPair]:
    pairs = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CorpusError(f"cannot read pairs file {path}: {exc}") from exc
    for line_no, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
            pairs.append(
                TrainingPair(
                    author_id=obj["author_id"],
                    doc_a=obj["doc_a"],
                    doc_b=obj["doc_b"],
                    base_similarity=float(obj["base_similarity"]),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"pairs file line {line_no}: {exc}") from exc
    return pairs


def _write_pairs(pairs, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(
                json.dumps(
                    {
                        "author_id": p.author_id,
                        "doc_a": p.doc_a,
                        "doc_b": p.doc_b,
                        "base_similarity": p.base_similarity,
                    }
                )
                + "\n"
            )


def _write_plan(plan, path) -> None:
    cfg = plan.config
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(
            f"# epoch={plan.epoch} seed={cfg.seed} batch_size={cfg.batch_size}"
            f" clusters_per_batch={cfg.clusters_per_batch}"
            f" neighbor_cap={cfg.neighbor_cap} source={plan.source}\n"
        )
        for batch in plan.batches:
            fh.write(" ".join(batch) + "\n")


def _write_metrics(records, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def _genre_breakdown(report: MetricsReport, task, corpus: Corpus) -> dict[str, dict]:
    """Aggregate per query genre (the genre of each query's documents)."""
    genre_of_query = {
        qid: corpus[docs[0]].genre for qid, _, docs in task.queries
    }
    grouped: dict[str, list[dict]] = {}
    for q in report.per_query:
        grouped.setdefault(genre_of_query[q["query_id"]], []).append(q)
    return {
        genre: {
            "success_at_8": float(np.mean([q["success_at_8"] for q in qs])),
            "mrr": float(np.mean([q["mrr"] for q in qs])),
            "num_queries": len(qs),
        }
        for genre, qs in sorted(grouped.items())
    }


def _print_table(rows: list[dict], columns: list[str]) -> None:
    widths = {c: max(len(c), *(len(str(r.get(c, ""))) for r in rows)) for c in columns}
    header = "  ".join(c.ljust(widths[c]) for c in columns)
    print(header)
    print("-" * len(header))
    for r in rows:
        print("  ".join(str(r.get(c, "")).ljust(widths[c]) for c in columns))


def _fmt(x: float) -> str:
    return f"{x:.4f}"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_synth(args, config) -> int:
    synth_config = SynthConfig(
        num_authors=_resolve(args, config, "authors", 100, int),
        docs_per_author=_resolve(args, config, "docs_per_author", 4, int),
        num_topics=_resolve(args, config, "topics", 4, int),
        dim=_resolve(args, config, "dim", 16, int),
        style_weight=_resolve(args, config, "style_weight", 0.6, float),
        noise_sigma=_resolve(args, config, "noise_sigma", 0.05, float),
        topics_per_author=_resolve(args, config, "topics_per_author", 2, int),
        seed=_resolve(args, config, "seed", 0, int),
    )
    corpus = generate(synth_config)
    save_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} documents / {len(corpus.author_index)} authors to {args.out}")
    return EXIT_OK


def _cmd_ingest(args, config) -> int:
    corpus = load_corpus(args.corpus)
    min_words = _resolve(args, config, "min_words", 350, int)
    filtered = filter_min_words(corpus, min_words)
    save_corpus(filtered, args.out)
    print(
        f"loaded {len(corpus)} documents, kept {len(filtered)} with more than"
        f" {min_words} words ({len(filtered.author_index)} authors)"
    )
    return EXIT_OK


def _cmd_mine(args, config) -> int:
    corpus = load_corpus(args.corpus)
    min_words = _resolve(args, config, "min_words", 350, int)
    corpus = filter_min_words(corpus, min_words)
    miner_config = MinerConfig(
        mode=_resolve(args, config, "mode", "hard", str),
        ceiling=_resolve(args, config, "ceiling", 0.2, float),
        seed=_resolve(args, config, "seed", 0, int),
    )
    pairs = select_training_pairs(corpus, miner_config)
    _write_pairs(pairs, args.out)
    print(
        f"selected {len(pairs)} pairs from"
        f" {sum(1 for a in corpus.author_index.values() if len(a) >= 2)}"
        f" multi-document authors (mode={miner_config.mode})"
    )
    return EXIT_OK


def _batch_config(args, config) -> BatchConfig:
    return BatchConfig(
        batch_size=_resolve(args, config, "batch_size", 74, int),
        clusters_per_batch=_resolve(args, config, "clusters_per_batch", 5, int),
        neighbor_cap=_resolve(args, config, "neighbor_cap", 2024, int),
        seed=_resolve(args, config, "batch_seed", 0, int),
    )


def _cmd_plan(args, config) -> int:
    corpus = load_corpus(args.corpus)
    pairs = _load_pairs(args.pairs)
    if not pairs:
        raise CorpusError("pairs file is empty")
    batch_config = _batch_config(args, config)
    epoch = _resolve(args, config, "epoch", 1, int)
    batching = _resolve(args, config, "batching", "hard", str)
    if batching == "hard":
        if args.model:
            model, _ = load_model(args.model)
        else:
            model = ProjectionModel.initialize(
                corpus.dimension, _resolve(args, config, "model_seed", 42, int)
            )
        vectors = epoch_vectors(model, pairs, corpus)
        plan = build_epoch_plan(pairs, vectors, batch_config, epoch)
    elif batching == "random":
        plan = build_random_plan(pairs, batch_config, epoch)
    else:
        raise UsageError(f"unknown batching {batching!r}")
    _write_plan(plan, args.out)
    print(f"planned {len(plan.batches)} batches for {len(plan.all_authors())} authors")
    return EXIT_OK


def _train_config(args, config, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=_resolve(args, config, "epochs", 4, int),
        shards_per_step=_resolve(args, config, "shards_per_step", 4, int),
        temperature=_resolve(args, config, "temperature", 0.07, float),
        learning_rate=_resolve(args, config, "learning_rate", 1e-3, float),
        seed=seed,
    )


def _parse_seeds(raw: str) -> list[int]:
    try:
        return [int(s) for s in raw.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"bad seed list {raw!r}") from exc


def _cmd_train(args, config) -> int:
    corpus = load_corpus(args.corpus)
    pairs = _load_pairs(args.pairs)
    if not pairs:
        raise CorpusError("pairs file is empty")
    val_corpus = load_corpus(args.val_corpus)
    val_task = build_task(
        val_corpus,
        _resolve(args, config, "val_mode", "per_genre", str),
        _resolve(args, config, "val_seed", 0, int),
    )
    batch_config = _batch_config(args, config)
    batching = _resolve(args, config, "batching", "hard", str)
    seeds = _parse_seeds(_resolve(args, config, "seeds", "42,1234", str))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    for seed in seeds:
        train_config = _train_config(args, config, seed)
        best, history = run_training(
            corpus,
            pairs,
            batch_config,
            train_config,
            val_task,
            validation_corpus=val_corpus,
            batching=batching,
        )
        model_path = out_dir / f"model-seed{seed}.bin"
        save_model(
            best.model,
            model_path,
            epoch=best.epoch,
            seed=seed,
            temperature=train_config.temperature,
            learning_rate=train_config.learning_rate,
        )
        save_history(history, out_dir / f"history-seed{seed}.jsonl")
        for state in history:
            print(
                f"seed {seed} epoch {state.epoch}: loss {state.mean_train_loss:.4f}"
                f" val-success@8 {state.validation_score:.4f} [{state.plan_source}]"
            )
        print(f"seed {seed}: best epoch {best.epoch} -> {model_path}")
    return EXIT_OK


def _cmd_eval(args, config) -> int:
    corpus = load_corpus(args.corpus)
    model_paths = [p for p in args.models.split(",") if p.strip()]
    if not model_paths:
        raise UsageError("no model checkpoints given")
    models = [load_model(p)[0] for p in model_paths]
    modes = [
        m.strip()
        for m in _resolve(args, config, "modes", "per_genre,cross_genre", str).split(",")
        if m.strip()
    ]
    seed = _resolve(args, config, "seed", 0, int)

    records: list[dict] = []
    table_rows: list[dict] = []
    for mode in modes:
        task = build_task(corpus, mode, seed)
        reports = [evaluate(model, corpus, task) for model in models]
        combined = average_runs(reports)
        records.append(
            {
                "kind": "aggregate",
                "mode": mode,
                "success_at_8": combined.success_at_8,
                "mrr": combined.mrr,
                "num_queries": combined.num_queries,
                "models": model_paths,
            }
        )
        table_rows.append(
            {
                "row": mode,
                "success@8": _fmt(combined.success_at_8),
                "mrr": _fmt(combined.mrr),
                "queries": combined.num_queries,
            }
        )
        for genre, stats in _genre_breakdown(combined, task, corpus).items():
            records.append({"kind": "genre", "mode": mode, "genre": genre, **stats})
            table_rows.append(
                {
                    "row": f"{mode}/{genre}",
                    "success@8": _fmt(stats["success_at_8"]),
                    "mrr": _fmt(stats["mrr"]),
                    "queries": stats["num_queries"],
                }
            )
        for q in combined.per_query:
            records.append({"kind": "query", "mode": mode, **q})
    if args.out:
        _write_metrics(records, args.out)
    _print_table(table_rows, ["row", "success@8", "mrr", "queries"])
    return EXIT_OK


def _cmd_ablate(args, config) -> int:
    corpus = load_corpus(args.corpus)
    corpus = filter_min_words(corpus, _resolve(args, config, "min_words", 350, int))
    val_corpus = load_corpus(args.val_corpus)
    test_corpus = load_corpus(args.test_corpus)
    val_task = build_task(
        val_corpus,
        _resolve(args, config, "val_mode", "per_genre", str),
        _resolve(args, config, "val_seed", 0, int),
    )
    eval_seed = _resolve(args, config, "seed", 0, int)
    modes = [
        m.strip()
        for m in _resolve(args, config, "modes", "per_genre,cross_genre", str).split(",")
        if m.strip()
    ]
    tasks = {mode: build_task(test_corpus, mode, eval_seed) for mode in modes}
    seeds = _parse_seeds(_resolve(args, config, "seeds", "42,1234", str))

    ceilings = (
        [float(c) for c in args.ceilings.split(",") if c.strip()] if args.ceilings else [None]
    )
    cluster_counts = (
        [int(c) for c in args.cluster_counts.split(",") if c.strip()]
        if args.cluster_counts
        else [None]
    )
    pair_modes = [m for m in (args.pair_modes or "hard").split(",") if m.strip()]
    batchings = [b for b in (args.batchings or "hard").split(",") if b.strip()]

    base_batch = _batch_config(args, config)
    records: list[dict] = []
    table_rows: list[dict] = []
    for pair_mode in pair_modes:
        for ceiling in ceilings:
            miner_config = MinerConfig(
                mode=pair_mode,
                ceiling=ceiling if ceiling is not None else 0.2,
                seed=_resolve(args, config, "miner_seed", 0, int),
            )
            pairs = select_training_pairs(corpus, miner_config)
            if not pairs:
                raise CorpusError(
                    f"no training pairs for pair_mode={pair_mode} ceiling={ceiling}"
                )
            for batching in batchings:
                for cluster_count in cluster_counts:
                    batch_config = (
                        base_batch
                        if cluster_count is None
                        else BatchConfig(
                            batch_size=base_batch.batch_size,
                            clusters_per_batch=cluster_count,
                            neighbor_cap=base_batch.neighbor_cap,
                            seed=base_batch.seed,
                        )
                    )
                    reports_by_mode = {mode: [] for mode in modes}
                    for seed in seeds:
                        train_config = _train_config(args, config, seed)
                        best, _ = run_training(
                            corpus,
                            pairs,
                            batch_config,
                            train_config,
                            val_task,
                            validation_corpus=val_corpus,
                            batching=batching,
                        )
                        for mode in modes:
                            reports_by_mode[mode].append(
                                evaluate(best.model, test_corpus, tasks[mode])
                            )
                    for mode in modes:
                        combined = average_runs(reports_by_mode[mode])
                        row = {
                            "kind": "ablation",
                            "pair_mode": pair_mode,
                            "ceiling": ceiling,
                            "batching": batching,
                            "clusters_per_batch": batch_config.clusters_per_batch,
                            "num_authors": len(pairs),
                            "mode": mode,
                            "success_at_8": combined.success_at_8,
                            "mrr": combined.mrr,
                            "seeds": seeds,
                        }
                        records.append(row)
                        table_rows.append(
                            {
                                "pairs": pair_mode
                                + (f"<={ceiling}" if ceiling is not None and pair_mode == "hard" else ""),
                                "batching": batching,
                                "C": batch_config.clusters_per_batch,
                                "#auth": len(pairs),
                                "mode": mode,
                                "success@8": _fmt(combined.success_at_8),
                                "mrr": _fmt(combined.mrr),
                            }
                        )
    _write_metrics(records, args.out)
    _print_table(table_rows, ["pairs", "batching", "C", "#auth", "mode", "success@8", "mrr"])
    return EXIT_OK


def _cmd_report(args, config) -> int:
    rows: list[dict] = []
    for path in args.metrics:
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise CorpusError(f"cannot read metrics file {path}: {exc}") from exc
        for raw in lines:
            if not raw.strip():
                continue
            record = json.loads(raw)
            if record.get("kind") in ("aggregate", "ablation", "genre"):
                record["file"] = path
                rows.append(record)
    if not rows:
        raise CorpusError("no aggregate records found in metrics files")
    columns = ["file", "kind", "mode", "pair_mode", "ceiling", "batching", "genre"]
    columns = [c for c in columns if any(c in r for r in rows)]
    display = []
    for r in rows:
        d = {c: r.get(c, "") for c in columns}
        d["success@8"] = _fmt(r["success_at_8"])
        d["mrr"] = _fmt(r["mrr"])
        display.append(d)
    _print_table(display, columns + ["success@8", "mrr"])
    if args.out:
        summary = {
            "kind": "summary",
            "num_rows": len(rows),
            "rows": rows,
        }
        with Path(args.out).open("w", encoding="utf-8") as fh:
            fh.write(json.dumps(summary) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="stylo", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def add_common(p):
        p.add_argument("--config", help="flat key=value config file; flags win")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--authors", type=int)
    p.add_argument("--docs-per-author", dest="docs_per_author", type=int)
    p.add_argument("--topics", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--style-weight", dest="style_weight", type=float)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--topics-per-author", dest="topics_per_author", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("ingest", help="validate and filter a corpus file")
    add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-words", dest="min_words", type=int)

    p = sub.add_parser("mine", help="select one training pair per author")
    add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["hard", "random"])
    p.add_argument("--ceiling", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--min-words", dest="min_words", type=int)

    p = sub.add_parser("plan", help="build one epoch's batch plan")
    add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", help="projection checkpoint for epoch vectors")
    p.add_argument("--model-seed", dest="model_seed", type=int)
    p.add_argument("--epoch", type=int)
    p.add_argument("--batching", choices=["hard", "random"])
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--clusters-per-batch", dest="clusters_per_batch", type=int)
    p.add_argument("--neighbor-cap", dest="neighbor_cap", type=int)
    p.add_argument("--batch-seed", dest="batch_seed", type=int)

    p = sub.add_parser("train", help="train projection models")
    add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--val-corpus", dest="val_corpus", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--val-mode", dest="val_mode", choices=["per_genre", "cross_genre"])
    p.add_argument("--val-seed", dest="val_seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--shards-per-step", dest="shards_per_step", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--seeds", help="comma-separated training seeds")
    p.add_argument("--batching", choices=["hard", "random"])
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--clusters-per-batch", dest="clusters_per_batch", type=int)
    p.add_argument("--neighbor-cap", dest="neighbor_cap", type=int)
    p.add_argument("--batch-seed", dest="batch_seed", type=int)

    p = sub.add_parser("eval", help="evaluate checkpoints on retrieval tasks")
    add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--models", required=True, help="comma-separated checkpoints")
    p.add_argument("--out")
    p.add_argument("--modes", help="comma-separated: per_genre,cross_genre")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("ablate", help="sweep mining/batching configurations")
    add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--val-corpus", dest="val_corpus", required=True)
    p.add_argument("--test-corpus", dest="test_corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ceilings", help="comma-separated similarity ceilings")
    p.add_argument("--cluster-counts", dest="cluster_counts", help="comma-separated C values")
    p.add_argument("--pair-modes", dest="pair_modes", help="comma-separated: hard,random")
    p.add_argument("--batchings", help="comma-separated: hard,random")
    p.add_argument("--modes", help="comma-separated eval modes")
    p.add_argument("--seeds", help="comma-separated training seeds")
    p.add_argument("--seed", type=int, help="task construction seed")
    p.add_argument("--val-mode", dest="val_mode", choices=["per_genre", "cross_genre"])
    p.add_argument("--val-seed", dest="val_seed", type=int)
    p.add_argument("--miner-seed", dest="miner_seed", type=int)
    p.add_argument("--min-words", dest="min_words", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--shards-per-step", dest="shards_per_step", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--clusters-per-batch", dest="clusters_per_batch", type=int)
    p.add_argument("--neighbor-cap", dest="neighbor_cap", type=int)
    p.add_argument("--batch-seed", dest="batch_seed", type=int)

    p = sub.add_parser("report", help="render metric files as tables")
    add_common(p)
    p.add_argument("metrics", nargs="+", help="metric record files")
    p.add_argument("--out", help="machine-readable summary record")

    return parser


_HANDLERS = {
    "synth": _cmd_synth,
    "ingest": _cmd_ingest,
    "mine": _cmd_mine,
    "plan": _cmd_plan,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "report": _cmd_report,
}


def run_subcommand(argv) -> int:
    """Execute one subcommand; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            print(parser.format_usage(), file=sys.stderr)
            return EXIT_USAGE
        config = _read_config(getattr(args, "config", None))
        return _HANDLERS[args.command](args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run_subcommand(sys.argv[1:]))


if __name__ == "__main__":
    main()
