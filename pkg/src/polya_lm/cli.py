"""Command-line interface: ``polya-lm <subcommand>``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiment as ex
from ._validation import MODEL_VARIANTS
from .corpus import CranfieldParseError, parse_qrels

log = logging.getLogger("polya_lm")

# flag name -> config key
_FLAGS = {
    "docs": "docs", "queries": "queries", "qrels": "qrels", "name": "name", "out": "out_dir",
    "seed": "seed", "scale": "scale", "stopwords": "stopwords",
    "samples": "bg_samples", "burn_in": "bg_burn_in", "sigma": "bg_sigma",
    "doc_samples": "doc_samples", "doc_burn_in": "doc_burn_in", "doc_sigma": "doc_sigma",
    "thin": "thin", "block_size": "block_size", "doc_block_size": "doc_block_size", "mode": "mode",
    "mu": "mu", "mu_sweep": "mu_sweep", "top_k": "top_k", "run_tag": "run_tag",
    "permutations": "n_permutations", "jobs": "n_jobs",
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--collection", choices=sorted(ex.STANDARD_COLLECTIONS),
                   help="use the standard file names under $POLYA_DATA_DIR/<collection>/")
    p.add_argument("--docs", help="Cranfield-format document file")
    p.add_argument("--queries", help="Cranfield-format query file")
    p.add_argument("--qrels", help="relevance judgements")
    p.add_argument("--name", help="collection name used in tables")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--scale", type=float, help="multiply all chain lengths by this factor")
    p.add_argument("--stopwords", help="stopword file (default: bundled SMART list)")
    p.add_argument("--include-title", action="store_true", default=None, help="index .T titles too")
    p.add_argument("--renumber-queries", action="store_true", default=None,
                   help="number queries 1..n in file order (Cranfield qrels convention)")
    p.add_argument("--samples", type=int, help="background chain length")
    p.add_argument("--burn-in", type=int, help="background burn-in")
    p.add_argument("--sigma", type=float, help="background proposal std-dev (log space)")
    p.add_argument("--doc-samples", type=int)
    p.add_argument("--doc-burn-in", type=int)
    p.add_argument("--doc-sigma", type=float)
    p.add_argument("--thin", type=int)
    p.add_argument("--block-size", type=int, help="background proposal block size")
    p.add_argument("--doc-block-size", type=int, help="document proposal block size")
    p.add_argument("--mode", choices=("joint", "blockwise"))
    p.add_argument("--jacobian", action="store_true", default=None,
                   help="uniform prior on parameters rather than on their logs")
    p.add_argument("--mu", type=float)
    p.add_argument("--mu-sweep", help="comma-separated mu values")
    p.add_argument("--top-k", type=int)
    p.add_argument("--run-tag")
    p.add_argument("--permutations", type=int)
    p.add_argument("--jobs", type=int, help="worker processes for document estimation")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polya-lm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("ingest", "parse and preprocess a collection; print its statistics"),
        ("estimate", "fit background and document models"),
        ("retrieve", "rank documents for every query and write TREC runs"),
        ("sweep", "MAP for each value of --mu-sweep"),
        ("evaluate", "perplexity, tuned MAP and significance tables, or score a run file"),
        ("reproduce", "run every stage for every variant"),
    ]:
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name in ("estimate", "retrieve", "sweep", "evaluate"):
            p.add_argument("--variant", action="append", choices=MODEL_VARIANTS,
                           help="model variant (repeatable; default: all configured)")
        if name == "evaluate":
            p.add_argument("--run", help="score this TREC run file against --qrels and exit")
    return parser


def config_from_args(args: argparse.Namespace) -> ex.ExperimentConfig:
    overrides = {}
    for flag, key in _FLAGS.items():
        val = getattr(args, flag, None)
        if val is not None:
            overrides[key] = val
    for flag in ("include_title", "renumber_queries", "jacobian"):
        if getattr(args, flag, None):
            overrides[flag] = True
    if getattr(args, "collection", None):
        preset = ex.standard_config(args.collection)
        base = {k: getattr(preset, k) for k in ("name", "out_dir", "docs", "queries", "qrels", "renumber_queries")}
        overrides = {**base, **overrides}
    text = Path(args.config).read_text() if args.config else ""
    return ex.ExperimentConfig.from_text(text, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        variants = tuple(getattr(args, "variant", None) or cfg.variants)
        if args.command == "ingest":
            ex.ingest(cfg)
            sys.stdout.write((cfg.out / "collection.tsv").read_text())
        elif args.command == "estimate":
            corpus = ex.load_corpus(cfg)
            for v in variants:
                ex.estimate(cfg, v, corpus)
                sys.stdout.write(f"{v}\t{cfg.model_dir(v)}\n")
        elif args.command == "retrieve":
            mus = cfg.mu_sweep if args.mu_sweep else (cfg.mu,)
            for v in variants:
                ex.retrieve(cfg, v, mus)
                for mu in mus:
                    sys.stdout.write(f"{v}\t{cfg.run_path(v, mu)}\n")
        elif args.command == "sweep":
            for v in variants:
                table, _ = ex.sweep(cfg, v)
                best = max(table, key=lambda r: r[1])
                for mu, m in table:
                    mark = "\t*" if (mu, m) == best else ""
                    sys.stdout.write(f"{v}\t{mu:g}\t{m:.4f}{mark}\n")
        elif args.command == "evaluate":
            if args.run:
                if not cfg.qrels:
                    raise ex.StageError("--run needs --qrels")
                qrels = parse_qrels(cfg.resolve(cfg.qrels).read_text())
                mean, aps = ex.evaluate_run(args.run, qrels)
                for q, ap in sorted(aps.items(), key=lambda kv: ex._id_key(kv[0])):
                    sys.stdout.write(f"map\t{q}\t{ap:.4f}\n")
                sys.stdout.write(f"map\tall\t{mean:.4f}\n")
            else:
                ex.evaluate(cfg, variants)
                _print_tables(cfg)
        elif args.command == "reproduce":
            ex.reproduce(cfg)
            _print_tables(cfg)
    except (ex.StageError, CranfieldParseError, ValueError, OSError) as exc:
        sys.stderr.write(f"polya-lm {args.command}: error: {exc}\n")
        return 2
    return 0


def _print_tables(cfg: ex.ExperimentConfig) -> None:
    for name in ("perplexity.tsv", "map.tsv", "significance.tsv", "burstiness.tsv"):
        path = cfg.out / name
        if path.is_file():
            sys.stdout.write(f"# {name}\n{path.read_text()}")


if __name__ == "__main__":
    raise SystemExit(main())
