"""Command-line front end.

One executable with nested subcommands covering the full path from
corpus generation to evaluation reports. Every run is reproducible: all
randomness derives from the configured root seed, and rerunning a
command with the same inputs rewrites byte-identical delimited output.

Errors from library code exit with status 2 and a single line on stderr
of the form ``error: <ExceptionClass>: <message>``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import torch

from .checkpoint import load_autoencoder, save_autoencoder, save_model
from .composite import write_ae_trace
from .config import Config, load_config, substream
from .errors import ConevecError, EmptyIndex
from .figures import (
    plot_audit_scatter,
    plot_probe_bars,
    plot_retrieval_bars,
    plot_rotation_bars,
    plot_trace,
)
from .fusion import write_trace
from .index import FlatIndex
from .metrics import load_ground_truth, per_query_scores
from .pipeline import (
    audit_suite,
    default_rotation,
    embed_corpus,
    ingest_corpus,
    load_numeric_model,
    probe_suite,
    query_by_id,
    retrieval_eval,
    save_embeddings,
    train_numeric_model,
    train_projection,
)
from .reports import (
    write_audit_report,
    write_per_query_report,
    write_probe_report,
    write_query_result,
    write_retrieval_report,
    write_rotation_report,
)
from .synthgen import SyntheticCorpusSpec, gen_corpus
from .tables import read_corpus
from .units import load_units

_AUDIT_KINDS = ("numbers", "ranges", "gaussians")
_PROBE_TASKS = ("list_max", "decode", "add")

# Config fields exposed as override flags on every subcommand.
_OVERRIDE_FLAGS = (
    "seed", "d", "d_c", "heads", "layers", "max_len",
    "mag_lo", "mag_hi", "vocab_capacity", "hash_buckets",
    "steps", "batch_size", "lr", "mask_p", "ae_steps", "ae_lr",
    "tables_per_type", "rows_per_table",
)
_FLOAT_FLAGS = {"mag_lo", "mag_hi", "lr", "mask_p", "ae_lr"}


def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("configuration")
    group.add_argument("--config", metavar="FILE", help="TOML config file")
    group.add_argument("--units", metavar="FILE", dest="units_path",
                       help="extra unit table merged over the shipped one")
    for name in _OVERRIDE_FLAGS:
        flag = "--" + name.replace("_", "-")
        kind = float if name in _FLOAT_FLAGS else int
        group.add_argument(flag, type=kind, default=None, help=f"override {name}")
    return parent


def _resolve_config(args: argparse.Namespace) -> Config:
    overrides = {name: getattr(args, name) for name in _OVERRIDE_FLAGS}
    overrides["units_path"] = args.units_path
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parent = _config_parent()
    parser = argparse.ArgumentParser(
        prog="conevec",
        description="Composite numeric embeddings for table corpora.",
    )
    top = parser.add_subparsers(dest="command", required=True)

    gen = top.add_parser("gen", help="synthesize inputs").add_subparsers(
        dest="target", required=True
    )
    p = gen.add_parser("corpus", parents=[parent],
                       help="write a labeled synthetic table corpus")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.set_defaults(func=_cmd_gen_corpus)

    p = top.add_parser("ingest", parents=[parent],
                       help="parse a table directory into cell records")
    p.add_argument("--tables", required=True, help="directory of CSV tables")
    p.add_argument("--out", required=True, help="output JSON-lines file")
    p.set_defaults(func=_cmd_ingest)

    tr = top.add_parser("train", help="fit models").add_subparsers(
        dest="target", required=True
    )
    p = tr.add_parser("encoder", parents=[parent],
                      help="train the numeral-aware encoder on a corpus")
    p.add_argument("--tables", required=True)
    p.add_argument("--out", required=True, help="model checkpoint path")
    p.add_argument("--trace", help="write the loss trace CSV (and PNG) here")
    p.set_defaults(func=_cmd_train_encoder)
    p = tr.add_parser("autoencoder", parents=[parent],
                      help="train the composite projection on a corpus")
    p.add_argument("--tables", required=True)
    p.add_argument("--model", required=True, help="trained encoder checkpoint")
    p.add_argument("--out", required=True, help="projection checkpoint path")
    p.add_argument("--trace", help="write the loss trace CSV (and PNG) here")
    p.set_defaults(func=_cmd_train_autoencoder)

    em = top.add_parser("embed", help="embed table groups").add_subparsers(
        dest="target", required=True
    )
    for target in ("columns", "tuples"):
        p = em.add_parser(target, parents=[parent],
                          help=f"aggregate composite vectors per {target[:-1]}")
        p.add_argument("--tables", required=True)
        p.add_argument("--model", required=True)
        p.add_argument("--ae", required=True, help="projection checkpoint")
        p.add_argument("--out", required=True, help="vector file path")
        p.add_argument("--meta", help="sidecar JSON-lines metadata path")
        p.add_argument("--mode", choices=("full", "attr_only"), default="full")
        p.set_defaults(func=_cmd_embed, embed_target=target)

    ix = top.add_parser("index", help="build and query indexes").add_subparsers(
        dest="target", required=True
    )
    p = ix.add_parser("build", parents=[parent],
                      help="build a flat cosine index from a vector file")
    p.add_argument("--vectors", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_index_build)
    p = ix.add_parser("query", parents=[parent],
                      help="rank neighbors of one stored item")
    p.add_argument("--index", required=True)
    p.add_argument("--id", required=True, help="stored item id to query with")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--keep-self", action="store_true",
                   help="keep the query item in its own result list")
    p.add_argument("--out", help="write results as CSV instead of stdout")
    p.set_defaults(func=_cmd_index_query)

    ev = top.add_parser("eval", help="evaluation reports").add_subparsers(
        dest="target", required=True
    )
    p = ev.add_parser("correlations", parents=[parent],
                      help="analytic-distance correlation audits")
    p.add_argument("--model", required=True)
    p.add_argument("--ae", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--kinds", default=",".join(_AUDIT_KINDS),
                   help="comma-separated subset of numbers,ranges,gaussians")
    p.add_argument("--scale", type=float, default=1.0,
                   help="sample-count multiplier for quick runs")
    p.set_defaults(func=_cmd_eval_correlations)
    p = ev.add_parser("retrieval", parents=[parent],
                      help="top-k retrieval metrics against ground truth")
    p.add_argument("--index", required=True)
    p.add_argument("--truth", required=True, help="ground-truth JSON-lines")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_eval_retrieval)
    p = ev.add_parser("probes", parents=[parent],
                      help="small supervised probes over value embeddings")
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--tasks", default=",".join(_PROBE_TASKS))
    p.add_argument("--probe-k", type=int, default=2,
                   help="integer range exponent: values span [0, 10^k]")
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--probe-steps", type=int, default=2000)
    p.set_defaults(func=_cmd_eval_probes)
    p = ev.add_parser("rotate", parents=[parent],
                      help="single-component rotation sensitivity")
    p.add_argument("--model", required=True)
    p.add_argument("--ae", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--attr", default="Tumor size")
    p.add_argument("--value", type=float, default=20.0)
    p.add_argument("--unit", default="cm")
    p.add_argument("--rot-attr", default="Sample size")
    p.add_argument("--rot-value", type=float, default=200.0)
    p.add_argument("--rot-unit", default="mm")
    p.set_defaults(func=_cmd_eval_rotate)

    return parser


# --- command bodies ---------------------------------------------------------

def _cmd_gen_corpus(args, cfg: Config) -> int:
    spec = SyntheticCorpusSpec(
        tables_per_type=cfg.tables_per_type, rows_per_table=cfg.rows_per_table
    )
    corpus = gen_corpus(spec, substream(cfg.seed, "corpus"), args.out)
    print(f"wrote {len(corpus.tables)} tables to {args.out}")
    return 0


def _cmd_ingest(args, cfg: Config) -> int:
    units = load_units(cfg.units_path)
    count = ingest_corpus(args.tables, units, args.out)
    print(f"wrote {count} cell records to {args.out}")
    return 0


def _trace_figure(trace_path: str, steps, losses, title: str) -> None:
    png = Path(trace_path).with_suffix(".png")
    plot_trace(steps, losses, png, title=title)


def _cmd_train_encoder(args, cfg: Config) -> int:
    tables = read_corpus(args.tables)
    units = load_units(cfg.units_path)
    model, trace = train_numeric_model(tables, units, cfg)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_model(model, args.out)
    print(f"wrote model to {args.out} (final loss {trace[-1].loss:.6g})")
    if args.trace:
        write_trace(trace, args.trace)
        _trace_figure(args.trace, [r.step for r in trace],
                      [r.loss for r in trace], "masked numeral loss")
        print(f"wrote trace to {args.trace}")
    return 0


def _cmd_train_autoencoder(args, cfg: Config) -> int:
    tables = read_corpus(args.tables)
    units = load_units(cfg.units_path)
    model = load_numeric_model(args.model)
    ae, trace = train_projection(tables, units, model, cfg)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_autoencoder(ae, args.out)
    print(f"wrote projection to {args.out} (final loss {trace[-1][1]:.6g})")
    if args.trace:
        write_ae_trace(trace, args.trace)
        _trace_figure(args.trace, [s for s, _ in trace],
                      [l for _, l in trace], "reconstruction loss")
        print(f"wrote trace to {args.trace}")
    return 0


def _cmd_embed(args, cfg: Config) -> int:
    tables = read_corpus(args.tables)
    units = load_units(cfg.units_path)
    model = load_numeric_model(args.model)
    ae = load_autoencoder(args.ae)
    embeddings, meta = embed_corpus(
        tables, units, model, ae, target=args.embed_target, mode=args.mode
    )
    save_embeddings(embeddings, meta, args.out, args.meta)
    print(f"wrote {len(embeddings)} {args.embed_target[:-1]} vectors to {args.out}")
    return 0


def _cmd_index_build(args, cfg: Config) -> int:
    store = FlatIndex.load(args.vectors)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    store.save(args.out)
    print(f"indexed {len(store)} vectors to {args.out}")
    return 0


def _cmd_index_query(args, cfg: Config) -> int:
    store = FlatIndex.load(args.index)
    if len(store) == 0:
        raise EmptyIndex("query against an empty index")
    result = query_by_id(store, args.id, args.k, exclude_self=not args.keep_self)
    if args.out:
        write_query_result(args.out, result.items)
        print(f"wrote {len(result.items)} results to {args.out}")
    else:
        print("rank,id,score")
        for rank, (item_id, score) in enumerate(result.items, start=1):
            print(f"{rank},{item_id},{score:.12g}")
    return 0


def _cmd_eval_correlations(args, cfg: Config) -> int:
    model = load_numeric_model(args.model)
    ae = load_autoencoder(args.ae)
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    out = Path(args.out_dir)
    rows = []
    for kind in kinds:
        rows.extend(
            audit_suite(kind, model, ae, substream(cfg.seed, f"audit:{kind}"),
                        scale=args.scale)
        )
    write_audit_report(out / "correlations.csv", rows)
    for kind in kinds:
        panel = [r for r in rows if r.kind == kind and r.source == "composite"]
        if panel:
            plot_audit_scatter(panel, out / f"correlations_{kind}.png")
    print(f"wrote {len(rows)} audit rows to {out / 'correlations.csv'}")
    return 0


def _cmd_eval_retrieval(args, cfg: Config) -> int:
    store = FlatIndex.load(args.index)
    truth = load_ground_truth(args.truth)
    scores, results = retrieval_eval(store, truth, k=args.k)
    out = Path(args.out_dir)
    label = Path(args.index).stem
    write_retrieval_report(out / "retrieval.csv", {label: scores})
    write_per_query_report(
        out / "retrieval_per_query.csv", per_query_scores(results, truth, args.k)
    )
    plot_retrieval_bars({label: scores}, out / "retrieval.png")
    print(
        f"recall@{args.k}={scores.recall:.4f} map@{args.k}={scores.mean_ap:.4f} "
        f"mrr@{args.k}={scores.mrr:.4f} over {scores.n_queries} queries"
    )
    return 0


def _cmd_eval_probes(args, cfg: Config) -> int:
    model = load_numeric_model(args.model)
    tasks = [t.strip() for t in args.tasks.split(",") if t.strip()]
    results = probe_suite(
        model, tasks, k=args.probe_k, seed=substream(cfg.seed, "probes"),
        n_samples=args.samples, steps=args.probe_steps,
    )
    out = Path(args.out_dir)
    write_probe_report(out / "probes.csv", results)
    plot_probe_bars(results, out / "probes.png")
    for source, res in results:
        print(f"{res.task} ({source}): {res.metric}={res.mean:.4f}")
    return 0


def _cmd_eval_rotate(args, cfg: Config) -> int:
    model = load_numeric_model(args.model)
    ae = load_autoencoder(args.ae)
    rows = default_rotation(
        model, ae,
        attr=args.attr, value=args.value, unit=args.unit or None,
        rot_attr=args.rot_attr, rot_value=args.rot_value, rot_unit=args.rot_unit,
    )
    out = Path(args.out_dir)
    write_rotation_report(out / "rotation.csv", rows)
    plot_rotation_bars(rows, out / "rotation.png")
    for row in rows:
        print(f"{row.component} -> {row.rotated}: similarity {row.similarity:.4f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    torch.set_num_threads(1)
    try:
        cfg = _resolve_config(args)
        return args.func(args, cfg)
    except (ConevecError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
