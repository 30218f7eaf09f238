"""Command-line interface: synth | train | eval | gradcheck | attn | compare.

Every command runs one pipeline and exits nonzero when an inner error
contract is violated. Dataset arguments may be a path or a name resolved
under $GEOKGE_DATA_DIR.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import re
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, load_run_config
from .evaluation import attention_by_relation, evaluate
from .kg_data import (KnowledgeGraph, ParseError, SyntheticSpec,
                      augment_reciprocal, generate_synthetic, load_tsv,
                      write_dataset)
from .training import grad_check, load_checkpoint, train

DATA_DIR_ENV = "GEOKGE_DATA_DIR"


class CliError(Exception):
    pass


def resolve_dataset(spec: str) -> Path:
    path = Path(spec)
    if path.is_dir():
        return path
    root = os.environ.get(DATA_DIR_ENV)
    if root:
        candidate = Path(root) / spec
        if candidate.is_dir():
            return candidate
    raise CliError(f"dataset {spec!r} not found (also tried ${DATA_DIR_ENV})")


def load_dataset(spec: str) -> KnowledgeGraph:
    return augment_reciprocal(load_tsv(resolve_dataset(spec)))


def _apply_threads(threads: int | None) -> None:
    if threads is not None:
        import torch
        torch.set_num_threads(max(1, threads))


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def preset_path(name: str) -> Path:
    from importlib.resources import files
    path = files("geokge").joinpath("presets", f"{name}.json")
    return Path(str(path))


def cmd_synth(args: argparse.Namespace) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    spec = SyntheticSpec.from_dict(data)
    if args.seed is not None:
        spec.seed = args.seed
    kg = generate_synthetic(spec)
    out = write_dataset(kg, args.out, spec=spec)
    print(f"wrote {out}: |E|={kg.n_entities} |R|={kg.n_relations} "
          f"train={kg.train.shape[0]} valid={kg.valid.shape[0]} "
          f"test={kg.test.shape[0]}")
    return 0


def _load_run(args: argparse.Namespace) -> RunConfig:
    run = load_run_config(args.config)
    if getattr(args, "dataset", None):
        run.dataset = args.dataset
    if getattr(args, "out", None):
        run.output_dir = args.out
    if getattr(args, "seed", None) is not None:
        run.train = dataclasses.replace(run.train, seed=args.seed)
    if getattr(args, "max_epochs", None) is not None:
        run.train = dataclasses.replace(run.train, max_epochs=args.max_epochs)
    if getattr(args, "threads", None) is not None:
        run.threads = args.threads
    return run


def _train_one(run: RunConfig, out_dir: Path, progress: bool = False):
    _apply_threads(run.threads)
    kg = load_dataset(run.dataset)
    result = train(kg, run.train, out_dir=out_dir, progress=progress)
    return kg, result


def cmd_train(args: argparse.Namespace) -> int:
    run = _load_run(args)
    if not run.dataset:
        raise CliError("no dataset given (config 'dataset' or --dataset)")
    if not run.output_dir:
        raise CliError("no output dir given (config 'output_dir' or --out)")
    out_dir = Path(run.output_dir)
    kg, result = _train_one(run, out_dir, progress=not args.quiet)
    final = evaluate(kg, result.model, "valid") if kg.valid.shape[0] else None
    manifest = {
        "command": "train",
        "version": __version__,
        "config": run.to_dict(),
        "dataset_resolved": str(resolve_dataset(run.dataset)),
        "best_epoch": result.best_epoch,
        "best_val_mrr": result.best_val_mrr,
        "epochs_run": len(result.history),
        "checkpoint": str(result.checkpoint_dir),
    }
    _write_json(out_dir / "manifest.json", manifest)
    if final is not None:
        _write_json(out_dir / "val_report.json", final.to_dict())
        hits = " ".join(f"H@{k}={v:.4f}" for k, v in sorted(final.hits.items()))
        print(f"best epoch {result.best_epoch}: val MRR={final.mrr:.4f} {hits}")
    else:
        print(f"trained {len(result.history)} epochs (no validation split)")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    _apply_threads(args.threads)
    model, _ = load_checkpoint(args.checkpoint)
    kg = load_dataset(args.dataset)
    report = evaluate(kg, model, args.split, rank_averaging=args.rank_averaging)
    payload = report.to_dict()
    if args.out:
        _write_json(Path(args.out), payload)
    if args.csv:
        Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
        Path(args.csv).write_text(report.per_relation_csv(), encoding="utf-8")
    hits = " ".join(f"H@{k}={v:.4f}" for k, v in sorted(report.hits.items()))
    print(f"{args.split}: MRR={report.mrr:.4f} {hits} (n={report.n_test})")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    run = load_run_config(args.config)
    _apply_threads(run.threads)
    kg = load_dataset(run.dataset) if run.dataset else None
    report = grad_check(run.train, n_probes=args.probes, kg=kg)
    for name, block in sorted(report.blocks.items()):
        status = "ok" if block.passed else "FAIL"
        print(f"{name:16s} max_rel_err={block.max_rel_err:.3e} "
              f"probes={block.n_probes} {status}")
    print(f"gradcheck {'PASSED' if report.passed else 'FAILED'} "
          f"(threshold {report.threshold:g})")
    return 0 if report.passed else 1


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name)


def _attention_svg(out_dir: Path, relation: str, alphas: list[float],
                   model_order: list[str]) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.2, 2.6))
    ax.bar(range(len(alphas)), alphas, color="#4878a8")
    ax.set_xticks(range(len(alphas)))
    ax.set_xticklabels(model_order, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("mean attention")
    ax.set_ylim(0, 1)
    ax.set_title(relation, fontsize=9)
    fig.tight_layout()
    path = out_dir / f"{_safe_name(relation)}.svg"
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def cmd_attn(args: argparse.Namespace) -> int:
    _apply_threads(args.threads)
    model, manifest = load_checkpoint(args.checkpoint)
    kg = load_dataset(args.dataset)
    dump = attention_by_relation(kg, model, split=args.split)
    payload = {"model_order": manifest["model_order"], "split": args.split,
               "attention": dump}
    out = Path(args.out) if args.out else Path(args.checkpoint) / "attention.json"
    _write_json(out, payload)
    print(f"wrote {out} ({len(dump)} relations)")
    if args.svg:
        svg_dir = Path(args.svg)
        svg_dir.mkdir(parents=True, exist_ok=True)
        for relation, alphas in dump.items():
            _attention_svg(svg_dir, relation, alphas, manifest["model_order"])
        print(f"wrote {len(dump)} charts to {svg_dir}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    rows = []
    out_root = Path(args.out)
    for config_path in args.configs:
        run = load_run_config(config_path)
        if args.dataset:
            run.dataset = args.dataset
        name = Path(config_path).stem
        run_dir = out_root / name
        kg, result = _train_one(run, run_dir)
        report = evaluate(kg, result.model, args.split)
        _write_json(run_dir / "report.json", report.to_dict())
        rows.append((name, report))
    ks = sorted(rows[0][1].hits) if rows else []
    header = ["config", "MRR"] + [f"H@{k}" for k in ks]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join("---" for _ in header) + "|"]
    csv_lines = [",".join(header)]
    for name, report in rows:
        values = [f"{report.mrr:.4f}"] + [f"{report.hits[k]:.4f}" for k in ks]
        lines.append("| " + " | ".join([name] + values) + " |")
        csv_lines.append(",".join([name] + values))
    table = "\n".join(lines) + "\n"
    out_root.mkdir(parents=True, exist_ok=True)
    if args.format == "md":
        (out_root / "compare.md").write_text(table, encoding="utf-8")
    else:
        (out_root / "compare.csv").write_text("\n".join(csv_lines) + "\n",
                                              encoding="utf-8")
    print(table, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geokge",
        description="Attention-combined knowledge graph embeddings "
                    "(Euclidean and Poincare-ball variants).")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic pattern dataset")
    p.add_argument("--spec", required=True, help="SyntheticSpec JSON file")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=None, help="override spec seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--out", default=None, help="run output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p.add_argument("--out", default=None, help="report JSON path")
    p.add_argument("--csv", default=None, help="per-relation CSV path")
    p.add_argument("--rank-averaging", default="reciprocal",
                   choices=["reciprocal", "rank"])
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="verify gradients vs finite differences")
    p.add_argument("--config", required=True)
    p.add_argument("--probes", type=int, default=200)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("attn", help="dump per-relation mean attention")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="train",
                   choices=["train", "valid", "test"])
    p.add_argument("--out", default=None)
    p.add_argument("--svg", default=None, help="directory for SVG bar charts")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_attn)

    p = sub.add_parser("compare", help="train+eval several configs, tabulate")
    p.add_argument("--configs", nargs="+", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dataset", default=None, help="override all datasets")
    p.add_argument("--split", default="test", choices=["valid", "test"])
    p.add_argument("--format", default="md", choices=["md", "csv"])
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ParseError, ValueError, OSError, RuntimeError,
            json.JSONDecodeError, KeyError) as exc:
        print(f"geokge {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
