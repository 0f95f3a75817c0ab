"""Command-line entry point.

Exit codes: 0 success, 2 usage or validation error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .archive import ArchiveError
from .config import KNOWN_KEYS, ConfigError, ExperimentConfig, from_flat, read_config_file, write_config_file
from .data_model import ValidationError
from .dataset_io import DatasetFormatError, SyntheticSpec, generate_synthetic, load_dataset, save_dataset
from .experiments import (
    SWEEP_AXES,
    plot_table,
    read_table,
    report_cost,
    rows_to_table,
    run_ablation_suite,
    run_seeds,
    run_sweeps,
    summarize,
    write_table,
)
from .trainer import evaluate, load_checkpoint, prepare_data

log = logging.getLogger("frozen_ists")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
USAGE_ERRORS = (ConfigError, ValidationError, DatasetFormatError, ArchiveError, FileNotFoundError, NotADirectoryError)

# named flags that are shorthands for flat config keys
FLAG_KEYS = {"seed": "seed", "task": "task", "repr": "repr", "layers": "layers", "composition": "composition",
             "fewshot": "fewshot", "zeroshot": "zeroshot", "dataset": "dataset", "out": "out"}
SPEC_KEYS = {f.name for f in fields(SyntheticSpec)}


class UsageError(ValueError):
    pass


def _common(p: argparse.ArgumentParser, experiment: bool = True) -> None:
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output path")
    if experiment:
        p.add_argument("--dataset", help="dataset file (JSON lines)")
        p.add_argument("--task", choices=["classification", "interpolation", "extrapolation"])
        p.add_argument("--repr", choices=["set", "vector", "series"])
        p.add_argument("--layers", type=int)
        p.add_argument("--composition", choices=["cb", "cc", "bb", "bc"])
        p.add_argument("--fewshot", type=float)
        p.add_argument("--zeroshot", metavar="ATTR=VALUES")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frozen-ists",
        description="Train and evaluate irregular time series models on frozen sequence encoders.",
        epilog="Any config key may also be given as '--key value'.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    _common(p, experiment=False)
    p.add_argument("--spec", help="flat 'key = value' synthetic spec file")

    p = sub.add_parser("train", help="train one run per seed and write records and checkpoints")
    _common(p)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on its test split")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")

    p = sub.add_parser("ablate", help="full model plus each ablation on shared splits")
    _common(p)

    p = sub.add_parser("sweep", help="layer-count or composition sweep")
    _common(p)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", help="comma-separated axis values")

    p = sub.add_parser("report", help="render a table, plot it, or report training cost")
    _common(p)
    p.add_argument("--table", help="tab-delimited table from ablate or sweep")
    p.add_argument("--metric", help="metric column to plot")
    p.add_argument("--plot", action="store_true", help="also write a PNG plot")
    p.add_argument("--cost", action="store_true", help="measure parameter count and step timings")
    p.add_argument("--steps", type=int, default=20)
    return parser


def parse_overrides(extra: list[str]) -> dict[str, str]:
    """``--key value`` / ``--key=value`` pairs left over after the named flags."""
    out, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise UsageError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"--{key} needs a value")
            value = extra[i + 1]
            i += 2
        out[key.replace("-", "_")] = value
    return out


def effective_flat(args, overrides: dict[str, str], allowed=KNOWN_KEYS) -> dict[str, str]:
    flat = read_config_file(args.config) if args.config else {}
    flat.update(overrides)
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            flat[key] = str(value)
    unknown = set(flat) - set(allowed)
    if unknown:
        raise UsageError(f"unknown keys: {', '.join(sorted(unknown))}")
    return flat


def _experiment(args, overrides) -> tuple[ExperimentConfig, object, list]:
    config = from_flat(effective_flat(args, overrides))
    if not config.dataset:
        raise UsageError("no dataset given (--dataset or 'dataset' in the config)")
    manifest, samples = load_dataset(config.dataset)
    if config.task == "classification" and not manifest.n_classes:
        raise ValidationError(f"{config.dataset} has no classes; cannot run classification")
    return config, manifest, samples


def _out_dir(config: ExperimentConfig) -> Path:
    if not config.out:
        raise UsageError("no output directory given (--out)")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_table(header, body) -> None:
    widths = [max(len(str(r[i])) for r in [header, *body]) for i in range(len(header))]
    for r in [header, *body]:
        print("  ".join(str(c).ljust(w) for c, w in zip(r, widths)))


def cmd_generate(args, overrides) -> int:
    flat = read_config_file(args.spec) if args.spec else {}
    flat.update(overrides)
    if args.seed is not None:
        flat["seed"] = str(args.seed)
    unknown = set(flat) - SPEC_KEYS
    if unknown:
        raise UsageError(f"unknown spec keys: {', '.join(sorted(unknown))}")
    if not args.out:
        raise UsageError("generate needs --out PATH")
    kw = {}
    types = {f.name: f.type for f in fields(SyntheticSpec)}
    try:
        for k, v in flat.items():
            if k == "freq_range":
                kw[k] = tuple(float(x) for x in v.split(","))
            elif k == "groups":
                kw[k] = tuple(x.strip() for x in v.split(",") if x.strip())
            elif k == "n_classes":
                kw[k] = None if v.strip().lower() in ("", "none") else int(v)
            elif k == "name":
                kw[k] = v.strip()
            elif types[k] in ("int", int):
                kw[k] = int(v)
            else:
                kw[k] = float(v)
    except ValueError as exc:
        raise UsageError(f"bad spec value: {exc}") from exc
    for required in ("n_samples", "n_vars"):
        if required not in kw:
            raise UsageError(f"spec needs {required}")
    manifest, samples = generate_synthetic(SyntheticSpec(**kw))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(manifest, samples, out)
    print(json.dumps({"dataset": str(out), "samples": len(samples), "n_vars": manifest.n_vars,
                      "n_classes": manifest.n_classes}))
    return EXIT_OK


def cmd_train(args, overrides) -> int:
    config, manifest, samples = _experiment(args, overrides)
    out = _out_dir(config)
    write_config_file(config.to_flat(), out / "config.txt")
    records = run_seeds(config, manifest, samples, out_dir=out)
    for r in records:
        print(r.to_json())
    if len(records) > 1:
        summary = summarize(records)
        header = ["metric", "mean", "std"]
        body = [[k, repr(m), repr(s)] for k, (m, s) in summary.items()]
        write_table(header, body, out / "summary.tsv")
    return EXIT_OK


def cmd_evaluate(args, overrides) -> int:
    flat = effective_flat(args, overrides)
    if "dataset" not in flat:
        raise UsageError("evaluate needs --dataset")
    manifest, samples = load_dataset(flat["dataset"])
    model, record, config = load_checkpoint(args.checkpoint, manifest, args.seed)
    data = prepare_data(manifest, samples, config)
    metrics = evaluate(model, getattr(data, args.split))
    print(json.dumps({"checkpoint": args.checkpoint, "epoch": record.epoch, "split": args.split,
                      "config_hash": config.hash(), "metrics": metrics}, sort_keys=True))
    return EXIT_OK


def cmd_ablate(args, overrides) -> int:
    config, manifest, samples = _experiment(args, overrides)
    out = _out_dir(config)
    write_config_file(config.to_flat(), out / "config.txt")
    rows = run_ablation_suite(config, manifest, samples, out_dir=out)
    header, body = rows_to_table(rows, "variant")
    write_table(header, body, out / "ablation.tsv")
    _print_table(header, body)
    return EXIT_OK


def cmd_sweep(args, overrides) -> int:
    config, manifest, samples = _experiment(args, overrides)
    out = _out_dir(config)
    values = None
    if args.values:
        values = [v.strip() for v in args.values.split(",") if v.strip()]
        if args.axis == "layers":
            try:
                values = [int(v) for v in values]
            except ValueError as exc:
                raise UsageError(f"layer counts must be integers: {exc}") from exc
    write_config_file(config.to_flat(), out / "config.txt")
    rows = run_sweeps(config, manifest, samples, args.axis, values, out_dir=out)
    header, body = rows_to_table(rows, args.axis)
    write_table(header, body, out / f"sweep_{args.axis}.tsv")
    _print_table(header, body)
    return EXIT_OK


def cmd_report(args, overrides) -> int:
    if not args.table and not args.cost:
        raise UsageError("report needs --table PATH and/or --cost")
    if args.table:
        header, body = read_table(args.table)
        _print_table(header, body)
        if args.plot:
            metric = args.metric or header[2]
            path = Path(args.out) if args.out else Path(args.table).with_suffix(f".{metric}.png")
            if path.suffix != ".png":
                path.mkdir(parents=True, exist_ok=True)
                path = path / f"{Path(args.table).stem}.{metric}.png"
            plot_table(header, body, metric, path)
            print(f"plot: {path}")
    if args.cost:
        config, manifest, samples = _experiment(args, overrides)
        data = prepare_data(manifest, samples, config)
        cost = report_cost(config, manifest, data, steps=args.steps)
        print(json.dumps(cost, sort_keys=True))
        if config.out:
            Path(config.out).mkdir(parents=True, exist_ok=True)
            (Path(config.out) / "cost.json").write_text(json.dumps(cost, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "evaluate": cmd_evaluate,
            "ablate": cmd_ablate, "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, parse_overrides(extra))
    except (UsageError, *USAGE_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - anything else is a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
