"""Multi-run orchestration: seeded runs, ablation suites, sweeps and cost reports."""
from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .config import ExperimentConfig
from .data_model import ISTSSample, ValidationError
from .dataset_io import DatasetManifest
from .metrics import aggregate
from .pipelines import COMPOSITIONS
from .trainer import PreparedData, batches, build_model, evaluate, prepare_data, save_checkpoint, train

ABLATION_ROWS = ("full", "rp_transformer", "no_TA", "no_VA", "no_TE", "no_VE")
SWEEP_AXES = ("layers", "composition")


@dataclass
class RunRecord:
    """Everything needed to trace one table cell back to its run."""

    config_hash: str
    seed: int
    task: str
    metrics: dict[str, float]
    timings: dict[str, float] = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)
    config: dict[str, str] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls(**json.loads(text))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        return path


def write_history(history: Sequence[dict], path) -> Path:
    path = Path(path)
    keys = list(history[0]) if history else ["epoch"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, delimiter="\t", lineterminator="\n")
        w.writeheader()
        for row in history:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return path


def run_once(config: ExperimentConfig, data: PreparedData, seed: int, out_dir=None) -> RunRecord:
    """Train with one seed, evaluate on the test split, optionally write artifacts."""
    start = time.perf_counter()
    result = train(config, data, seed=seed)
    train_time = time.perf_counter() - start
    metrics = evaluate(result.model, data.test)
    record = RunRecord(
        config_hash=config.hash(),
        seed=seed,
        task=config.task,
        metrics=metrics,
        timings={"train_seconds": train_time},
        config=config.to_flat(),
        extra={"best_epoch": result.best.epoch, "stopped_epoch": result.stopped_epoch,
               "selection_rule": result.best.rule, "best_val_metric": result.best.metric,
               "dropped_samples": data.dropped},
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt = save_checkpoint(out / f"checkpoint_seed{seed}.arc", result.best, config, {"seed": seed})
        hist = write_history(result.history, out / f"history_seed{seed}.tsv")
        record.artifacts = {"checkpoint": str(ckpt), "history": str(hist)}
        record.artifacts["record"] = str(out / f"run_seed{seed}.json")
        record.save(record.artifacts["record"])
    return record


def run_seeds(config: ExperimentConfig, manifest: DatasetManifest, samples: Sequence[ISTSSample],
              data: PreparedData | None = None, out_dir=None) -> list[RunRecord]:
    """One run per seed in ``config.seed_list``; all seeds share the same splits."""
    data = data or prepare_data(manifest, samples, config)
    return [run_once(config, data, s, out_dir) for s in config.seed_list]


def summarize(records: Sequence[RunRecord]) -> dict[str, tuple[float, float]]:
    return aggregate([r.metrics for r in records])


def _row(label_key: str, label, records: list[RunRecord], data: PreparedData) -> dict:
    return {
        label_key: label,
        "records": records,
        "summary": summarize(records),
        "split_ids": data.split_ids,
    }


def run_ablation_suite(config: ExperimentConfig, manifest: DatasetManifest, samples: Sequence[ISTSSample],
                       out_dir=None, variants: Sequence[str] = ABLATION_ROWS) -> list[dict]:
    """The full model plus each single ablation, on one shared split and seed list."""
    if not config.pipeline.two_stage:
        raise ValidationError("the ablation suite needs a two-stage (series) pipeline")
    data = prepare_data(manifest, samples, config)
    rows = []
    for name in variants:
        cfg = replace(config, pipeline=config.pipeline.with_ablation(None if name == "full" else name))
        sub = None if out_dir is None else Path(out_dir) / name
        rows.append(_row("variant", name, run_seeds(cfg, manifest, samples, data, sub), data))
    return rows


def run_sweeps(config: ExperimentConfig, manifest: DatasetManifest, samples: Sequence[ISTSSample],
               axis: str, values: Sequence | None = None, out_dir=None) -> list[dict]:
    """One row per value of ``axis`` (``layers`` or ``composition``), shared splits and seeds."""
    if axis not in SWEEP_AXES:
        raise ValidationError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    if values is None:
        values = (1, 3, 6) if axis == "layers" else tuple(COMPOSITIONS)
    data = prepare_data(manifest, samples, config)
    rows = []
    for v in values:
        if axis == "layers":
            pipe = replace(config.pipeline, n_layers=int(v))
        else:
            pipe = replace(config.pipeline, composition=str(v))
        cfg = replace(config, pipeline=pipe)
        sub = None if out_dir is None else Path(out_dir) / f"{axis}_{v}"
        rows.append(_row(axis, v, run_seeds(cfg, manifest, samples, data, sub), data))
    return rows


def rows_to_table(rows: Sequence[dict], label_key: str) -> tuple[list[str], list[list[str]]]:
    """Header and body of a comparison table: mean and population std per metric."""
    metrics = list(rows[0]["summary"]) if rows else []
    header = [label_key, "n_seeds"]
    for m in metrics:
        header += [m, f"{m}_std"]
    body = []
    for row in rows:
        line = [str(row[label_key]), str(len(row["records"]))]
        for m in metrics:
            mean, std = row["summary"][m]
            line += [repr(mean), repr(std)]
        body.append(line)
    return header, body


def write_table(header: Sequence[str], body: Sequence[Sequence[str]], path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        w.writerows(body)
    return path


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows:
        raise ValidationError(f"{path}: empty table")
    return rows[0], rows[1:]


def plot_table(header: Sequence[str], body: Sequence[Sequence[str]], metric: str, path) -> Path:
    """Metric-vs-axis curve with std error bars, written as a static image."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if metric not in header:
        raise ValidationError(f"table has no column {metric!r}")
    i, j = header.index(metric), header.index(f"{metric}_std")
    labels = [r[0] for r in body]
    means = np.array([float(r[i]) for r in body])
    stds = np.array([float(r[j]) for r in body])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = np.arange(len(labels))
    ax.errorbar(x, means, yerr=stds, marker="o", capsize=3)
    ax.set_xticks(x, labels)
    ax.set_xlabel(header[0])
    ax.set_ylabel(metric)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def report_cost(config: ExperimentConfig, manifest: DatasetManifest, data: PreparedData,
                steps: int = 20, seed: int | None = None) -> dict[str, float]:
    """Trainable parameter count plus median wall-clock step and per-sample inference times."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    model = build_model(config, manifest, seed)
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=config.learning_rate)
    train_batches = list(batches(model, data.train, config.batch_size))
    step_times = []
    model.train()
    for k in range(steps):
        b = train_batches[k % len(train_batches)]
        start = time.perf_counter()
        loss = model.loss(b)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        step_times.append(time.perf_counter() - start)
    eval_batches = list(batches(model, data.test, config.batch_size))
    per_sample = []
    model.eval()
    with torch.no_grad():
        for k in range(steps):
            b = eval_batches[k % len(eval_batches)]
            start = time.perf_counter()
            if model.task == "classification":
                model.class_logits(b)
            else:
                model.predict(b)
            per_sample.append((time.perf_counter() - start) / b["valid"].shape[0])
    return {
        "trainable_params": model.n_trainable(),
        "total_params": sum(p.numel() for p in model.parameters()),
        "step_seconds": statistics.median(step_times),
        "inference_seconds_per_sample": statistics.median(per_sample),
        "steps": steps,
    }
