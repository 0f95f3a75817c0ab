"""Data preparation, the Adam training loop, evaluation and checkpoints."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .archive import load_archive, save_archive
from .batching import Example, collate
from .config import ExperimentConfig, from_flat
from .data_model import ISTSSample, ValidationError
from .dataset_io import DatasetManifest
from .heads import loss_prediction
from .metrics import auprc, auroc, classification_report, multiclass_auc, mse_mae
from .pipelines import ISTSModel
from .task_prep import (
    NormStats,
    apply_norm,
    few_shot_subset,
    fit_norm,
    make_extrapolation_task,
    make_interpolation_task,
    normalize_sample_times,
    split_dataset,
)

log = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite training loss {loss} at epoch {epoch}")
        self.epoch = epoch


class FrozenParameterMutated(RuntimeError):
    pass


@dataclass
class PreparedData:
    manifest: DatasetManifest
    train: list[Example]
    val: list[Example]
    test: list[Example]
    norm: NormStats
    split_ids: dict[str, list[str]]
    dropped: int = 0


def _task_seed(seed: int, sample_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{sample_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def make_examples(samples: Sequence[ISTSSample], task: str, config: ExperimentConfig) -> tuple[list[Example], int]:
    out, dropped = [], 0
    for s in samples:
        if task == "classification":
            if s.label is None:
                raise ValidationError(f"sample {s.id!r} has no label for classification")
            out.append(Example(s, None, s.label))
            continue
        try:
            if task == "interpolation":
                inp, qs = make_interpolation_task(s, config.mask_fraction, _task_seed(config.split.seed, s.id))
            else:
                inp, qs = make_extrapolation_task(s, config.obs_fraction, horizon=1.0)
        except ValidationError:
            dropped += 1
            continue
        out.append(Example(inp, qs, s.label))
    return out, dropped


def prepare_data(manifest: DatasetManifest, samples: Sequence[ISTSSample], config: ExperimentConfig) -> PreparedData:
    """Split, subset, rescale time, min-max normalize on train, then build task examples."""
    train, val, test = split_dataset(samples, config.split)
    if config.fewshot is not None:
        train = few_shot_subset(train, config.fewshot, seed=config.split.seed)
    split_ids = {"train": [s.id for s in train], "val": [s.id for s in val], "test": [s.id for s in test]}
    train, val, test = ([normalize_sample_times(s, manifest.horizon) for s in part] for part in (train, val, test))
    norm = fit_norm(train, manifest.n_vars)
    parts, dropped = [], 0
    for part in (train, val, test):
        ex, d = make_examples(apply_norm(part, norm), config.task, config)
        parts.append(ex)
        dropped += d
    if not all(parts):
        raise ValidationError("a split has no usable examples for this task")
    if dropped:
        log.info("dropped %d samples that cannot form a %s example", dropped, config.task)
    return PreparedData(manifest, *parts, norm=norm, split_ids=split_ids, dropped=dropped)


def build_model(config: ExperimentConfig, manifest: DatasetManifest, seed: int | None = None) -> ISTSModel:
    return ISTSModel(
        config.pipeline,
        manifest.n_vars,
        task=config.task,
        n_classes=manifest.n_classes,
        seed=config.seed if seed is None else seed,
    )


def batches(model: ISTSModel, examples: Sequence[Example], batch_size: int, order=None):
    order = range(len(examples)) if order is None else order
    order = list(order)
    cfg = model.config
    dtype = next(model.parameters()).dtype
    for i in range(0, len(order), batch_size):
        chunk = [examples[j] for j in order[i:i + batch_size]]
        yield collate(chunk, cfg.layout, model.n_vars, dtype=dtype, impute=cfg.variant == "vec_imputation")


class EarlyStopping:
    """Counts epochs without a strictly lower value; ``step`` returns True when it is time to stop."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def step(self, value: float, epoch: int) -> bool:
        if value < self.best:
            self.best, self.best_epoch, self.bad_epochs = value, epoch, 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


@dataclass
class CheckpointRecord:
    epoch: int
    state: dict[str, torch.Tensor]
    metric: float
    rule: str  # "max-AUROC" or "min-val-loss"


@dataclass
class TrainResult:
    best: CheckpointRecord
    history: list[dict]
    model: ISTSModel
    stopped_epoch: int
    frozen_digest: str = ""


def state_digest(state: dict[str, torch.Tensor]) -> str:
    h = hashlib.sha256()
    for name in sorted(state):
        h.update(name.encode())
        h.update(state[name].detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


@torch.no_grad()
def predict_all(model: ISTSModel, examples: Sequence[Example], batch_size: int = 64) -> dict[str, np.ndarray]:
    model.eval()
    if model.task == "classification":
        probs, labels = [], []
        for b in batches(model, examples, batch_size):
            probs.append(torch.softmax(model.class_logits(b), dim=-1).double().numpy())
            labels.append(b["labels"].numpy())
        return {"probs": np.concatenate(probs), "labels": np.concatenate(labels)}
    preds, targets, variables = [], [], []
    for b in batches(model, examples, batch_size):
        p = model.predict(b)
        v = b["q_valid"]
        preds.append(p[v].double().numpy())
        targets.append(b["q_target"][v].double().numpy())
        variables.append(b["q_var"][v].numpy())
    return {"pred": np.concatenate(preds), "target": np.concatenate(targets), "var": np.concatenate(variables)}


def metric_report(outputs: dict[str, np.ndarray], task: str, n_vars: int, n_classes: int | None = None) -> dict[str, float]:
    if task == "classification":
        probs, labels = outputs["probs"], outputs["labels"]
        c = n_classes or probs.shape[1]
        report = classification_report(probs.argmax(axis=1), labels, c)
        for name, fn in (("auroc", auroc), ("auprc", auprc)):
            try:
                report[name] = multiclass_auc(probs, labels, fn)
            except ValueError:
                report[name] = float("nan")
        logp = np.log(np.clip(probs[np.arange(len(labels)), labels], 1e-300, None))
        report["loss"] = float(-logp.mean())
        return report
    mse, mae = mse_mae(outputs["pred"], outputs["target"])
    loss = loss_prediction(
        torch.as_tensor(outputs["pred"]), torch.as_tensor(outputs["target"]), torch.as_tensor(outputs["var"]), n_vars
    )
    return {"mse": mse, "mae": mae, "loss": float(loss)}


def evaluate(model: ISTSModel, examples: Sequence[Example], task: str | None = None, batch_size: int = 64) -> dict[str, float]:
    task = task or model.task
    if task != model.task:
        raise ValueError(f"model head is for {model.task!r}, asked to evaluate {task!r}")
    return metric_report(predict_all(model, examples, batch_size), task, model.n_vars, model.n_classes)


def train(config: ExperimentConfig, data: PreparedData, seed: int | None = None,
          model: ISTSModel | None = None) -> TrainResult:
    seed = config.seed if seed is None else seed
    torch.manual_seed(seed)
    model = model or build_model(config, data.manifest, seed)
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=config.learning_rate, betas=ADAM_BETAS, eps=ADAM_EPS, weight_decay=0.0)
    frozen_digest = state_digest(model.frozen_state())
    rng = np.random.default_rng(seed)
    classification = config.task == "classification"
    rule = "max-AUROC" if classification else "min-val-loss"
    stopper = None if classification else EarlyStopping(config.patience)
    limit = config.epoch_limit
    best: CheckpointRecord | None = None
    history = []
    epoch = 0
    while limit is None or epoch < limit:
        epoch += 1
        model.train()
        losses = []
        for b in batches(model, data.train, config.batch_size, rng.permutation(len(data.train))):
            loss = model.loss(b)
            if not torch.isfinite(loss):
                raise TrainingDiverged(epoch, loss.item())
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            losses.append(loss.item())
        val = evaluate(model, data.val)
        digest = state_digest(model.frozen_state())
        if digest != frozen_digest:
            raise FrozenParameterMutated(f"frozen parameters changed during epoch {epoch}")
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)), **{f"val_{k}": v for k, v in val.items()}}
        history.append(row)
        log.info("epoch %d %s", epoch, row)
        if classification:
            score = val["auroc"]
            if best is None or (not math.isnan(score) and (math.isnan(best.metric) or score > best.metric)):
                best = CheckpointRecord(epoch, model.trainable_state(), score, rule)
        else:
            if best is None or val["loss"] < best.metric:
                best = CheckpointRecord(epoch, model.trainable_state(), val["loss"], rule)
            if stopper.step(val["loss"], epoch):
                break
    restore(model, best)
    return TrainResult(best, history, model, epoch, frozen_digest)


def restore(model: ISTSModel, record: CheckpointRecord) -> ISTSModel:
    with torch.no_grad():
        named = dict(model.named_parameters())
        for name, value in record.state.items():
            named[name].copy_(value)
    return model


def save_checkpoint(path, record: CheckpointRecord, config: ExperimentConfig, extra: dict | None = None) -> Path:
    meta = {
        "epoch": str(record.epoch),
        "metric": repr(record.metric),
        "rule": record.rule,
        "config_hash": config.hash(),
        "config": json.dumps(config.to_flat(), sort_keys=True),
    }
    if extra:
        meta.update({k: str(v) for k, v in extra.items()})
    return save_archive(record.state, path, meta)


def load_checkpoint(path, manifest: DatasetManifest, seed: int | None = None) -> tuple[ISTSModel, CheckpointRecord, ExperimentConfig]:
    arch = load_archive(path)
    config = from_flat(json.loads(arch.metadata["config"]))
    if seed is None:
        seed = int(arch.metadata.get("seed", config.seed))
    model = build_model(config, manifest, seed)
    expected = set(model.trainable_state())
    if set(arch.tensors) != expected:
        raise ValueError(f"checkpoint tensors do not match model: {sorted(set(arch.tensors) ^ expected)}")
    state = {k: torch.from_numpy(v.copy()) for k, v in arch.tensors.items()}
    record = CheckpointRecord(int(arch.metadata["epoch"]), state, float(arch.metadata["metric"]), arch.metadata["rule"])
    restore(model, record)
    return model, record, config
