"""Experiment configuration and its flat ``key = value`` text form."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .pipelines import ABLATIONS, COMPOSITIONS, TASKS, PipelineConfig
from .task_prep import SplitSpec


class ConfigError(ValueError):
    pass


DEFAULT_LR = {"classification": 1e-3, "interpolation": 5e-4, "extrapolation": 5e-4}


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "interpolation"
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    lr: float | None = None
    batch_size: int = 32
    max_epochs: int | None = None
    patience: int = 10
    seed: int = 0
    split: SplitSpec = field(default_factory=SplitSpec)
    mask_fraction: float = 0.3
    obs_fraction: float = 0.5
    fewshot: float | None = None
    dataset: str | None = None
    out: str | None = None
    seeds: tuple[int, ...] = ()

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs is not None and self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")

    @property
    def learning_rate(self) -> float:
        return DEFAULT_LR[self.task] if self.lr is None else self.lr

    @property
    def epoch_limit(self) -> int | None:
        if self.max_epochs is not None:
            return self.max_epochs
        return 20 if self.task == "classification" else None

    @property
    def seed_list(self) -> tuple[int, ...]:
        return self.seeds or (self.seed,)

    def to_flat(self) -> dict[str, str]:
        return to_flat(self)

    def hash(self) -> str:
        return config_hash(self.to_flat())


# flat key -> (owner, attribute)
_PIPELINE_KEYS = {
    "repr": "representation",
    "hidden": "hidden",
    "heads": "heads",
    "layers": "n_layers",
    "inter_layers": "inter_layers",
    "composition": "composition",
    "ablations": "ablations",
    "variant": "variant",
    "backbone_seed": "backbone_seed",
    "intra_archive": "intra_archive",
    "inter_archive": "inter_archive",
    "available_layers": "available_layers",
    "max_positions": "max_positions",
}
_TOP_KEYS = ("task", "lr", "batch_size", "max_epochs", "patience", "seed", "mask_fraction",
             "obs_fraction", "fewshot", "dataset", "out", "seeds")
_SPLIT_KEYS = ("split", "split_seed", "zeroshot")
KNOWN_KEYS = frozenset(_PIPELINE_KEYS) | frozenset(_TOP_KEYS) | frozenset(_SPLIT_KEYS)


def _none(v: str):
    return None if v.strip().lower() in ("", "none", "null") else v.strip()


def _opt(conv):
    def parse(v):
        v = _none(v)
        return None if v is None else conv(v)
    return parse


def parse_ratios(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.replace("/", ":").split(":")]
    if len(parts) != 3:
        raise ConfigError(f"split must look like 8:1:1, got {text!r}")
    total = sum(parts)
    return tuple(p / total for p in parts)


def parse_zeroshot(text: str) -> tuple[str, tuple[str, ...]]:
    if "=" not in text:
        raise ConfigError(f"zeroshot must look like ATTR=V1,V2, got {text!r}")
    attr, values = text.split("=", 1)
    vals = tuple(v.strip() for v in values.split(",") if v.strip())
    if not attr.strip() or not vals:
        raise ConfigError(f"zeroshot must name an attribute and at least one value, got {text!r}")
    return attr.strip(), vals


_CONVERT = {
    "hidden": int, "heads": int, "n_layers": int, "inter_layers": _opt(int),
    "backbone_seed": int, "available_layers": _opt(int), "max_positions": int,
    "intra_archive": _none, "inter_archive": _none, "variant": _none,
    "ablations": lambda v: frozenset(a.strip() for a in v.split(",") if a.strip() and a.strip() != "none"),
    "representation": str.strip, "composition": str.strip,
    "task": str.strip, "lr": _opt(float), "batch_size": int, "max_epochs": _opt(int), "patience": int,
    "seed": int, "mask_fraction": float, "obs_fraction": float, "fewshot": _opt(float),
    "dataset": _none, "out": _none,
    "seeds": lambda v: tuple(int(s) for s in v.split(",") if s.strip()),
}


def from_flat(flat: dict[str, str], base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    unknown = set(flat) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        pipe_kw = {attr: _CONVERT[attr](str(flat[key])) for key, attr in _PIPELINE_KEYS.items() if key in flat}
        top_kw = {key: _CONVERT[key](str(flat[key])) for key in _TOP_KEYS if key in flat}
        split = base.split
        if "split" in flat:
            split = replace(split, ratios=parse_ratios(str(flat["split"])))
        if "split_seed" in flat:
            split = replace(split, seed=int(flat["split_seed"]))
        if "zeroshot" in flat:
            zs = _none(str(flat["zeroshot"]))
            if zs is None:
                split = replace(split, mode="random", group_attr=None, held_out=())
            else:
                attr, vals = parse_zeroshot(zs)
                split = replace(split, mode="group-holdout", group_attr=attr, held_out=vals)
        pipeline = replace(base.pipeline, **pipe_kw)
        return replace(base, pipeline=pipeline, split=split, **top_kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def to_flat(cfg: ExperimentConfig) -> dict[str, str]:
    p = cfg.pipeline
    out = {key: getattr(p, attr) for key, attr in _PIPELINE_KEYS.items()}
    out["ablations"] = ",".join(sorted(p.ablations))
    out.update({key: getattr(cfg, key) for key in _TOP_KEYS})
    out["seeds"] = ",".join(str(s) for s in cfg.seeds)
    out["split"] = ":".join(repr(r) for r in cfg.split.ratios)
    out["split_seed"] = cfg.split.seed
    out["zeroshot"] = (
        f"{cfg.split.group_attr}={','.join(cfg.split.held_out)}" if cfg.split.mode == "group-holdout" else None
    )
    return {k: "none" if v is None else str(v) for k, v in sorted(out.items())}


def config_hash(flat: dict[str, str]) -> str:
    blob = json.dumps(dict(sorted(flat.items())), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    flat = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        flat[key.strip()] = value.strip()
    return flat


def write_config_file(flat: dict[str, str], path) -> Path:
    path = Path(path)
    path.write_text("".join(f"{k} = {v}\n" for k, v in sorted(flat.items())), encoding="utf-8")
    return path


__all__ = [
    "ABLATIONS", "COMPOSITIONS", "ConfigError", "ExperimentConfig", "KNOWN_KEYS",
    "config_hash", "from_flat", "read_config_file", "to_flat", "write_config_file",
]
