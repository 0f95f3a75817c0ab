"""On-disk dataset format and a synthetic irregular-series generator.

The file format is UTF-8 JSON lines.  The first line is the manifest::

    {"name": ..., "n_vars": ..., "n_classes": ..., "horizon": ..., "variables": [...]}

and every following line is one sample::

    {"id": ..., "label": ... or null, "attrs": {...}, "obs": [[t, var, val], ...]}

Floats are written with Python's shortest round-trip repr, so a save/load cycle
reproduces every double exactly.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .data_model import ISTSSample, Observation, ValidationError


class DatasetFormatError(ValueError):
    """Malformed dataset file; the message carries the 1-based line number."""


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    n_vars: int
    horizon: float
    variables: tuple[str, ...]
    n_classes: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if self.n_vars < 1:
            raise ValidationError(f"n_vars must be >= 1, got {self.n_vars}")
        if not self.horizon > 0:
            raise ValidationError(f"horizon must be positive, got {self.horizon}")
        if len(self.variables) != self.n_vars:
            raise ValidationError(
                f"{len(self.variables)} variable names given for n_vars={self.n_vars}"
            )
        if self.n_classes is not None and self.n_classes < 1:
            raise ValidationError(f"n_classes must be positive, got {self.n_classes}")

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "n_vars": self.n_vars,
            "n_classes": self.n_classes,
            "horizon": self.horizon,
            "variables": list(self.variables),
        }


def _dumps(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(", ", ": "), allow_nan=False)


def sample_to_record(sample: ISTSSample) -> dict:
    return {
        "id": sample.id,
        "label": sample.label,
        "attrs": dict(sorted(sample.attrs.items())),
        "obs": [[o.t, o.var, o.val] for o in sample.observations],
    }


def sample_from_record(rec: dict, n_vars: int) -> ISTSSample:
    obs = []
    for item in rec["obs"]:
        t, var, val = item
        if isinstance(var, float) and not var.is_integer():
            raise ValidationError(f"non-integer variable index {var}")
        obs.append(Observation(float(t), int(var), float(val)))
    label = rec.get("label")
    return ISTSSample(
        id=str(rec["id"]),
        n_vars=n_vars,
        observations=tuple(obs),
        label=None if label is None else int(label),
        attrs={str(k): str(v) for k, v in (rec.get("attrs") or {}).items()},
    )


def save_dataset(manifest: DatasetManifest, samples: Iterable[ISTSSample], path) -> Path:
    path = Path(path)
    lines = [_dumps(manifest.to_record())]
    for s in samples:
        if s.n_vars != manifest.n_vars:
            raise ValidationError(f"sample {s.id!r} has n_vars={s.n_vars}, manifest says {manifest.n_vars}")
        lines.append(_dumps(sample_to_record(s)))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_dataset(path) -> tuple[DatasetManifest, list[ISTSSample]]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError(f"{path}: line 1: missing manifest record")
    try:
        head = json.loads(lines[0])
        manifest = DatasetManifest(
            name=str(head["name"]),
            n_vars=int(head["n_vars"]),
            horizon=float(head["horizon"]),
            variables=tuple(head["variables"]),
            n_classes=None if head.get("n_classes") is None else int(head["n_classes"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{path}: line 1: bad manifest record ({exc})") from exc

    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"{path}: line {lineno}: {exc}") from exc
        try:
            samples.append(sample_from_record(rec, manifest.n_vars))
        except ValidationError as exc:
            raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"{path}: line {lineno}: malformed sample record ({exc!r})") from exc
    return manifest, samples


@dataclass(frozen=True)
class SyntheticSpec:
    """Noisy sinusoids sampled at Poisson-many uniform random times.

    ``freq_range`` is in cycles per horizon; either one ``(lo, hi)`` pair shared by
    every variable or one pair per variable.  When ``n_classes`` is set the label
    is the index of the equal-width band of ``freq_range[0]`` holding variable 0's
    frequency.  ``phase_spread`` is the fraction of a full cycle the per-sample
    base phase is drawn from.
    """

    n_samples: int
    n_vars: int
    mean_obs: float = 50.0
    freq_range: tuple = (0.25, 1.0)
    noise: float = 0.05
    n_classes: int | None = None
    seed: int = 0
    phase_spread: float = 1.0
    horizon: float = 48.0
    groups: tuple[str, ...] = ("A", "B", "C")
    name: str = "synthetic"

    def __post_init__(self):
        if self.n_samples < 1 or self.n_vars < 1:
            raise ValidationError("n_samples and n_vars must be positive")
        if not self.mean_obs > 0:
            raise ValidationError("mean_obs must be positive")
        if self.noise < 0:
            raise ValidationError("noise must be >= 0")
        if not self.horizon > 0:
            raise ValidationError("horizon must be positive")
        if not 0 <= self.phase_spread <= 1:
            raise ValidationError("phase_spread must lie in [0, 1]")
        if self.n_classes is not None and self.n_classes < 1:
            raise ValidationError("n_classes must be positive")
        for lo, hi in self.freq_ranges():
            if not 0 <= lo <= hi:
                raise ValidationError(f"bad frequency range ({lo}, {hi})")

    def freq_ranges(self) -> list[tuple[float, float]]:
        fr = self.freq_range
        if len(fr) == 2 and all(isinstance(v, (int, float)) for v in fr):
            return [(float(fr[0]), float(fr[1]))] * self.n_vars
        if len(fr) != self.n_vars:
            raise ValidationError("freq_range needs one (lo, hi) pair or one per variable")
        return [(float(lo), float(hi)) for lo, hi in fr]


def synthetic_signal(attrs, var: int, t: float, horizon: float) -> float:
    """Noiseless generator value of ``var`` at raw time ``t`` from a sample's attrs."""
    amp = float(attrs[f"amp_{var}"])
    freq = float(attrs[f"freq_{var}"])
    phase = float(attrs[f"phase_{var}"])
    return amp * math.sin(2.0 * math.pi * freq * t / horizon + phase) + var


def generate_synthetic(spec: SyntheticSpec) -> tuple[DatasetManifest, list[ISTSSample]]:
    rng = np.random.default_rng(spec.seed)
    ranges = spec.freq_ranges()
    manifest = DatasetManifest(
        name=spec.name,
        n_vars=spec.n_vars,
        horizon=float(spec.horizon),
        variables=tuple(f"x{n}" for n in range(spec.n_vars)),
        n_classes=spec.n_classes,
    )
    samples = []
    for i in range(spec.n_samples):
        attrs: dict[str, str] = {"group": str(spec.groups[rng.integers(len(spec.groups))])}
        obs: list[Observation] = []
        base_phase = rng.uniform(0.0, 2.0 * math.pi * spec.phase_spread)
        for n, (lo, hi) in enumerate(ranges):
            freq = float(rng.uniform(lo, hi))
            amp = float(rng.uniform(0.5, 1.5))
            phase = float((base_phase + 0.5 * n) % (2.0 * math.pi))
            attrs.update({f"freq_{n}": repr(freq), f"amp_{n}": repr(amp), f"phase_{n}": repr(phase)})
            count = rng.poisson(spec.mean_obs)
            times = np.unique(rng.uniform(0.0, spec.horizon, size=count))
            noise = rng.normal(0.0, spec.noise, size=times.shape[0]) if spec.noise > 0 else np.zeros(times.shape[0])
            for t, eps in zip(times.tolist(), noise.tolist()):
                obs.append(Observation(t, n, synthetic_signal(attrs, n, t, spec.horizon) + eps))
        if not obs:
            t = float(rng.uniform(0.0, spec.horizon))
            obs.append(Observation(t, 0, synthetic_signal(attrs, 0, t, spec.horizon)))
        label = None
        if spec.n_classes is not None:
            lo, hi = ranges[0]
            f0 = float(attrs["freq_0"])
            width = (hi - lo) / spec.n_classes
            label = spec.n_classes - 1 if width == 0 else min(int((f0 - lo) / width), spec.n_classes - 1)
        samples.append(ISTSSample(f"{spec.name}-{i:06d}", spec.n_vars, tuple(obs), label, attrs))
    return manifest, samples


def synthetic_spec_to_dict(spec: SyntheticSpec) -> dict:
    return asdict(spec)
