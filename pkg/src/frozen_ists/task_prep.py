"""Normalization, task construction, splits and the few/zero-shot protocols.

Every randomized function takes an explicit ``seed`` and builds its own
``numpy.random.Generator``; nothing here shares RNG state.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data_model import ISTSSample, Observation, ValidationError, VectorRepresentation


class NormalizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class NormStats:
    minimum: tuple[float, ...]
    maximum: tuple[float, ...]

    def __post_init__(self):
        if len(self.minimum) != len(self.maximum):
            raise ValidationError("min/max length mismatch")
        if any(hi < lo for lo, hi in zip(self.minimum, self.maximum)):
            raise ValidationError("max must be >= min for every variable")

    @property
    def n_vars(self) -> int:
        return len(self.minimum)


def fit_norm(train: Sequence[ISTSSample], n_vars: int | None = None) -> NormStats:
    if not train:
        raise NormalizationError("cannot fit normalization on an empty training split")
    n_vars = n_vars or train[0].n_vars
    lo = [math.inf] * n_vars
    hi = [-math.inf] * n_vars
    for s in train:
        for _, var, val in s.observations:
            lo[var] = min(lo[var], val)
            hi[var] = max(hi[var], val)
    # variables never seen in training get the identity-ish range [0, 0]
    lo = [0.0 if math.isinf(v) else v for v in lo]
    hi = [0.0 if math.isinf(v) else v for v in hi]
    return NormStats(tuple(lo), tuple(hi))


def normalize_value(v: float, stats: NormStats, var: int) -> float:
    lo, hi = stats.minimum[var], stats.maximum[var]
    if hi == lo:
        return 0.0
    return (v - lo) / (hi - lo)


def apply_norm(samples: Sequence[ISTSSample], stats: NormStats | None) -> list[ISTSSample]:
    if stats is None:
        raise NormalizationError("apply_norm called before fit_norm")
    out = []
    for s in samples:
        if s.n_vars != stats.n_vars:
            raise ValidationError(f"sample {s.id!r}: n_vars {s.n_vars} != stats {stats.n_vars}")
        out.append(s.replace_observations(
            [Observation(t, n, normalize_value(x, stats, n)) for t, n, x in s.observations]
        ))
    return out


def invert_norm(values, stats: NormStats | None, var: int):
    if stats is None:
        raise NormalizationError("invert_norm called before fit_norm")
    lo, hi = stats.minimum[var], stats.maximum[var]
    return np.asarray(values, dtype=np.float64) * (hi - lo) + lo


def normalize_time(t: float, horizon: float) -> float:
    if not horizon > 0:
        raise ValidationError(f"horizon must be positive, got {horizon}")
    if t < 0:
        raise ValidationError(f"negative timestamp {t}")
    return t / horizon


def normalize_sample_times(sample: ISTSSample, horizon: float) -> ISTSSample:
    return sample.replace_observations(
        [Observation(normalize_time(t, horizon), n, x) for t, n, x in sample.observations]
    )


@dataclass(frozen=True)
class PredictionQuery:
    t: float
    var: int
    target: float


@dataclass(frozen=True)
class QuerySet:
    queries: tuple[PredictionQuery, ...]
    n_vars: int
    counts: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        for q in self.queries:
            if not 0 <= q.var < self.n_vars:
                raise ValidationError(f"query variable {q.var} outside [0, {self.n_vars})")
            if not math.isfinite(q.target):
                raise ValidationError("query target must be finite")
        c = Counter(q.var for q in self.queries)
        object.__setattr__(self, "counts", tuple(c.get(n, 0) for n in range(self.n_vars)))

    def __len__(self) -> int:
        return len(self.queries)


def make_interpolation_task(
    sample: ISTSSample, mask_fraction: float = 0.3, seed: int = 0
) -> tuple[ISTSSample, QuerySet]:
    """Hide every observation at a random ``mask_fraction`` of the unique timestamps."""
    times = sample.timestamps()
    if len(times) < 2:
        raise ValidationError(f"sample {sample.id!r}: interpolation needs >= 2 timestamps")
    k = min(max(math.floor(mask_fraction * len(times)), 1), len(times) - 1)
    rng = np.random.default_rng(seed)
    hidden = {times[i] for i in rng.choice(len(times), size=k, replace=False)}
    kept, queries = [], []
    for o in sorted(sample.observations, key=lambda o: (o.t, o.var)):
        if o.t in hidden:
            queries.append(PredictionQuery(o.t, o.var, o.val))
        else:
            kept.append(o)
    return sample.replace_observations(kept), QuerySet(tuple(queries), sample.n_vars)


def make_extrapolation_task(
    sample: ISTSSample, obs_fraction: float = 0.5, horizon: float = 1.0
) -> tuple[ISTSSample, QuerySet]:
    """Observations before ``obs_fraction * horizon`` are inputs; the rest are queries."""
    t_cut = obs_fraction * horizon
    ordered = sorted(sample.observations, key=lambda o: (o.t, o.var))
    kept = [o for o in ordered if o.t < t_cut]
    queries = [PredictionQuery(o.t, o.var, o.val) for o in ordered if o.t >= t_cut]
    if not kept or not queries:
        side = "input" if not kept else "query"
        raise ValidationError(f"sample {sample.id!r}: empty {side} side at t_cut={t_cut}")
    return sample.replace_observations(kept), QuerySet(tuple(queries), sample.n_vars)


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    mode: str = "random"
    group_attr: str | None = None
    held_out: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.ratios) != 3 or any(r <= 0 for r in self.ratios):
            raise ValidationError(f"split ratios must be three positive numbers, got {self.ratios}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValidationError(f"split ratios must sum to 1, got {sum(self.ratios)}")
        if self.mode not in ("random", "group-holdout"):
            raise ValidationError(f"unknown split mode {self.mode!r}")
        if self.mode == "group-holdout" and not self.group_attr:
            raise ValidationError("group-holdout needs a group attribute")


def split_indices(n: int, spec: SplitSpec) -> tuple[list[int], list[int], list[int]]:
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n).tolist()
    n_test = math.floor(spec.ratios[2] * n + 1e-9)
    n_val = math.floor(spec.ratios[1] * n + 1e-9)
    test, val, train = perm[:n_test], perm[n_test:n_test + n_val], perm[n_test + n_val:]
    if not (train and val and test):
        raise ValidationError(f"split of {n} samples with ratios {spec.ratios} leaves an empty partition")
    return train, val, test


def split_dataset(samples: Sequence[ISTSSample], spec: SplitSpec):
    """Random mode returns (train, val, test).

    Group-holdout mode sends held-out groups to test and splits the remainder
    into train/val with the train:val ratio.
    """
    samples = list(samples)
    if spec.mode == "group-holdout":
        rest, test = zero_shot_split(samples, spec.group_attr, spec.held_out)
        r_train, r_val = spec.ratios[0], spec.ratios[1]
        n_val = math.floor(r_val / (r_train + r_val) * len(rest) + 1e-9)
        perm = np.random.default_rng(spec.seed).permutation(len(rest)).tolist()
        val = [rest[i] for i in perm[:n_val]]
        train = [rest[i] for i in perm[n_val:]]
        if not (train and val):
            raise ValidationError("group-holdout split leaves an empty train or validation partition")
        return train, val, test
    tr, va, te = split_indices(len(samples), spec)
    return [samples[i] for i in tr], [samples[i] for i in va], [samples[i] for i in te]


def few_shot_subset(train: Sequence[ISTSSample], fraction: float = 0.1, seed: int = 0) -> list[ISTSSample]:
    if not train:
        raise ValidationError("few-shot subset of an empty training split")
    if not 0 < fraction <= 1:
        raise ValidationError(f"few-shot fraction must be in (0, 1], got {fraction}")
    k = max(math.floor(fraction * len(train) + 1e-9), 1)
    idx = np.sort(np.random.default_rng(seed).choice(len(train), size=k, replace=False))
    return [train[i] for i in idx.tolist()]


def zero_shot_split(samples: Sequence[ISTSSample], attribute: str, held_out):
    held_out = set(held_out)
    if not held_out:
        raise ValidationError("zero-shot split needs at least one held-out value")
    train, test = [], []
    for s in samples:
        if attribute not in s.attrs:
            raise ValidationError(f"sample {s.id!r} has no attribute {attribute!r}")
        (test if s.attrs[attribute] in held_out else train).append(s)
    if not train or not test:
        raise ValidationError(f"zero-shot split on {attribute!r} leaves an empty side")
    return train, test


def forward_fill(vec: VectorRepresentation) -> VectorRepresentation:
    """Carry each column's last observed value forward; leading gaps become 0."""
    values = np.array(vec.values, dtype=np.float64)
    for n in range(values.shape[1]):
        last = 0.0
        for i in range(values.shape[0]):
            if vec.mask[i, n]:
                last = values[i, n]
            else:
                values[i, n] = last
    return VectorRepresentation(vec.times, values, vec.mask, imputed=True)
