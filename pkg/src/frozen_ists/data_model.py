"""ISTS samples and their three interchangeable representations.

A sample is a multiset of ``(t, var, val)`` observations.  It can be viewed as

* a time-sorted set of tuples (:class:`SetRepresentation`),
* a timestamp-aligned value grid plus observation mask (:class:`VectorRepresentation`),
* one univariate sequence per variable (:class:`SeriesRepresentation`).

All conversions are exact: no arithmetic touches the stored floats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, NamedTuple, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when a sample or representation violates its invariants."""


class Observation(NamedTuple):
    t: float
    var: int
    val: float


@dataclass(frozen=True)
class ISTSSample:
    id: str
    n_vars: int
    observations: tuple[Observation, ...]
    label: int | None = None
    attrs: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        obs = tuple(Observation(float(t), int(v), float(x)) for t, v, x in self.observations)
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "attrs", MappingProxyType(dict(self.attrs)))
        validate_sample(self)

    @property
    def size(self) -> int:
        return len(self.observations)

    def timestamps(self) -> list[float]:
        return sorted({o.t for o in self.observations})

    def replace_observations(self, observations: Sequence[Observation]) -> "ISTSSample":
        return ISTSSample(self.id, self.n_vars, tuple(observations), self.label, dict(self.attrs))


def validate_sample(sample: ISTSSample) -> None:
    if sample.n_vars < 1:
        raise ValidationError(f"sample {sample.id!r}: n_vars must be >= 1, got {sample.n_vars}")
    if not sample.observations:
        raise ValidationError(f"sample {sample.id!r}: at least one observation is required")
    seen = set()
    for t, var, val in sample.observations:
        if not math.isfinite(t) or not math.isfinite(val):
            raise ValidationError(f"sample {sample.id!r}: non-finite observation {(t, var, val)}")
        if not 0 <= var < sample.n_vars:
            raise ValidationError(
                f"sample {sample.id!r}: variable index {var} outside [0, {sample.n_vars})"
            )
        if (t, var) in seen:
            raise ValidationError(f"sample {sample.id!r}: duplicate observation at t={t}, var={var}")
        seen.add((t, var))
    if sample.label is not None and sample.label < 0:
        raise ValidationError(f"sample {sample.id!r}: negative label {sample.label}")


@dataclass(frozen=True)
class SetRepresentation:
    tuples: tuple[Observation, ...]

    @property
    def size(self) -> int:
        return len(self.tuples)


@dataclass(frozen=True, eq=False)
class VectorRepresentation:
    """``values`` holds NaN where unobserved; ``mask`` is the authoritative missingness record.

    An ``imputed`` grid has its NaN cells filled in while keeping the original mask.
    """

    times: np.ndarray  # (L,)
    values: np.ndarray  # (L, N)
    mask: np.ndarray  # (L, N) bool
    imputed: bool = False

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if values.ndim != 2 or mask.shape != values.shape or times.shape != (values.shape[0],):
            raise ValidationError("inconsistent vector representation shapes")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("vector times must be strictly increasing")
        if not np.all(mask.any(axis=1)):
            raise ValidationError("every timestamp row needs at least one observed value")
        if self.imputed:
            if np.isnan(values).any():
                raise ValidationError("imputed grid still contains missing cells")
        elif not np.array_equal(mask, ~np.isnan(values)):
            raise ValidationError("mask must be 1 exactly where a value is present")
        for a in (times, values, mask):
            a.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def length(self) -> int:
        return self.times.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    @property
    def size(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class SeriesRepresentation:
    series: tuple[tuple[tuple[float, float], ...], ...]

    def __post_init__(self):
        for n, seq in enumerate(self.series):
            ts = [t for t, _ in seq]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValidationError(f"series of variable {n} is not strictly increasing in time")

    @property
    def n_vars(self) -> int:
        return len(self.series)

    @property
    def lengths(self) -> list[int]:
        return [len(s) for s in self.series]

    @property
    def size(self) -> int:
        return sum(self.lengths)


def _sorted_tuples(observations) -> tuple[Observation, ...]:
    return tuple(sorted(observations, key=lambda o: (o.t, o.var)))


def to_set(sample: ISTSSample) -> SetRepresentation:
    validate_sample(sample)
    return SetRepresentation(_sorted_tuples(sample.observations))


def to_vector(sample: ISTSSample) -> VectorRepresentation:
    validate_sample(sample)
    times = sample.timestamps()
    row = {t: i for i, t in enumerate(times)}
    values = np.full((len(times), sample.n_vars), np.nan)
    for t, var, val in sample.observations:
        values[row[t], var] = val
    return VectorRepresentation(np.array(times), values, ~np.isnan(values))


def to_series(sample: ISTSSample) -> SeriesRepresentation:
    validate_sample(sample)
    per_var: list[list[tuple[float, float]]] = [[] for _ in range(sample.n_vars)]
    for t, var, val in _sorted_tuples(sample.observations):
        per_var[var].append((t, val))
    return SeriesRepresentation(tuple(tuple(s) for s in per_var))


def vector_to_series(vec: VectorRepresentation) -> SeriesRepresentation:
    per_var = []
    for n in range(vec.n_vars):
        rows = np.flatnonzero(vec.mask[:, n])
        per_var.append(tuple((float(vec.times[i]), float(vec.values[i, n])) for i in rows))
    return SeriesRepresentation(tuple(per_var))


def series_to_set(ser: SeriesRepresentation) -> SetRepresentation:
    obs = [Observation(t, n, x) for n, seq in enumerate(ser.series) for t, x in seq]
    return SetRepresentation(_sorted_tuples(obs))


def set_to_vector(rep: SetRepresentation, n_vars: int) -> VectorRepresentation:
    times = sorted({o.t for o in rep.tuples})
    row = {t: i for i, t in enumerate(times)}
    values = np.full((len(times), n_vars), np.nan)
    for t, var, val in rep.tuples:
        values[row[t], var] = val
    return VectorRepresentation(np.array(times), values, ~np.isnan(values))


def set_to_series(rep: SetRepresentation, n_vars: int) -> SeriesRepresentation:
    per_var: list[list[tuple[float, float]]] = [[] for _ in range(n_vars)]
    for t, var, val in rep.tuples:
        per_var[var].append((t, val))
    return SeriesRepresentation(tuple(tuple(s) for s in per_var))


def vector_to_observations(vec: VectorRepresentation) -> list[Observation]:
    rows, cols = np.nonzero(vec.mask)
    return [Observation(float(vec.times[i]), int(n), float(vec.values[i, n])) for i, n in zip(rows, cols)]
