"""Pad prepared examples into dense tensors for each representation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .data_model import ISTSSample, to_series, to_set, to_vector, vector_to_series
from .task_prep import QuerySet, forward_fill


@dataclass(frozen=True)
class Example:
    """A model input sample plus its supervision (queries and/or label)."""

    sample: ISTSSample
    queries: QuerySet | None = None
    label: int | None = None


def _series_lists(sample: ISTSSample, source: str):
    if source == "vector":
        return vector_to_series(to_vector(sample)).series
    return to_series(sample).series


def collate_series(samples: Sequence[ISTSSample], n_vars: int, dtype=torch.float32, source: str = "series") -> dict:
    per_sample = [_series_lists(s, source) for s in samples]
    length = max((len(seq) for ser in per_sample for seq in ser), default=0)
    b = len(samples)
    times = np.zeros((b, n_vars, length))
    values = np.zeros((b, n_vars, length))
    valid = np.zeros((b, n_vars, length), dtype=bool)
    for i, ser in enumerate(per_sample):
        for n, seq in enumerate(ser):
            if seq:
                arr = np.asarray(seq, dtype=np.float64)
                times[i, n, : len(seq)] = arr[:, 0]
                values[i, n, : len(seq)] = arr[:, 1]
                valid[i, n, : len(seq)] = True
    return {
        "times": torch.as_tensor(times, dtype=dtype),
        "values": torch.as_tensor(values, dtype=dtype),
        "valid": torch.as_tensor(valid),
    }


def collate_set(samples: Sequence[ISTSSample], dtype=torch.float32) -> dict:
    reps = [to_set(s).tuples for s in samples]
    length = max(len(r) for r in reps)
    b = len(samples)
    times = np.zeros((b, length))
    values = np.zeros((b, length))
    variables = np.zeros((b, length), dtype=np.int64)
    valid = np.zeros((b, length), dtype=bool)
    for i, rep in enumerate(reps):
        arr = np.asarray(rep, dtype=np.float64)
        times[i, : len(rep)] = arr[:, 0]
        variables[i, : len(rep)] = [o.var for o in rep]
        values[i, : len(rep)] = arr[:, 2]
        valid[i, : len(rep)] = True
    return {
        "times": torch.as_tensor(times, dtype=dtype),
        "vars": torch.as_tensor(variables),
        "values": torch.as_tensor(values, dtype=dtype),
        "valid": torch.as_tensor(valid),
    }


def collate_vector(samples: Sequence[ISTSSample], n_vars: int, dtype=torch.float32, impute: bool = False) -> dict:
    reps = [to_vector(s) for s in samples]
    if impute:
        reps = [forward_fill(r) for r in reps]
    length = max(r.length for r in reps)
    b = len(samples)
    times = np.zeros((b, length))
    values = np.zeros((b, length, n_vars))
    mask = np.zeros((b, length, n_vars))
    valid = np.zeros((b, length), dtype=bool)
    for i, r in enumerate(reps):
        times[i, : r.length] = r.times
        # missing cells enter the value embedder as 0; the mask channel carries missingness
        values[i, : r.length] = np.nan_to_num(r.values, nan=0.0)
        mask[i, : r.length] = r.mask
        valid[i, : r.length] = True
    return {
        "times": torch.as_tensor(times, dtype=dtype),
        "values": torch.as_tensor(values, dtype=dtype),
        "mask": torch.as_tensor(mask, dtype=dtype),
        "valid": torch.as_tensor(valid),
    }


def collate_queries(query_sets: Sequence[QuerySet], dtype=torch.float32) -> dict:
    length = max((len(q) for q in query_sets), default=0)
    b = len(query_sets)
    t = np.zeros((b, length))
    var = np.zeros((b, length), dtype=np.int64)
    target = np.zeros((b, length))
    valid = np.zeros((b, length), dtype=bool)
    for i, qs in enumerate(query_sets):
        for j, q in enumerate(qs.queries):
            t[i, j], var[i, j], target[i, j], valid[i, j] = q.t, q.var, q.target, True
    return {
        "q_t": torch.as_tensor(t, dtype=dtype),
        "q_var": torch.as_tensor(var),
        "q_target": torch.as_tensor(target, dtype=dtype),
        "q_valid": torch.as_tensor(valid),
    }


def collate(examples: Sequence[Example], layout: str, n_vars: int, dtype=torch.float32, impute: bool = False) -> dict:
    """``layout`` is one of ``set``, ``vector``, ``series`` or ``vector-series``."""
    samples = [e.sample for e in examples]
    if layout == "set":
        batch = collate_set(samples, dtype)
    elif layout == "vector":
        batch = collate_vector(samples, n_vars, dtype, impute=impute)
    elif layout == "series":
        batch = collate_series(samples, n_vars, dtype)
    elif layout == "vector-series":
        batch = collate_series(samples, n_vars, dtype, source="vector")
    else:
        raise ValueError(f"unknown layout {layout!r}")
    if all(e.queries is not None for e in examples):
        batch.update(collate_queries([e.queries for e in examples], dtype))
    if all(e.label is not None for e in examples):
        batch["labels"] = torch.as_tensor([e.label for e in examples], dtype=torch.long)
    return batch
