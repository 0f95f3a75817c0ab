"""Trainable input embedders mapping observations into the encoder's width.

The continuous-time embedding is affine in its first coordinate and sinusoidal
elsewhere::

    emb(t)[0] = w_0 * t + a_0
    emb(t)[d] = sin(w_d * t + a_d),   0 < d < D

Value and mask embedders are bias-free linear maps, so they are exactly
homogeneous and additive.
"""
from __future__ import annotations

import math

import torch
from torch import nn

MAX_FREQUENCY = 10.0  # cycles per normalized window
# Unit-scale tables keep value/variable embeddings commensurate with the
# O(1) sinusoidal time coordinates; a 1/sqrt(D) scale lets time swamp them.
EMBED_BOUND = 1.0


def _uniform(shape, low, high, generator):
    return torch.rand(shape, generator=generator, dtype=torch.float64).mul_(high - low).add_(low).float()


class TimeEmbedding(nn.Module):
    def __init__(self, dim: int, generator: torch.Generator | None = None):
        super().__init__()
        if dim < 2:
            raise ValueError(f"time embedding width must be >= 2, got {dim}")
        self.dim = dim
        omega = _uniform((dim,), 0.0, 2 * math.pi * MAX_FREQUENCY, generator)
        alpha = _uniform((dim,), 0.0, 2 * math.pi, generator)
        # keep the trend coordinate on the same scale as the sinusoids
        omega[0] = _uniform((1,), 0.0, 1.0, generator)[0]
        alpha[0] = 0.0
        self.omega = nn.Parameter(omega)
        self.alpha = nn.Parameter(alpha)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        phase = t.unsqueeze(-1) * self.omega + self.alpha
        return torch.cat([phase[..., :1], torch.sin(phase[..., 1:])], dim=-1)


class VariableEmbedding(nn.Module):
    """Lookup table with one learnable row per variable."""

    def __init__(self, n_vars: int, dim: int, generator: torch.Generator | None = None):
        super().__init__()
        self.weight = nn.Parameter(_uniform((n_vars, dim), -EMBED_BOUND, EMBED_BOUND, generator))

    @property
    def n_vars(self) -> int:
        return self.weight.shape[0]

    def forward(self, index: torch.Tensor) -> torch.Tensor:
        if index.numel() and (int(index.min()) < 0 or int(index.max()) >= self.n_vars):
            raise IndexError(f"variable index out of range [0, {self.n_vars})")
        return self.weight[index]


class LinearEmbedding(nn.Module):
    """``x @ W`` without bias; ``in_features == 1`` embeds scalars given without a trailing axis."""

    def __init__(self, in_features: int, dim: int, generator: torch.Generator | None = None):
        super().__init__()
        self.weight = nn.Parameter(_uniform((in_features, dim), -EMBED_BOUND, EMBED_BOUND, generator))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.weight.shape[0] == 1:
            return x.unsqueeze(-1) * self.weight[0]
        if x.shape[-1] != self.weight.shape[0]:
            raise ValueError(f"expected {self.weight.shape[0]} input features, got {x.shape[-1]}")
        return x @ self.weight


def embed_time(t, module: TimeEmbedding) -> torch.Tensor:
    t = torch.as_tensor(t, dtype=module.omega.dtype)
    if not torch.isfinite(t).all():
        raise ValueError("time must be finite")
    return module(t)


def embed_variable(n, table: VariableEmbedding) -> torch.Tensor:
    return table(torch.as_tensor(n, dtype=torch.long))


def embed_value(x, module: LinearEmbedding) -> torch.Tensor:
    return module(torch.as_tensor(x, dtype=module.weight.dtype))


def embed_value_vector(x, module: LinearEmbedding) -> torch.Tensor:
    return module(torch.as_tensor(x, dtype=module.weight.dtype))


def embed_mask(m, module: LinearEmbedding) -> torch.Tensor:
    m = torch.as_tensor(m, dtype=module.weight.dtype)
    if not torch.all((m == 0) | (m == 1)):
        raise ValueError("mask entries must be 0 or 1")
    return module(m)
