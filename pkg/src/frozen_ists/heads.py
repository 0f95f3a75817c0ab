"""Task output layers and training losses."""
from __future__ import annotations

import math

import torch
from torch import nn
from torch.nn import functional as F


def _init_linear(layer: nn.Linear, generator: torch.Generator | None) -> nn.Linear:
    bound = 1.0 / math.sqrt(layer.in_features)
    with torch.no_grad():
        for p in (layer.weight, layer.bias):
            p.copy_(torch.rand(p.shape, generator=generator, dtype=torch.float64) * 2 * bound - bound)
    return layer


class ClassificationHead(nn.Module):
    """Linear layer on pooled (``D``) or flattened per-variable (``N*D``) features."""

    def __init__(self, in_features: int, n_classes: int, generator: torch.Generator | None = None):
        super().__init__()
        self.linear = _init_linear(nn.Linear(in_features, n_classes), generator)

    def logits(self, features: torch.Tensor) -> torch.Tensor:
        features = features.flatten(start_dim=1) if features.ndim > 2 else features
        if features.shape[-1] != self.linear.in_features:
            raise ValueError(f"feature width {features.shape[-1]} != head width {self.linear.in_features}")
        return self.linear(features)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.logits(features), dim=-1)


class PredictionHead(nn.Module):
    """Three linear layers with ReLU between them, fed ``[hidden || t]``.

    The query-time column of the first layer starts at scale ``time_scale`` so the
    ReLU kinks fall inside the normalized window instead of being drowned out by
    the ``hidden`` inputs.
    """

    def __init__(self, hidden: int, out_features: int, generator: torch.Generator | None = None,
                 time_scale: float = 10.0):
        super().__init__()
        self.net = nn.Sequential(
            _init_linear(nn.Linear(hidden + 1, hidden), generator),
            nn.ReLU(),
            _init_linear(nn.Linear(hidden, hidden), generator),
            nn.ReLU(),
            _init_linear(nn.Linear(hidden, out_features), generator),
        )
        first = self.net[0]
        with torch.no_grad():
            first.weight[:, -1] = (torch.rand(hidden, generator=generator, dtype=torch.float64) * 2 - 1) * time_scale
            first.bias.copy_((torch.rand(hidden, generator=generator, dtype=torch.float64) - 0.5) * time_scale)

    @property
    def out_features(self) -> int:
        return self.net[-1].out_features

    def forward(self, hidden: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([hidden, t.unsqueeze(-1)], dim=-1))


def classify(features, head: ClassificationHead) -> torch.Tensor:
    return head(torch.as_tensor(features, dtype=head.linear.weight.dtype))


def predict_pooled(pooled: torch.Tensor, t, n: int, head: PredictionHead) -> torch.Tensor:
    if not 0 <= n < head.out_features:
        raise IndexError(f"variable {n} outside [0, {head.out_features})")
    t = torch.as_tensor(t, dtype=pooled.dtype)
    return head(pooled, t)[..., n]


def predict_series(hidden: torch.Tensor, t, head: PredictionHead) -> torch.Tensor:
    t = torch.as_tensor(t, dtype=hidden.dtype)
    return head(hidden, t)[..., 0]


def loss_prediction(
    pred: torch.Tensor, target: torch.Tensor, var: torch.Tensor, n_vars: int, valid: torch.Tensor | None = None
) -> torch.Tensor:
    """Mean over variables of each variable's mean squared error.

    Variables without any query are left out of the outer average.
    """
    if pred.shape != target.shape or var.shape != pred.shape:
        raise ValueError(f"prediction/target/variable shapes differ: {pred.shape}, {target.shape}, {var.shape}")
    if valid is None:
        valid = torch.ones_like(pred, dtype=torch.bool)
    w = valid.to(pred.dtype).reshape(-1)
    sq = (pred - target).reshape(-1) ** 2 * w
    idx = var.reshape(-1)
    sums = torch.zeros(n_vars, dtype=pred.dtype, device=pred.device).index_add(0, idx, sq)
    counts = torch.zeros(n_vars, dtype=pred.dtype, device=pred.device).index_add(0, idx, w)
    present = counts > 0
    if not present.any():
        raise ValueError("no valid queries to compute a loss on")
    return (sums[present] / counts[present]).mean()


def loss_classification(logits_or_probs: torch.Tensor, labels: torch.Tensor, probabilities: bool = False) -> torch.Tensor:
    """Mean cross-entropy ``-log p[label]``; pass ``probabilities=True`` for softmax outputs."""
    labels = torch.as_tensor(labels, dtype=torch.long)
    if probabilities:
        logp = torch.log(logits_or_probs)
    else:
        logp = F.log_softmax(logits_or_probs, dim=-1)
    return -logp.gather(-1, labels.unsqueeze(-1)).squeeze(-1).mean()
