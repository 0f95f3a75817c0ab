"""Set, vector and series forward pipelines over frozen encoders.

Two-stage models (series representation, and the ``set_hierarchy`` /
``vec_independent`` variants) encode each variable's sequence with a
time-aware encoder, mean-pool it, then mix the per-variable summaries with a
variable-aware encoder.  Single-stage models (set, vector) encode one mixed
sequence and mean-pool it.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import torch
from torch import nn

from .archive import load_archive
from .backbone import ALL_TRAINABLE, EXTERNAL, LEARNED, NORM_ONLY, BackboneConfig, SequenceEncoder, build_encoder
from .embedders import LinearEmbedding, TimeEmbedding, VariableEmbedding
from .heads import ClassificationHead, PredictionHead, loss_classification, loss_prediction

REPRESENTATIONS = ("set", "vector", "series")
ABLATIONS = ("no_TA", "no_VA", "no_TE", "no_VE", "rp_transformer")
VARIANTS = {"set_hierarchy": "set", "vec_independent": "vector", "vec_imputation": "vector"}
TWO_STAGE_ONLY = {"no_TA", "no_VA", "no_VE"}
# (intra causal, inter causal)
COMPOSITIONS = {"cb": (True, False), "cc": (True, True), "bb": (False, False), "bc": (False, True)}
TASKS = ("classification", "interpolation", "extrapolation")


@dataclass(frozen=True)
class PipelineConfig:
    representation: str = "series"
    hidden: int = 64
    heads: int = 4
    n_layers: int = 2
    inter_layers: int | None = None
    composition: str = "cb"
    ablations: frozenset = field(default_factory=frozenset)
    variant: str | None = None
    backbone_seed: int = 0
    intra_archive: str | None = None
    inter_archive: str | None = None
    available_layers: int | None = None
    max_positions: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "ablations", frozenset(self.ablations))
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {self.representation!r}")
        if self.composition not in COMPOSITIONS:
            raise ValueError(f"unknown composition {self.composition!r}; choose from {sorted(COMPOSITIONS)}")
        unknown = self.ablations - set(ABLATIONS)
        if unknown:
            raise ValueError(f"unknown ablations {sorted(unknown)}")
        if self.variant is not None:
            if self.variant not in VARIANTS:
                raise ValueError(f"unknown variant {self.variant!r}")
            if VARIANTS[self.variant] != self.representation:
                raise ValueError(f"variant {self.variant!r} requires the {VARIANTS[self.variant]} representation")
        if not self.two_stage and self.ablations & TWO_STAGE_ONLY:
            raise ValueError(f"{sorted(self.ablations & TWO_STAGE_ONLY)} only apply to two-stage pipelines")

    @property
    def two_stage(self) -> bool:
        return self.representation == "series" or self.variant in ("set_hierarchy", "vec_independent")

    @property
    def layout(self) -> str:
        if self.variant == "vec_independent":
            return "vector-series"
        if self.two_stage:
            return "series"
        return self.representation

    def with_ablation(self, name: str | None) -> "PipelineConfig":
        return replace(self, ablations=frozenset() if name is None else frozenset({name}))


def pool_mean(hidden: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
    """Mean over valid positions along dim -2; positions past the last valid one are dropped first."""
    valid = valid.bool()
    counts = valid.sum(-1, keepdim=True)
    if (counts == 0).any():
        raise ValueError("mean pooling needs at least one valid position")
    last = int(valid.any(dim=tuple(range(valid.ndim - 1))).nonzero().max()) + 1
    hidden, valid = hidden[..., :last, :], valid[..., :last]
    total = (hidden * valid.unsqueeze(-1).to(hidden.dtype)).sum(-2)
    return total / counts.to(hidden.dtype)


def _encoder(config: PipelineConfig, stage: str) -> SequenceEncoder:
    ab = config.ablations
    causal = COMPOSITIONS[config.composition][0 if stage == "intra" else 1]
    learned = (stage == "intra" and "no_TE" in ab) or (stage == "inter" and "no_VE" in ab)
    n_layers = config.n_layers if stage == "intra" else (config.inter_layers or config.n_layers)
    bcfg = BackboneConfig(
        n_layers=n_layers,
        hidden=config.hidden,
        heads=config.heads,
        causal=causal,
        positional_mode=LEARNED if learned else EXTERNAL,
        max_positions=config.max_positions,
        available_layers=config.available_layers,
    )
    path = config.intra_archive if stage == "intra" else config.inter_archive
    seed = config.backbone_seed + (0 if stage == "intra" else 1)
    if "rp_transformer" in ab:
        return build_encoder(bcfg, seed=seed, policy=ALL_TRAINABLE)
    if path:
        return build_encoder(bcfg, archive=load_archive(path), policy=NORM_ONLY)
    return build_encoder(bcfg, seed=seed, policy=NORM_ONLY)


class ISTSModel(nn.Module):
    """Embedders, frozen encoders and a task head for one pipeline configuration."""

    def __init__(self, config: PipelineConfig, n_vars: int, task: str = "interpolation",
                 n_classes: int | None = None, seed: int = 0):
        super().__init__()
        if task not in TASKS:
            raise ValueError(f"unknown task {task!r}")
        if task == "classification" and not n_classes:
            raise ValueError("classification needs n_classes")
        self.config, self.n_vars, self.task, self.n_classes = config, n_vars, task, n_classes
        d = config.hidden
        g = torch.Generator().manual_seed(int(seed))
        self.time_emb = TimeEmbedding(d, g)
        self.var_emb = VariableEmbedding(n_vars, d, g)
        if config.representation == "vector" and not config.two_stage:
            self.value_emb = LinearEmbedding(n_vars, d, g)
            self.mask_emb = LinearEmbedding(n_vars, d, g)
        else:
            self.value_emb = LinearEmbedding(1, d, g)
        head_g = torch.Generator().manual_seed(int(seed) + 7919)
        if task == "classification":
            width = n_vars * d if config.two_stage else d
            self.head = ClassificationHead(width, n_classes, head_g)
        else:
            self.head = PredictionHead(d, 1 if config.two_stage else n_vars, head_g)
        ab = config.ablations
        if not (config.two_stage and "no_TA" in ab):
            self.intra = _encoder(config, "intra")
        if config.two_stage and "no_VA" not in ab:
            self.inter = _encoder(config, "inter")

    # -- stages -------------------------------------------------------------

    def _time(self, times: torch.Tensor) -> torch.Tensor | None:
        if "no_TE" in self.config.ablations:
            return None
        return self.time_emb(times)

    def forward_set(self, batch: dict, capture: dict | None = None) -> torch.Tensor:
        z = self.var_emb(batch["vars"]) + self.value_emb(batch["values"])
        return self._single_stage(z, batch, capture)

    def forward_vector(self, batch: dict, capture: dict | None = None) -> torch.Tensor:
        z = self.value_emb(batch["values"]) + self.mask_emb(batch["mask"])
        return self._single_stage(z, batch, capture)

    def _single_stage(self, z, batch, capture):
        te = self._time(batch["times"])
        x = z if te is None else z + te
        h = self.intra(x, batch["valid"])
        pooled = pool_mean(h, batch["valid"])
        if capture is not None:
            capture.update(Z=z, TE=te, H=h, H_o=pooled)
        return pooled

    def forward_series_intra(self, batch: dict, capture: dict | None = None) -> torch.Tensor:
        values, times, valid = batch["values"], batch["times"], batch["valid"]
        b, n, length = values.shape
        d = self.config.hidden
        x = self.value_emb(values)
        te = self._time(times)
        if te is not None:
            # the prompt token carries an all-zero time embedding
            te = torch.cat([torch.zeros(b, n, 1, d, dtype=x.dtype, device=x.device), te], dim=2)
        prompt = self.var_emb.weight[:n].unsqueeze(0).unsqueeze(2).expand(b, n, 1, d)
        z = torch.cat([prompt, x], dim=2)
        full_valid = torch.cat([torch.ones(b, n, 1, dtype=torch.bool, device=valid.device), valid.bool()], dim=2)
        zp = z if te is None else z + te
        flat = zp.reshape(b * n, length + 1, d)
        flat_valid = full_valid.reshape(b * n, length + 1)
        if hasattr(self, "intra"):
            h = self.intra(flat, flat_valid)
        else:
            h = flat
        pooled = pool_mean(h, flat_valid).reshape(b, n, d)
        if capture is not None:
            capture.update(Z=z, TE=te, H=h.reshape(b, n, length + 1, d), H_ser=pooled)
        return pooled

    def forward_series_inter(self, pooled: torch.Tensor, capture: dict | None = None) -> torch.Tensor:
        if not hasattr(self, "inter"):
            out = pooled
            ve = None
        else:
            n = pooled.shape[1]
            if pooled.shape[-1] != self.config.hidden:
                raise ValueError("pooled width does not match encoder width")
            ve = None if "no_VE" in self.config.ablations else self.var_emb.weight[:n]
            x = pooled if ve is None else pooled + ve
            out = self.inter(x, torch.ones(pooled.shape[:2], dtype=torch.bool, device=pooled.device))
        if capture is not None:
            capture.update(VE_ser=ve, H_o_ser=out)
        return out

    def forward_series(self, batch: dict, capture: dict | None = None) -> torch.Tensor:
        return self.forward_series_inter(self.forward_series_intra(batch, capture), capture)

    def forward(self, batch: dict, capture: dict | None = None) -> torch.Tensor:
        """``(B, D)`` for single-stage pipelines, ``(B, N, D)`` for two-stage ones."""
        if self.config.two_stage:
            return self.forward_series(batch, capture)
        if self.config.representation == "set":
            return self.forward_set(batch, capture)
        return self.forward_vector(batch, capture)

    # -- heads --------------------------------------------------------------

    def class_logits(self, batch: dict) -> torch.Tensor:
        return self.head.logits(self(batch))

    def predict(self, batch: dict) -> torch.Tensor:
        rep = self(batch)
        q_t, q_var = batch["q_t"], batch["q_var"]
        if self.config.two_stage:
            rows = rep.gather(1, q_var.unsqueeze(-1).expand(-1, -1, rep.shape[-1]))
            return self.head(rows, q_t)[..., 0]
        hidden = rep.unsqueeze(1).expand(-1, q_t.shape[1], -1)
        return self.head(hidden, q_t).gather(-1, q_var.unsqueeze(-1)).squeeze(-1)

    def loss(self, batch: dict) -> torch.Tensor:
        if self.task == "classification":
            return loss_classification(self.class_logits(batch), batch["labels"])
        pred = self.predict(batch)
        return loss_prediction(pred, batch["q_target"], batch["q_var"], self.n_vars, batch["q_valid"])

    # -- parameter bookkeeping ---------------------------------------------

    def trainable_state(self) -> dict[str, torch.Tensor]:
        return {n: p.detach().clone() for n, p in self.named_parameters() if p.requires_grad}

    def frozen_state(self) -> dict[str, torch.Tensor]:
        return {n: p.detach().clone() for n, p in self.named_parameters() if not p.requires_grad}

    def n_trainable(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)
