"""Frozen pre-norm transformer encoder with truncation and a freeze policy.

Parameter names (``blocks.{i}.ln_1.weight``, ``blocks.{i}.attn.qkv.weight``, ...)
are the archive names.  ``gpt2_state_to_archive`` maps a GPT-2 style state dict
onto them.
"""
from __future__ import annotations

import fnmatch
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .archive import ArchiveError, NamedTensorArchive

EXTERNAL = "external"
LEARNED = "learned_trainable"


@dataclass(frozen=True)
class BackboneConfig:
    n_layers: int = 2
    hidden: int = 64
    heads: int = 4
    causal: bool = True
    positional_mode: str = EXTERNAL
    max_positions: int = 1024
    ffn_mult: int = 4
    ln_eps: float = 1e-5
    available_layers: int | None = None

    def __post_init__(self):
        available = self.available_layers or self.n_layers
        if not 1 <= self.n_layers <= available:
            raise ValueError(f"n_layers must be in [1, {available}], got {self.n_layers}")
        if self.hidden % self.heads:
            raise ValueError(f"hidden={self.hidden} is not divisible by heads={self.heads}")
        if self.positional_mode not in (EXTERNAL, LEARNED):
            raise ValueError(f"unknown positional mode {self.positional_mode!r}")


@dataclass(frozen=True)
class FreezePolicy:
    trainable: tuple[str, ...] = field(default=("*ln_*.weight", "*ln_*.bias"))

    def is_trainable(self, name: str) -> bool:
        return any(fnmatch.fnmatchcase(name, p) for p in self.trainable)


NORM_ONLY = FreezePolicy()
ALL_TRAINABLE = FreezePolicy(("*",))
NOTHING_TRAINABLE = FreezePolicy(())


class SelfAttention(nn.Module):
    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.heads = cfg.heads
        self.qkv = nn.Linear(cfg.hidden, 3 * cfg.hidden)
        self.proj = nn.Linear(cfg.hidden, cfg.hidden)

    def forward(self, x: torch.Tensor, allowed: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        q, k, v = self.qkv(x).split(d, dim=-1)
        q, k, v = (a.view(b, n, self.heads, d // self.heads).transpose(1, 2) for a in (q, k, v))
        out = F.scaled_dot_product_attention(q, k, v, attn_mask=allowed.unsqueeze(1))
        return self.proj(out.transpose(1, 2).reshape(b, n, d))


class Block(nn.Module):
    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.ln_1 = nn.LayerNorm(cfg.hidden, eps=cfg.ln_eps)
        self.attn = SelfAttention(cfg)
        self.ln_2 = nn.LayerNorm(cfg.hidden, eps=cfg.ln_eps)
        self.mlp = nn.Sequential()
        self.mlp.add_module("fc", nn.Linear(cfg.hidden, cfg.ffn_mult * cfg.hidden))
        self.mlp.add_module("act", nn.GELU(approximate="tanh"))
        self.mlp.add_module("proj", nn.Linear(cfg.ffn_mult * cfg.hidden, cfg.hidden))

    def forward(self, x, allowed):
        x = x + self.attn(self.ln_1(x), allowed)
        return x + self.mlp(self.ln_2(x))


class SequenceEncoder(nn.Module):
    """Consumes pre-embedded vectors ``(B, L, D)`` plus a validity mask ``(B, L)``.

    Valid positions never attend to padding; outputs at padded positions are
    meaningless and must be ignored by the caller.
    """

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.n_layers))
        self.ln_f = nn.LayerNorm(cfg.hidden, eps=cfg.ln_eps)
        if cfg.positional_mode == LEARNED:
            self.wpe = nn.Parameter(torch.zeros(cfg.max_positions, cfg.hidden))

    @property
    def hidden(self) -> int:
        return self.cfg.hidden

    def positional_table(self, index: int) -> torch.Tensor:
        if self.cfg.positional_mode != LEARNED:
            raise ValueError("positional table only exists in learned_trainable mode")
        if not 0 <= index < self.cfg.max_positions:
            raise IndexError(f"position {index} outside table of {self.cfg.max_positions} rows")
        return self.wpe[index]

    def attention_mask(self, valid: torch.Tensor) -> torch.Tensor:
        n = valid.shape[1]
        allowed = valid.unsqueeze(1).expand(-1, n, -1)
        eye = torch.eye(n, dtype=torch.bool, device=valid.device)
        if self.cfg.causal:
            allowed = allowed & eye.logical_or(torch.ones_like(eye).tril())
        # padded queries attend to themselves so no softmax row is empty
        return allowed | (eye & ~valid.unsqueeze(-1))

    def forward(self, x: torch.Tensor, valid: torch.Tensor | None = None) -> torch.Tensor:
        if x.shape[-1] != self.cfg.hidden:
            raise ValueError(f"input width {x.shape[-1]} does not match encoder width {self.cfg.hidden}")
        if valid is None:
            valid = torch.ones(x.shape[:2], dtype=torch.bool, device=x.device)
        if self.cfg.positional_mode == LEARNED:
            if x.shape[1] > self.cfg.max_positions:
                raise IndexError(f"sequence of {x.shape[1]} exceeds {self.cfg.max_positions} positions")
            x = x + self.wpe[: x.shape[1]]
        allowed = self.attention_mask(valid.bool())
        for block in self.blocks:
            x = block(x, allowed)
        return self.ln_f(x)

    def frozen_names(self) -> list[str]:
        return [n for n, p in self.named_parameters() if not p.requires_grad]

    def trainable_names(self) -> list[str]:
        return [n for n, p in self.named_parameters() if p.requires_grad]


def encode(encoder: SequenceEncoder, inputs, valid_mask=None) -> torch.Tensor:
    """Encode a single unbatched sequence ``(L, D)``."""
    x = torch.as_tensor(inputs)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("encode expects a non-empty (L, D) sequence")
    valid = None if valid_mask is None else torch.as_tensor(valid_mask, dtype=torch.bool)[None]
    return encoder(x[None], valid)[0]


def apply_freeze_policy(encoder: SequenceEncoder, policy: FreezePolicy) -> SequenceEncoder:
    for name, p in encoder.named_parameters():
        # a fine-tuned position table is the point of learned_trainable mode
        p.requires_grad_(name == "wpe" or policy.is_trainable(name))
    return encoder


def _init_tiny(encoder: SequenceEncoder, seed: int) -> None:
    g = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, p in encoder.named_parameters():
            if ".ln_" in name or name.startswith("ln_f"):
                p.fill_(1.0 if name.endswith("weight") else 0.0)
            elif name == "wpe":
                p.copy_(torch.randn(p.shape, generator=g, dtype=torch.float64) * 0.1)
            elif name.endswith("weight"):
                fan_in = p.shape[1]
                p.copy_(torch.randn(p.shape, generator=g, dtype=torch.float64) / math.sqrt(fan_in))
            else:
                p.copy_(torch.randn(p.shape, generator=g, dtype=torch.float64) * 0.02)


def build_encoder(
    config: BackboneConfig,
    archive: NamedTensorArchive | None = None,
    seed: int | None = None,
    policy: FreezePolicy = NORM_ONLY,
) -> SequenceEncoder:
    """From archive tensors (bit-exact) or as a deterministic random-feature tiny stack."""
    if (archive is None) == (seed is None):
        raise ValueError("give exactly one of archive or seed")
    encoder = SequenceEncoder(config)
    if archive is None:
        _init_tiny(encoder, seed)
    else:
        state = {}
        for name, p in encoder.named_parameters():
            if name not in archive:
                raise ArchiveError(f"archive is missing tensor {name!r}")
            arr = archive[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise ArchiveError(f"{name!r}: archive shape {tuple(arr.shape)} != expected {tuple(p.shape)}")
            state[name] = torch.from_numpy(np.array(arr, dtype=np.float32))
        encoder.load_state_dict(state, strict=True)
    return apply_freeze_policy(encoder, policy)


def encoder_to_archive(encoder: SequenceEncoder) -> dict[str, np.ndarray]:
    return {n: p.detach().cpu().numpy().astype(np.float32) for n, p in encoder.named_parameters()}


def gpt2_state_to_archive(state: dict, n_layers: int) -> dict[str, np.ndarray]:
    """Rename GPT-2 checkpoint tensors (``h.{i}.*``, Conv1D in x out layout) to archive names.

    Token embeddings are dropped; ``wpe`` is kept for learned-position ablations.
    """

    def arr(key):
        v = state[key]
        return np.asarray(v.detach().cpu().numpy() if hasattr(v, "detach") else v, dtype=np.float32)

    out = {"ln_f.weight": arr("ln_f.weight"), "ln_f.bias": arr("ln_f.bias")}
    if "wpe.weight" in state:
        out["wpe"] = arr("wpe.weight")
    for i in range(n_layers):
        src, dst = f"h.{i}.", f"blocks.{i}."
        for a, b in (("ln_1", "ln_1"), ("ln_2", "ln_2")):
            out[dst + b + ".weight"] = arr(src + a + ".weight")
            out[dst + b + ".bias"] = arr(src + a + ".bias")
        for a, b in (("attn.c_attn", "attn.qkv"), ("attn.c_proj", "attn.proj"),
                     ("mlp.c_fc", "mlp.fc"), ("mlp.c_proj", "mlp.proj")):
            out[dst + b + ".weight"] = np.ascontiguousarray(arr(src + a + ".weight").T)
            out[dst + b + ".bias"] = arr(src + a + ".bias")
    return out
