"""Plain-numpy float64 forward passes used as independent oracles.

Nothing here imports the package's torch modules; it only reads parameter
arrays by name.
"""
import math

import numpy as np


def layer_norm(x, w, b, eps):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * w + b


def gelu_tanh(x):
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x ** 3)))


def softmax(x):
    x = x - x.max(-1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(-1, keepdims=True)


def encoder(p, x, valid, causal, heads, n_layers, eps=1e-5, wpe=None):
    """p maps archive names to arrays; x is (L, D); valid is (L,) bool."""
    x = np.array(x, dtype=np.float64)
    L, D = x.shape
    if wpe is not None:
        x = x + wpe[:L]
    allowed = np.tile(valid[None, :], (L, 1))
    if causal:
        allowed &= np.tril(np.ones((L, L), dtype=bool))
    for i in range(L):
        if not valid[i]:
            allowed[i, i] = True
    dh = D // heads
    for i in range(n_layers):
        g = lambda k: np.asarray(p[f"blocks.{i}.{k}"], dtype=np.float64)
        h = layer_norm(x, g("ln_1.weight"), g("ln_1.bias"), eps)
        qkv = h @ g("attn.qkv.weight").T + g("attn.qkv.bias")
        q, k, v = qkv[:, :D], qkv[:, D:2 * D], qkv[:, 2 * D:]
        out = np.zeros_like(x)
        for hd in range(heads):
            sl = slice(hd * dh, (hd + 1) * dh)
            s = q[:, sl] @ k[:, sl].T / math.sqrt(dh)
            s = np.where(allowed, s, -np.inf)
            out[:, sl] = softmax(s) @ v[:, sl]
        x = x + out @ g("attn.proj.weight").T + g("attn.proj.bias")
        h = layer_norm(x, g("ln_2.weight"), g("ln_2.bias"), eps)
        f = gelu_tanh(h @ g("mlp.fc.weight").T + g("mlp.fc.bias"))
        x = x + f @ g("mlp.proj.weight").T + g("mlp.proj.bias")
    return layer_norm(x, np.asarray(p["ln_f.weight"], np.float64), np.asarray(p["ln_f.bias"], np.float64), eps)


def time_embedding(t, omega, alpha):
    phase = np.multiply.outer(np.asarray(t, np.float64), omega) + alpha
    out = np.sin(phase)
    out[..., 0] = phase[..., 0]
    return out


def mlp3(p, prefix, x):
    g = lambda k: np.asarray(p[f"{prefix}.{k}"], dtype=np.float64)
    h = np.maximum(x @ g("0.weight").T + g("0.bias"), 0.0)
    h = np.maximum(h @ g("2.weight").T + g("2.bias"), 0.0)
    return h @ g("4.weight").T + g("4.bias")


def sub(params, prefix):
    n = len(prefix) + 1
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix + ".")}


def forward_set(params, tuples, heads, n_layers, causal):
    """tuples: list of (t, var, val) already time-sorted."""
    t = np.array([o[0] for o in tuples])
    n = np.array([o[1] for o in tuples], dtype=int)
    x = np.array([o[2] for o in tuples])
    z = params["var_emb.weight"][n] + np.outer(x, params["value_emb.weight"][0])
    z = z + time_embedding(t, params["time_emb.omega"], params["time_emb.alpha"])
    h = encoder(sub(params, "intra"), z, np.ones(len(tuples), bool), causal, heads, n_layers)
    return h.mean(0)


def forward_series(params, series, heads, n_layers, intra_causal=True, inter_causal=False):
    """series: list over variables of [(t, x), ...]."""
    V = params["var_emb.weight"]
    pooled = []
    for n, seq in enumerate(series):
        rows = [V[n]]
        if seq:
            t = np.array([s[0] for s in seq])
            x = np.array([s[1] for s in seq])
            emb = np.outer(x, params["value_emb.weight"][0]) + time_embedding(t, params["time_emb.omega"], params["time_emb.alpha"])
            rows.extend(emb)
        z = np.stack(rows)
        h = encoder(sub(params, "intra"), z, np.ones(len(rows), bool), intra_causal, heads, n_layers)
        pooled.append(h.mean(0))
    H = np.stack(pooled) + V[: len(series)]
    return encoder(sub(params, "inter"), H, np.ones(len(series), bool), inter_causal, heads, n_layers)


def params_of(module):
    return {k: v.detach().double().numpy() for k, v in module.named_parameters()}
