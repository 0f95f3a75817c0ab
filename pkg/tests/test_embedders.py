import math

import pytest
import torch

from frozen_ists.embedders import (
    LinearEmbedding,
    TimeEmbedding,
    VariableEmbedding,
    embed_mask,
    embed_time,
    embed_value,
    embed_value_vector,
    embed_variable,
)


def gen(seed=0):
    return torch.Generator().manual_seed(seed)


def test_trend_coordinate():
    te = TimeEmbedding(8, gen())
    with torch.no_grad():
        te.omega[0], te.alpha[0] = 1.0, 0.0
    assert embed_time(0.5, te)[0].item() == 0.5


def test_zero_frequency_is_constant():
    te = TimeEmbedding(8, gen()).double()
    with torch.no_grad():
        te.omega[1:] = 0.0
    a, b = embed_time(0.1, te), embed_time(7.3, te)
    torch.testing.assert_close(a[1:], torch.sin(te.alpha[1:]), rtol=0, atol=0)
    torch.testing.assert_close(a[1:], b[1:], rtol=0, atol=0)


def test_trend_coordinate_exact_affinity(rng):
    te = TimeEmbedding(16, gen(3)).double()
    w0 = te.omega[0].item()
    for _ in range(200):
        a, b = rng.uniform(-5, 5, size=2)
        fa, fb = embed_time(a, te)[0].item(), embed_time(b, te)[0].item()
        assert fa - fb == pytest.approx(w0 * (a - b), rel=1e-12, abs=1e-12)


def test_periodic_coordinates_bounded(rng):
    for seed in range(10):
        te = TimeEmbedding(32, gen(seed)).double()
        with torch.no_grad():
            te.omega.normal_(0, 50)
            te.alpha.normal_(0, 10)
        t = torch.as_tensor(rng.uniform(-100, 100, size=1000))
        out = te(t)
        assert out[:, 1:].abs().max() <= 1.0


def test_init_ranges():
    te = TimeEmbedding(256, gen(1))
    assert te.omega[1:].min() >= 0 and te.omega[1:].max() <= 2 * math.pi * 10
    assert te.alpha.min() >= 0 and te.alpha.max() <= 2 * math.pi
    with pytest.raises(ValueError):
        TimeEmbedding(1)


def test_variable_lookup():
    table = VariableEmbedding(3, 4, gen())
    torch.testing.assert_close(embed_variable(0, table), table.weight[0])
    assert not torch.equal(table.weight[0], table.weight[1])
    with pytest.raises(IndexError):
        embed_variable(3, table)


def test_variable_sparse_update():
    table = VariableEmbedding(4, 6, gen())
    before = table.weight.detach().clone()
    opt = torch.optim.Adam(table.parameters(), lr=0.1)
    table(torch.tensor([2, 2])).pow(2).sum().backward()
    opt.step()
    changed = (table.weight.detach() != before).any(dim=1)
    assert changed.tolist() == [False, False, True, False]


def test_value_linear_no_bias():
    emb = LinearEmbedding(1, 5, gen()).double()
    assert torch.count_nonzero(embed_value(0.0, emb)) == 0
    x = 0.37
    torch.testing.assert_close(embed_value(2 * x, emb), 2 * embed_value(x, emb), rtol=0, atol=1e-12)
    assert [n for n, _ in emb.named_parameters()] == ["weight"]


def test_value_vector_basis():
    emb = LinearEmbedding(3, 4, gen()).double()
    e1 = torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64)
    torch.testing.assert_close(embed_value_vector(e1, emb), emb.weight[1], rtol=0, atol=0)


def test_mask_embedding_linear():
    emb = LinearEmbedding(4, 6, gen()).double()
    assert torch.count_nonzero(embed_mask([0, 0, 0, 0], emb)) == 0
    torch.testing.assert_close(embed_mask([0, 0, 1, 0], emb), emb.weight[2], rtol=0, atol=0)
    a, b = [1, 0, 1, 0], [0, 1, 0, 0]
    torch.testing.assert_close(embed_mask([1, 1, 1, 0], emb), embed_mask(a, emb) + embed_mask(b, emb), rtol=0, atol=1e-12)
    with pytest.raises(ValueError):
        embed_mask([0.5, 0, 0, 0], emb)


def central_fd_check(module, make_loss, rel=1e-4, step=1e-5):
    """Compare autograd gradients of every parameter with central differences."""
    module.zero_grad()
    make_loss().backward()
    for name, p in module.named_parameters():
        analytic = p.grad.detach().clone()
        numeric = torch.zeros_like(p)
        flat = p.data.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + step
            up = make_loss().item()
            flat[i] = orig - step
            down = make_loss().item()
            flat[i] = orig
            numeric.view(-1)[i] = (up - down) / (2 * step)
        err = (analytic - numeric).norm() / max(numeric.norm().item(), 1e-12)
        assert err < rel, f"{name}: relative error {err}"


def test_finite_difference_gradients(rng):
    t = torch.as_tensor(rng.uniform(0, 1, size=7))
    x = torch.as_tensor(rng.normal(size=7))
    xv = torch.as_tensor(rng.normal(size=(5, 3)))
    m = torch.as_tensor((rng.random((5, 3)) < 0.5).astype(float))
    idx = torch.as_tensor(rng.integers(0, 3, size=7))
    w = torch.as_tensor(rng.normal(size=6))
    te = TimeEmbedding(6, gen(1)).double()
    with torch.no_grad():
        te.omega.uniform_(0, 5)
    central_fd_check(te, lambda: (te(t) @ w).sin().sum())
    val = LinearEmbedding(1, 6, gen(2)).double()
    central_fd_check(val, lambda: (val(x) @ w).sin().sum())
    vec = LinearEmbedding(3, 6, gen(3)).double()
    central_fd_check(vec, lambda: (vec(xv) @ w).sin().sum())
    msk = LinearEmbedding(3, 6, gen(4)).double()
    central_fd_check(msk, lambda: (msk(m) @ w).sin().sum())
    var = VariableEmbedding(3, 6, gen(5)).double()
    central_fd_check(var, lambda: (var(idx) @ w).sin().sum())
