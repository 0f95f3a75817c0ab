from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_sample
from frozen_ists.data_model import ISTSSample, ValidationError, to_vector
from frozen_ists.task_prep import (
    NormalizationError,
    SplitSpec,
    apply_norm,
    few_shot_subset,
    fit_norm,
    forward_fill,
    invert_norm,
    make_extrapolation_task,
    make_interpolation_task,
    normalize_time,
    split_dataset,
    split_indices,
    zero_shot_split,
)


def mk(obs, n_vars=2, sid="s", **kw):
    return ISTSSample(sid, n_vars, tuple(obs), **kw)


def test_minmax_midpoint():
    stats = fit_norm([mk([(0.0, 0, 2.0), (1.0, 0, 4.0)], 1)])
    assert apply_norm([mk([(0.5, 0, 3.0)], 1)], stats)[0].observations[0].val == 0.5


def test_constant_variable_maps_to_zero():
    stats = fit_norm([mk([(0.0, 0, 7.0), (1.0, 0, 7.0)], 1)])
    assert apply_norm([mk([(0.5, 0, 123.0)], 1)], stats)[0].observations[0].val == 0.0


def test_apply_before_fit():
    with pytest.raises(NormalizationError):
        apply_norm([mk([(0.0, 0, 1.0)], 1)], None)


def test_invert_round_trip(rng):
    lo, hi = -3.7, 12.25
    stats = fit_norm([mk([(0.0, 0, lo), (1.0, 0, hi)], 1)])
    v = rng.uniform(-50, 50, size=10_000)
    normed = (v - lo) / (hi - lo)
    np.testing.assert_allclose(invert_norm(normed, stats, 0), v, rtol=0, atol=1e-12)


def test_training_values_in_unit_interval(rng):
    train = [random_sample(rng, n_vars=3, idx=i) for i in range(50)]
    stats = fit_norm(train)
    vals = [o.val for s in apply_norm(train, stats) for o in s.observations]
    assert min(vals) >= 0.0 and max(vals) <= 1.0


def test_normalize_time():
    assert normalize_time(24.0, 48.0) == 0.5
    assert normalize_time(0.0, 48.0) == 0.0
    assert normalize_time(48.0, 48.0) == 1.0
    assert normalize_time(60.0, 48.0) > 1.0
    with pytest.raises(ValidationError):
        normalize_time(-1.0, 48.0)


def ten_times():
    return mk([(float(i), i % 2, float(i)) for i in range(10)])


def test_interpolation_masks_floor_30_percent():
    inp, qs = make_interpolation_task(ten_times(), 0.3, seed=0)
    assert len({q.t for q in qs.queries}) == 3
    assert len(inp.timestamps()) == 7


def test_interpolation_two_timestamps():
    inp, qs = make_interpolation_task(mk([(0.0, 0, 1.0), (1.0, 0, 2.0)]), 0.3, seed=1)
    assert len(qs) == 1 and inp.size == 1


def test_interpolation_needs_two_timestamps():
    with pytest.raises(ValidationError):
        make_interpolation_task(mk([(0.0, 0, 1.0), (0.0, 1, 2.0)]), 0.3, seed=0)


def test_interpolation_masks_whole_timestamps(rng):
    for i in range(200):
        s = random_sample(rng, idx=i)
        if len(s.timestamps()) < 2:
            continue
        inp, qs = make_interpolation_task(s, 0.3, seed=i)
        masked = {q.t for q in qs.queries}
        assert not masked & {o.t for o in inp.observations}
        assert len(masked) == max(int(np.floor(0.3 * len(s.timestamps()))), 1)


def test_interpolation_partition_1000(rng):
    checked = 0
    while checked < 1000:
        s = random_sample(rng, idx=checked)
        if len(s.timestamps()) < 2:
            continue
        inp, qs = make_interpolation_task(s, 0.3, seed=checked)
        union = Counter(inp.observations) + Counter((q.t, q.var, q.target) for q in qs.queries)
        assert union == Counter(s.observations)
        assert sum(qs.counts) == len(qs)
        checked += 1


def test_interpolation_deterministic():
    a = make_interpolation_task(ten_times(), 0.3, seed=5)
    b = make_interpolation_task(ten_times(), 0.3, seed=5)
    assert a == b


def test_extrapolation_worked_example():
    inp, qs = make_extrapolation_task(mk([(0.2, 0, 1.0), (0.7, 1, 2.0)]), 0.5, horizon=1.0)
    assert [o.t for o in inp.observations] == [0.2]
    assert [q.t for q in qs.queries] == [0.7]


def test_extrapolation_full_fraction_errors():
    with pytest.raises(ValidationError):
        make_extrapolation_task(mk([(0.2, 0, 1.0), (0.7, 1, 2.0)]), 1.0, horizon=1.0)


def test_extrapolation_queries_after_cut(rng):
    done = 0
    for i in range(5000):
        s = random_sample(rng, idx=i)
        try:
            inp, qs = make_extrapolation_task(s, 0.5, horizon=10.0)
        except ValidationError:
            continue
        assert all(q.t >= 5.0 for q in qs.queries)
        assert all(o.t < 5.0 for o in inp.observations)
        done += 1
        if done == 1000:
            break
    assert done == 1000


def _samples(n):
    return [mk([(0.0, 0, 1.0)], sid=f"s{i}") for i in range(n)]


@pytest.mark.parametrize("n,ratios,sizes", [(100, (0.8, 0.1, 0.1), (80, 10, 10)), (10, (0.6, 0.2, 0.2), (6, 2, 2))])
def test_split_sizes(n, ratios, sizes):
    tr, va, te = split_dataset(_samples(n), SplitSpec(ratios, seed=3))
    assert (len(tr), len(va), len(te)) == sizes
    ids = [s.id for s in tr + va + te]
    assert sorted(ids) == sorted(s.id for s in _samples(n))


def test_split_deterministic():
    assert split_indices(57, SplitSpec(seed=9)) == split_indices(57, SplitSpec(seed=9))
    assert split_indices(57, SplitSpec(seed=9)) != split_indices(57, SplitSpec(seed=10))


@given(n=st.integers(10, 400), seed=st.integers(0, 10_000))
@settings(max_examples=100, deadline=None)
def test_split_partition_property(n, seed):
    tr, va, te = split_indices(n, SplitSpec((0.6, 0.2, 0.2), seed=seed))
    assert sorted(tr + va + te) == list(range(n))
    assert len(te) == int(np.floor(0.2 * n + 1e-9)) and len(va) == int(np.floor(0.2 * n + 1e-9))


def test_split_empty_partition_errors():
    with pytest.raises(ValidationError):
        split_dataset(_samples(5), SplitSpec((0.8, 0.1, 0.1)))


def test_split_ratio_validation():
    with pytest.raises(ValidationError):
        SplitSpec((0.5, 0.3, 0.3))
    with pytest.raises(ValidationError):
        SplitSpec((1.0, 0.0, 0.0))


def test_few_shot_sizes():
    assert len(few_shot_subset(_samples(800), 0.1, seed=0)) == 80
    assert len(few_shot_subset(_samples(5), 0.1, seed=0)) == 1
    with pytest.raises(ValidationError):
        few_shot_subset([], 0.1)


def test_few_shot_subset_containment():
    train = _samples(137)
    ids = {s.id for s in train}
    for seed in range(50):
        sub = few_shot_subset(train, 0.1, seed=seed)
        assert {s.id for s in sub} <= ids and len({s.id for s in sub}) == len(sub) == 13
    assert few_shot_subset(train, 0.1, seed=4) == few_shot_subset(train, 0.1, seed=4)


def _aged(n):
    return [mk([(0.0, 0, 1.0)], sid=f"p{i}", attrs={"Age": "Young" if i % 3 == 0 else "Old"}) for i in range(n)]


def test_zero_shot_holdout():
    train, test = zero_shot_split(_aged(30), "Age", {"Young"})
    assert all(s.attrs["Age"] == "Young" for s in test)
    assert all(s.attrs["Age"] == "Old" for s in train)
    assert not {s.id for s in train} & {s.id for s in test}
    assert len(train) + len(test) == 30


def test_zero_shot_errors():
    with pytest.raises(ValidationError):
        zero_shot_split(_aged(10), "Age", set())
    with pytest.raises(ValidationError):
        zero_shot_split(_aged(10), "ICUType", {"MICU"})
    with pytest.raises(ValidationError):
        zero_shot_split(_aged(10), "Age", {"Young", "Old"})


def test_group_holdout_split_mode():
    spec = SplitSpec((0.8, 0.1, 0.1), seed=1, mode="group-holdout", group_attr="Age", held_out=("Young",))
    tr, va, te = split_dataset(_aged(60), spec)
    assert {s.attrs["Age"] for s in te} == {"Young"}
    assert {s.attrs["Age"] for s in tr + va} == {"Old"}
    assert len(va) == int(np.floor(0.1 / 0.9 * 40 + 1e-9))


def _vec(column):
    obs = [(float(i), 0, v) for i, v in enumerate(column) if v is not None]
    # a second always-observed variable keeps every row non-empty
    obs += [(float(i), 1, 0.0) for i in range(len(column))]
    return to_vector(mk(obs))


def test_forward_fill_carries_last_value():
    out = forward_fill(_vec([5.0, None, None]))
    np.testing.assert_array_equal(out.values[:, 0], [5.0, 5.0, 5.0])
    np.testing.assert_array_equal(out.mask[:, 0], [1, 0, 0])


def test_forward_fill_leading_gap_is_zero():
    np.testing.assert_array_equal(forward_fill(_vec([None, 3.0])).values[:, 0], [0.0, 3.0])


def test_forward_fill_identity_when_observed():
    vec = _vec([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(forward_fill(vec).values, vec.values)
