from collections import Counter

import numpy as np
import pytest

from conftest import random_sample
from frozen_ists.data_model import (
    ISTSSample,
    Observation,
    SeriesRepresentation,
    ValidationError,
    VectorRepresentation,
    series_to_set,
    set_to_vector,
    to_series,
    to_set,
    to_vector,
    vector_to_observations,
    vector_to_series,
)

OBS = ((0.2, 1, 3.0), (0.1, 0, 5.0), (0.1, 1, 2.0))


def sample(obs=OBS, n_vars=2):
    return ISTSSample("x", n_vars, obs)


def test_to_set_sorts_by_time_then_variable():
    assert to_set(sample()).tuples == ((0.1, 0, 5.0), (0.1, 1, 2.0), (0.2, 1, 3.0))


def test_to_set_single_observation():
    assert to_set(sample(((0.5, 0, 1.0),), 1)).tuples == ((0.5, 0, 1.0),)


def test_empty_observations_rejected():
    with pytest.raises(ValidationError):
        ISTSSample("e", 2, ())


def test_duplicate_time_variable_rejected():
    with pytest.raises(ValidationError, match="duplicate"):
        ISTSSample("d", 2, ((0.1, 0, 1.0), (0.1, 0, 2.0)))


@pytest.mark.parametrize("bad", [(0.1, 2, 1.0), (0.1, -1, 1.0), (float("nan"), 0, 1.0), (0.1, 0, float("inf"))])
def test_invalid_observation_rejected(bad):
    with pytest.raises(ValidationError):
        ISTSSample("b", 2, (bad,))


def test_to_vector_worked_example():
    vec = to_vector(sample())
    np.testing.assert_array_equal(vec.times, [0.1, 0.2])
    np.testing.assert_array_equal(vec.values, [[5.0, 2.0], [np.nan, 3.0]])
    np.testing.assert_array_equal(vec.mask, [[1, 1], [0, 1]])


def test_vector_columns_all_or_nothing():
    s = ISTSSample("c", 2, ((0.1, 0, 1.0), (0.3, 0, 2.0), (0.5, 0, 3.0)))
    vec = to_vector(s)
    assert vec.mask[:, 0].all() and not vec.mask[:, 1].any()


def test_vector_rejects_empty_row():
    with pytest.raises(ValidationError):
        VectorRepresentation(np.array([0.0, 1.0]), np.array([[1.0], [np.nan]]), np.array([[True], [False]]))


def test_to_series_worked_example():
    ser = to_series(sample())
    assert ser.series == (((0.1, 5.0),), ((0.1, 2.0), (0.2, 3.0)))


def test_to_series_unobserved_variable_is_empty():
    ser = to_series(sample(n_vars=3))
    assert ser.series[2] == ()
    assert ser.lengths == [1, 2, 0]


def test_series_rejects_unsorted():
    with pytest.raises(ValidationError):
        SeriesRepresentation((((0.2, 1.0), (0.1, 2.0)),))


def test_vector_round_trip_1000_random(rng):
    for i in range(1000):
        s = random_sample(rng, idx=i)
        back = vector_to_observations(to_vector(s))
        assert Counter(back) == Counter(s.observations)


def test_series_lengths_sum_to_size(rng):
    for i in range(1000):
        s = random_sample(rng, idx=i)
        assert sum(to_series(s).lengths) == s.size


def test_conversion_closure(rng):
    for i in range(1000):
        s = random_sample(rng, idx=i)
        vec = set_to_vector(to_set(s), s.n_vars)
        back = series_to_set(vector_to_series(vec))
        assert back == to_set(s)
        assert Counter(back.tuples) == Counter(s.observations)


def test_vector_size_bounds(rng):
    for i in range(200):
        s = random_sample(rng, idx=i)
        vec = to_vector(s)
        assert vec.length <= s.size <= vec.length * s.n_vars
        assert vec.size == s.size


def test_set_total_order(rng):
    s = random_sample(rng)
    keys = [(o.t, o.var) for o in to_set(s).tuples]
    assert keys == sorted(keys) and len(set(keys)) == len(keys)


def test_samples_are_immutable():
    s = sample()
    with pytest.raises(AttributeError):
        s.n_vars = 3
    with pytest.raises(TypeError):
        s.attrs["x"] = "y"
    vec = to_vector(s)
    with pytest.raises(ValueError):
        vec.values[0, 0] = 1.0


def test_observation_fields():
    o = Observation(0.1, 0, 2.0)
    assert (o.t, o.var, o.val) == (0.1, 0, 2.0)
