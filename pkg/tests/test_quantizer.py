import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from encobs.quantizer import (
    GainSchedule,
    QuantizerOverflow,
    encode_integer,
    error_bound,
    quantize,
    round_half_away,
)
from encobs.stability.bounds import schedule_admissible

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_simple_quantization():
    assert quantize(0.3, 2) == 0.5


def test_ties_round_away_from_zero():
    assert list(round_half_away(np.array([0.5, -0.5, 1.5, -2.5]))) == [1, -1, 2, -3]


def test_integers_are_fixed_points():
    x = np.array([-3.0, 0.0, 7.0])
    assert np.array_equal(quantize(x, 1), x)


@pytest.mark.parametrize("theta", [0, -1.0, float("nan")])
def test_non_positive_gain_rejected(theta):
    with pytest.raises(ValueError):
        quantize(1.0, theta)


def test_random_error_within_half_step():
    x = np.random.default_rng(0).uniform(-10, 10, 10_000)
    assert np.max(np.abs(quantize(x, 1e3) - x)) <= 1 / (2 * 1e3)


@given(hnp.arrays(float, st.integers(1, 20), elements=finite), st.floats(1e-2, 1e4))
def test_norm_bound_and_idempotence(x, theta):
    q = quantize(x, theta)
    assert np.linalg.norm(q - x) <= np.sqrt(x.size) / (2 * theta) * (1 + 1e-9) + 1e-9
    assert np.array_equal(quantize(q, theta), q)


def test_encode_integer_examples():
    assert list(encode_integer(np.zeros(3), 5.0)) == [0, 0, 0]
    assert list(encode_integer(np.array([0.25]), 1e3 * 4)) == [1000]


@given(hnp.arrays(float, st.integers(1, 10), elements=st.floats(-1e3, 1e3)), st.floats(1, 1e5))
def test_encode_then_divide_is_quantize(x, theta):
    codes = encode_integer(x, theta)
    assert np.array_equal(np.array([float(c) for c in codes]) / theta, quantize(x, theta))


def test_encode_overflow_against_limit():
    with pytest.raises(QuantizerOverflow):
        encode_integer(np.array([1.0]), 1e6, limit=10**5)


def test_error_bound_examples():
    assert error_bound(1, 1, 1) == 0.5
    lam = 10.0
    # gamma_A for a 3x3 matrix quantized at Lambda^2
    assert error_bound(3, 3, lam**2) == pytest.approx(3 / (2 * 100))


def test_matrix_error_within_bound():
    rng = np.random.default_rng(1)
    for _ in range(100):
        M = rng.normal(size=(3, 4))
        theta = 10 ** rng.uniform(0, 4)
        assert np.linalg.norm(quantize(M, theta) - M) <= error_bound(3, 4, theta)


# -- schedules -----------------------------------------------------------------------

def test_power_schedule_starts_at_one():
    s = GainSchedule.power(2)
    assert [s(k) for k in range(4)] == [1.0, 1.0, 4.0, 9.0]


def test_cap_saturates():
    s = GainSchedule.power(2, cap=5)
    assert s(10) == 5


def test_schedule_parsing_and_round_trip():
    assert GainSchedule.from_dict("k^2") == GainSchedule.power(2)
    assert GainSchedule.from_dict("k") == GainSchedule.power(1)
    assert GainSchedule.from_dict(30) == GainSchedule.fixed(30)
    for s in (GainSchedule.power(0.4), GainSchedule.fixed(7), GainSchedule.explicit([1, 2, 3])):
        assert GainSchedule.from_dict(s.to_dict()) == s


def test_invalid_schedules():
    with pytest.raises(ValueError):
        GainSchedule.fixed(0)
    with pytest.raises(ValueError):
        GainSchedule.power(-1)
    with pytest.raises(ValueError):
        GainSchedule.explicit([])


def test_admissibility_verdicts():
    assert schedule_admissible(GainSchedule.power(2))
    assert not schedule_admissible(GainSchedule.power(0.4))
    assert not schedule_admissible(GainSchedule.fixed(30))
    assert schedule_admissible(GainSchedule.explicit([1, 2, 4]))


def test_partial_sums_grow_for_small_exponents():
    small = schedule_admissible(GainSchedule.power(0.5), terms=10**6).partial_sum
    smaller = schedule_admissible(GainSchedule.power(0.5), terms=10**4).partial_sum
    # harmonic growth: roughly log(100) more over two decades
    assert small - smaller > 4.0
    conv = schedule_admissible(GainSchedule.power(1.0), terms=10**6).partial_sum
    assert conv < 1 + np.pi**2 / 6
