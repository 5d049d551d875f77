import math

import pytest
from hypothesis import given, settings, strategies as st

from fsobackhaul.reliability import (
    ChannelParams,
    link_outage,
    link_reliability,
    log_link_outage,
    log_amplitude_variance,
    max_transmission_distance,
)

P = ChannelParams()

# frozen from a 50-digit mpmath evaluation of the closed forms at l = 1400 m
SIGMA2_1400 = 0.0091621569434377525385909981964677697319390726547182
GAMMA_1400 = 0.87811512190432027174771600763397620163988284711669


def test_variance_zero_at_origin():
    assert log_amplitude_variance(0.0, P) == 0.0


def test_variance_golden_value():
    assert log_amplitude_variance(1400.0, P) == pytest.approx(SIGMA2_1400, rel=1e-13)


@given(st.floats(min_value=1.0, max_value=50_000.0))
def test_variance_power_law(l):
    ratio = log_amplitude_variance(2 * l, P) / log_amplitude_variance(l, P)
    assert ratio == pytest.approx(2 ** (11 / 6), rel=1e-12)


def test_negative_distance_rejected():
    with pytest.raises(ValueError):
        log_amplitude_variance(-1.0, P)


def test_reliability_golden_value():
    assert abs(link_reliability(1400.0, P) - GAMMA_1400) <= 1e-12


def test_reliability_near_threshold_at_1400():
    assert abs(link_reliability(1400.0, P) - 0.88) <= 0.01


def test_reliability_limits():
    assert link_reliability(0.0, P) == 1.0
    assert link_reliability(1e-9, P) == pytest.approx(1.0, abs=1e-12)
    half = ChannelParams(intensity_ratio=1.0)
    for l in (1.0, 100.0, 5000.0):
        assert abs(link_reliability(l, half) - 0.5) <= 1e-12


def test_ratio_above_one_rejected():
    with pytest.raises(ValueError):
        link_reliability(100.0, ChannelParams(intensity_ratio=1.2))


@settings(max_examples=300)
@given(st.floats(min_value=0.0, max_value=1e5), st.floats(min_value=0.0, max_value=1e5))
def test_reliability_monotone_and_in_range(a, b):
    lo, hi = sorted((a, b))
    ga, gb = link_reliability(lo, P), link_reliability(hi, P)
    assert 0.0 < gb <= 1.0 and 0.0 < ga <= 1.0
    if hi > lo:
        assert ga >= gb
    # below ~165 m the reliability is within one ulp of 1.0
    if hi > lo + 1.0 and lo > 200.0:
        assert ga > gb


@settings(max_examples=300)
@given(st.floats(min_value=50.0, max_value=1e5), st.floats(min_value=0.5, max_value=1e4))
def test_outage_strictly_increasing(l, step):
    assert link_outage(l + step, P) > link_outage(l, P) > 0.0


@given(st.floats(min_value=0.0, max_value=1e5))
def test_outage_complements_reliability(l):
    assert link_outage(l, P) + link_reliability(l, P) == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=300)
@given(st.floats(min_value=1e-6, max_value=1e5), st.floats(min_value=1e-3, max_value=1e4))
def test_log_outage_strictly_increasing(l, step):
    assert log_link_outage(l + step, P) > log_link_outage(l, P)


@given(st.floats(min_value=60.0, max_value=1e5))
def test_log_outage_matches_outage(l):
    assert log_link_outage(l, P) == pytest.approx(math.log(link_outage(l, P)), rel=1e-12)


def test_log_outage_limits():
    assert log_link_outage(0.0, P) == -math.inf
    assert log_link_outage(5.0, P) < log_link_outage(20.0, P) < -1000
    assert log_link_outage(300.0, ChannelParams(intensity_ratio=1.0)) == pytest.approx(math.log(0.5), abs=1e-15)


def test_max_distance_self_consistent():
    L = max_transmission_distance(P)
    assert 1375 <= L <= 1425
    assert link_reliability(L, P) >= P.reliability_threshold
    assert link_reliability(L + 0.1, P) < P.reliability_threshold


def test_max_distance_reproducible():
    assert max_transmission_distance(P) == max_transmission_distance(ChannelParams())


def test_max_distance_threshold_edges():
    assert max_transmission_distance(ChannelParams(reliability_threshold=1.0)) == 0.0
    # L shrinks toward 0 as the threshold approaches 1
    reach = [max_transmission_distance(ChannelParams(reliability_threshold=t)) for t in (0.9, 0.99, 1 - 1e-6, 1 - 1e-12)]
    assert all(a > b for a, b in zip(reach, reach[1:]))
    assert reach[-1] < 200.0
    with pytest.raises(ValueError):
        max_transmission_distance(ChannelParams(reliability_threshold=0.5))
    with pytest.raises(ValueError):
        max_transmission_distance(ChannelParams(intensity_ratio=1.0))


@given(st.floats(min_value=0.6, max_value=0.99))
def test_max_distance_decreases_with_threshold(th):
    a = max_transmission_distance(ChannelParams(reliability_threshold=th))
    b = max_transmission_distance(ChannelParams(reliability_threshold=min(0.999, th + 0.005)))
    assert b <= a + 0.02
    assert math.isfinite(a)
