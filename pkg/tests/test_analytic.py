import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from codedslice.analytic import (
    NetworkModel,
    ProtocolConfig,
    SliceSpec,
    ceil_count,
    default_rates,
    mean_erasure,
    poisson_pmf,
    predict,
    predict_slice,
    rlnc_expected_delay,
    rlnc_expected_goodput,
    rlnc_missing_dof_pmf,
    srarq_delay_pmf,
    srarq_expected_delay,
    srarq_expected_goodput,
)
from codedslice.errors import ConfigurationError

from oracles import exact_missing_dof, geometric_delays, total_variation

CODED = ProtocolConfig.rlnc(50, fec_rate=1.22, fb_rate=2.22)


# -- examples ---------------------------------------------------------------

def test_srarq_delay_value():
    assert srarq_expected_delay(0.1, 1000) == pytest.approx(5500 / 9, rel=1e-12)
    assert srarq_expected_delay(0.2, 150) == pytest.approx(112.5)
    assert srarq_expected_delay(0.0, 150) == 75


def test_srarq_goodput_sums_success_probabilities():
    net = NetworkModel((0.1, 0.3, 0.0), 10)
    assert srarq_expected_goodput(SliceSpec((0, 1, 2)), net) == pytest.approx(2.6)


def test_srarq_pmf_matches_geometric():
    pmf = srarq_delay_pmf(0.2, 150, 40)
    assert pmf.delays[:3].tolist() == [75, 225, 375]
    assert pmf.probs[0] == pytest.approx(0.8)
    assert pmf.probs[1] == pytest.approx(0.16)
    assert pmf.mean() == pytest.approx(112.5, rel=1e-6)


def test_srarq_pmf_against_monte_carlo():
    draws = geometric_delays(0.3, 20, 200_000, seed=3)
    pmf = srarq_delay_pmf(0.3, 20, 30)
    for d, p in pmf.as_pairs()[:5]:
        assert np.mean(draws == d) == pytest.approx(p, abs=4e-3)


def test_missing_dof_example():
    pmf = rlnc_missing_dof_pmf(CODED, 0.1)
    assert pmf.lam == pytest.approx(6.1, abs=1e-12)
    assert pmf.threshold == 11
    expected = [0.9776, 0.0124, 0.0058, 0.0025, 0.0010, 0.0004]
    assert np.allclose(pmf.probs[:6], expected, atol=5e-4)
    assert pmf.total() == pytest.approx(1.0, abs=1e-12)


def test_missing_dof_against_scipy_poisson():
    pmf = rlnc_missing_dof_pmf(CODED, 0.1)
    ref = stats.poisson(6.1)
    assert pmf.probs[0] == pytest.approx(ref.cdf(11), rel=1e-12)
    for m in range(1, 10):
        assert pmf.probs[m] == pytest.approx(ref.pmf(11 + m), rel=1e-10)
    assert pmf.probs[-1] == pytest.approx(ref.sf(60) + ref.pmf(61), rel=1e-8)


def test_poisson_pmf_matches_scipy():
    for lam in (0.0, 0.3, 6.1, 80.0):
        got = poisson_pmf(lam, 200)
        assert np.allclose(got, stats.poisson(lam).pmf(np.arange(201)), atol=1e-14)


def test_threshold_is_not_inflated_by_float_noise():
    assert ceil_count(50 * 1.22) == 61
    assert ceil_count(0.22 * 50) == 11
    assert ceil_count(2.0000001) == 3


def test_rlnc_delay_and_goodput_example():
    pmf = rlnc_missing_dof_pmf(CODED, 0.1)
    d8 = rlnc_expected_delay(CODED, 8, 1000, pmf)
    d9 = rlnc_expected_delay(CODED, 9, 1000, pmf)
    assert d8 > 530 >= d9
    p0 = pmf.p_zero
    assert d9 == pytest.approx((500 + 7) * p0 + (1500 + 7 + 1) * (1 - p0))
    per_link = rlnc_expected_goodput(CODED, 1, pmf)
    assert per_link == pytest.approx(0.8184, abs=5e-4)
    assert rlnc_expected_goodput(CODED, 7, pmf) == pytest.approx(7 * per_link)


def test_default_rates():
    g1, g2 = default_rates(0.2)
    assert g1 == pytest.approx(1.375)
    assert g2 == pytest.approx(2.5)


def test_fec_rate_below_one_rejected():
    with pytest.raises(ConfigurationError):
        ProtocolConfig.rlnc(50, fec_rate=0.9, fb_rate=2.0)
    with pytest.raises(ConfigurationError):
        default_rates(0.1, fec_multiplier=0.5)


def test_network_validation():
    with pytest.raises(ConfigurationError):
        NetworkModel((0.1, 1.0), 10)
    with pytest.raises(ConfigurationError):
        NetworkModel((0.1,), 7)
    with pytest.raises(ConfigurationError):
        SliceSpec((0, 5)).validate(NetworkModel.homogeneous(3, 0.1, 10))


def test_mean_erasure_and_predict_slice():
    net = NetworkModel((0.05, 0.01, 0.08), 1000)
    spec = SliceSpec((0, 2), ProtocolConfig.rlnc(50))
    assert mean_erasure(spec, net) == pytest.approx(0.065)
    pred = predict_slice(spec, net)
    direct = predict(ProtocolConfig.rlnc(50), 0.065, 2, 1000)
    assert pred.delay == direct.delay and pred.goodput == direct.goodput


def test_delay_proxy_window_for_twenty_link_network():
    proto = ProtocolConfig.rlnc(50)
    delays = [predict(proto, 0.2, s, 150).delay for s in range(1, 10)]
    assert delays[3] > 100 >= delays[4]
    assert all(a >= b for a, b in zip(delays, delays[1:]))


@pytest.mark.parametrize("k,probs", list(itertools.product(
    (4, 6, 8, 10, 12), ((0.1,), (0.05, 0.1), (0.02, 0.06, 0.1), (0.01, 0.01, 0.01)))))
def test_poisson_close_to_exact(k, probs):
    pbar = sum(probs) / len(probs)
    proto = ProtocolConfig.rlnc(k).resolve(pbar)
    exact = exact_missing_dof(k, probs, proto.fec_rate)
    approx = rlnc_missing_dof_pmf(proto, pbar).probs
    assert total_variation(approx, exact) <= 0.05


# -- properties ---------------------------------------------------------------

probs_st = st.floats(0.0, 0.9)
rtt_st = st.integers(1, 500).map(lambda x: 2 * x)


@given(probs_st, rtt_st)
def test_srarq_pmf_normalizes(p, rtt):
    pmf = srarq_delay_pmf(p, rtt, 4000)
    assert pmf.total() + pmf.tail_mass == pytest.approx(1.0, abs=1e-9)
    assert pmf.delays.min() == rtt // 2


@given(st.integers(1, 200), st.floats(0.0, 0.6), st.floats(1.0, 2.0), st.floats(1.0, 4.0))
def test_missing_dof_pmf_normalizes(k, p, g1, g2):
    proto = ProtocolConfig.rlnc(k, fec_rate=g1, fb_rate=g2)
    pmf = rlnc_missing_dof_pmf(proto, p)
    assert len(pmf.probs) == k + 1
    assert pmf.total() == pytest.approx(1.0, abs=1e-9)
    assert np.all(pmf.probs >= 0)


@given(st.floats(0.0, 0.85), st.floats(0.0, 0.85), rtt_st)
def test_srarq_delay_monotone_in_erasure(p, q, rtt):
    lo, hi = sorted((p, q))
    assert srarq_expected_delay(lo, rtt) <= srarq_expected_delay(hi, rtt)


@settings(max_examples=50)
@given(st.integers(1, 100), st.floats(0.0, 0.5), rtt_st, st.integers(1, 30))
def test_rlnc_prediction_bounds(k, p, rtt, size):
    proto = ProtocolConfig.rlnc(k)
    small = predict(proto, p, size, rtt)
    large = predict(proto, p, size + 1, rtt)
    assert large.delay <= small.delay
    assert small.delay >= rtt / 2
    # coded goodput never beats the un-coded bound and never drops below k/(k g1 + k g2)
    resolved = proto.resolve(p)
    ratio = small.goodput / (size * (1 - p))
    assert ratio <= 1 + 1e-9
    assert ratio >= 1 / (resolved.fec_rate + resolved.fb_rate) - 1e-9
