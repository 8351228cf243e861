import pytest
from hypothesis import given
from hypothesis import strategies as st

from codedslice.analytic import NetworkModel, ProtocolConfig, predict
from codedslice.errors import ConfigurationError, UsageError
from codedslice.planner import (
    Binding,
    Requirement,
    Strategy,
    capacity,
    min_links,
    plan_partition,
)

CODED = ProtocolConfig.rlnc(50, fec_rate=1.22, fb_rate=2.22)
SRARQ = ProtocolConfig.srarq()


def test_example_thresholds():
    assert min_links(Requirement(SRARQ, min_goodput=5), 0.1, 1000).links_needed == 6
    res = min_links(Requirement(SRARQ, max_delay=530), 0.1, 1000)
    assert not res.feasible and res.binding_constraint is Binding.DELAY
    assert min_links(Requirement(CODED, max_delay=530), 0.1, 1000).links_needed == 9
    assert min_links(Requirement(CODED, min_goodput=5), 0.1, 1000).links_needed == 7
    both = min_links(Requirement(CODED, min_goodput=5, max_delay=530), 0.1, 1000)
    assert both.links_needed == 9 and both.binding_constraint is Binding.DELAY


def test_capacity():
    net = NetworkModel.homogeneous(10_000, 0.1, 1000)
    assert capacity(net, Requirement(CODED, min_goodput=5, max_delay=530)) == 1111
    assert capacity(net, Requirement(SRARQ, max_delay=530)) == 0
    with pytest.raises(UsageError):
        capacity(NetworkModel((0.1, 0.2), 10), Requirement(SRARQ, min_goodput=1))


def test_requirement_validation():
    with pytest.raises(ConfigurationError):
        Requirement(SRARQ)
    with pytest.raises(ConfigurationError):
        Requirement(SRARQ, min_goodput=-1)
    r = Requirement(CODED, max_delay=200, max_inorder_delay=100)
    assert r.delay_bound == 100 and r.needs_simulation


def test_half_rtt_above_bound_is_infeasible():
    res = min_links(Requirement(CODED, max_delay=400), 0.1, 1000)
    assert not res.feasible


def twenty_links():
    return NetworkModel.homogeneous(20, 0.2, 150)


def test_uncoded_pair_has_no_feasible_split():
    reqs = [Requirement(SRARQ, max_inorder_delay=100), Requirement(SRARQ, min_goodput=9)]
    assert plan_partition(twenty_links(), reqs) == []


def test_mixed_pair_feasible_pending_simulation():
    reqs = [Requirement(ProtocolConfig.rlnc(50), max_inorder_delay=100),
            Requirement(SRARQ, min_goodput=9)]
    plans = plan_partition(twenty_links(), reqs)
    firsts = sorted(p.choice for p, _ in plans)
    assert firsts == [5, 6, 7, 8]
    assert all(p.sizes()[1] >= 12 for p, _ in plans)
    assert all(res[0].needs_simulation for _, res in plans)


def test_single_app_gets_full_network():
    plans = plan_partition(twenty_links(), [Requirement(SRARQ, min_goodput=1)])
    assert len(plans) == 1 and plans[0][0].links_used == 20


def test_count_based_plan():
    reqs = [Requirement(ProtocolConfig.rlnc(50), max_delay=100),
            Requirement(SRARQ, min_goodput=9)]
    [(plan, allocs)] = plan_partition(twenty_links(), reqs, Strategy.COUNT_BASED)
    assert plan.sizes() == (5, 12)
    too_much = [Requirement(SRARQ, min_goodput=15), Requirement(SRARQ, min_goodput=9)]
    assert plan_partition(twenty_links(), too_much, Strategy.COUNT_BASED) == []


def test_contiguous_limits():
    with pytest.raises(UsageError):
        plan_partition(twenty_links(), [Requirement(SRARQ, min_goodput=1)] * 3)


@given(st.floats(0.0, 0.5), st.floats(0.5, 30.0), st.integers(51, 400).map(lambda x: 2 * x))
def test_min_links_is_minimal(p, goodput, rtt):
    req = Requirement(ProtocolConfig.rlnc(20), min_goodput=goodput, max_delay=rtt)
    res = min_links(req, p, rtt)
    if not res.feasible:
        return
    proto = ProtocolConfig.rlnc(20)
    ok = predict(proto, p, res.links_needed, rtt)
    assert ok.goodput >= goodput - 1e-9 and ok.delay <= rtt
    if res.links_needed > 1:
        prev = predict(proto, p, res.links_needed - 1, rtt)
        assert prev.goodput < goodput or prev.delay > rtt
