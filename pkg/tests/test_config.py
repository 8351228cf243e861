from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codedslice import config
from codedslice.errors import ConfigurationError
from codedslice.sim_core import RlncMode

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.yaml")))
def test_shipped_configs_round_trip(name):
    exp = config.load(CONFIGS / name)
    text = config.dumps(exp)
    again = config.loads(text)
    assert again == exp
    assert config.dumps(again) == text


def test_units_converted_at_parse_time():
    exp = config.load(CONFIGS / "table1.yaml")
    urllc, embb = exp.requirements()
    assert urllc.max_inorder_delay == 100
    assert embb.min_goodput == pytest.approx(250 / 28)
    assert exp.sweep == (5, 15) and exp.mode is RlncMode.PIPELINED


def test_rtt_in_ms():
    exp = config.loads("""
network: {links: 2, erasure_prob: 0.1, rtt_ms: 7.5, slot_duration_us: 50}
slices: [{protocol: srarq, count: 2}]
""")
    assert exp.network.rtt == 150


def test_error_reports_line_and_field():
    text = """network:
  links: 4
  erasure_prob: 0.2
  rtt: 150
slices:
  - protocol: rlnc
    count: 2
    generation_size: 50
    fec_rate: 0.8
"""
    with pytest.raises(ConfigurationError, match=r"line 6, slices\[0\].*fec_rate"):
        config.loads(text)


@pytest.mark.parametrize("text,field", [
    ("network: {links: 2, erasure_prob: 1.5, rtt: 10}\nslices: [{protocol: srarq}]", "network"),
    ("network: {links: 2, erasure_prob: 0.1, rtt: 10}\nslices: []", "slices"),
    ("network: {links: 2, erasure_prob: 0.1, rtt: 10}\nslices: [{protocol: tcp}]", "protocol"),
    ("network: {links: 2, erasure_prob: 0.1, rtt: 10}\nslices: [{protocol: srarq}]\nbogus: 1",
     "bogus"),
    ("network: {links: 3, erasure_prob: 0.1, rtt: 10}\nslices: [{protocol: srarq}, "
     "{protocol: srarq}]\nsweep: {from: 0, to: 2}", "sweep"),
])
def test_malformed_configs(text, field):
    with pytest.raises(ConfigurationError, match=field):
        config.loads(text)


def test_overrides():
    exp = config.load(CONFIGS / "table1.yaml").with_overrides(seed=9, trials=3, mode="stopwait")
    assert (exp.seed, exp.trials, exp.mode) == (9, 3, RlncMode.STOP_AND_WAIT)


@settings(deadline=None)
@given(st.lists(st.floats(0.0, 0.95), min_size=2, max_size=8), st.integers(1, 500),
       st.integers(1, 5), st.integers(0, 2 ** 63), st.booleans())
def test_round_trip_property(probs, half, k, seed, coded):
    proto = "{protocol: rlnc, generation_size: %d, count: 1}" % k if coded \
        else "{protocol: srarq, count: 1}"
    text = (f"network: {{link_erasure_probs: {probs}, rtt: {2 * half}}}\n"
            f"slices: [{proto}]\nsimulation: {{seed: {seed}}}\n")
    exp = config.loads(text)
    dumped = config.dumps(exp)
    assert config.loads(dumped) == exp
    assert config.dumps(config.loads(dumped)) == dumped
