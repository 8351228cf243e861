"""Experiment configuration files (YAML).

Example::

    network:
      links: 20            # homogeneous shorthand, or link_erasure_probs: [...]
      erasure_prob: 0.2
      rtt: 150             # slots; rtt_ms is accepted when slot_duration_us is set
      slot_duration_us: 50
      link_bandwidth_mbps: 28
    slices:                # one entry per application
      - name: urllc
        count: 5           # first 5 unassigned links; or links: [0, 1, 2]
        protocol: rlnc
        generation_size: 50
        requirement:
          max_inorder_delay_ms: 5
      - name: embb
        count: 15
        protocol: srarq
        requirement:
          min_goodput_mbps: 250
    simulation: {packets: 1000, trials: 50, seed: 1, mode: pipelined}
    sweep: {from: 5, to: 15}   # optional: contiguous split of two slices
    planner: {strategy: contiguous}
    analytic_overlay: true

Millisecond and Mbps fields are converted to slots and packets/slot while
parsing; :func:`dump` writes the slot-based form only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import yaml

from .analytic import NetworkModel, Protocol, ProtocolConfig, SliceSpec
from .errors import ConfigurationError
from .planner import Requirement, Strategy
from .sim_core import RlncMode, ScenarioConfig


@dataclass(frozen=True)
class AppSpec:
    name: str
    protocol: ProtocolConfig
    links: Optional[tuple] = None
    requirement: Optional[Requirement] = None


@dataclass(frozen=True)
class Output:
    format: str
    path: str


@dataclass(frozen=True)
class Experiment:
    network: NetworkModel
    apps: tuple
    packets: int = 1000
    trials: int = 50
    seed: int = 0
    mode: RlncMode = RlncMode.PIPELINED
    max_slots: Optional[int] = None
    sweep: Optional[tuple] = None
    strategy: Strategy = Strategy.CONTIGUOUS
    outputs: tuple = ()
    analytic_overlay: bool = True
    link_bandwidth_mbps: Optional[float] = None

    @property
    def choices(self) -> list:
        """Slicing choices to run: sweep values, or ``[None]`` for the fixed slices."""
        if self.sweep is None:
            return [None]
        return list(range(self.sweep[0], self.sweep[1] + 1))

    def slices_for(self, choice: Optional[int] = None) -> tuple:
        if choice is not None:
            n = self.network.n_links
            return (SliceSpec(range(choice), self.apps[0].protocol),
                    SliceSpec(range(choice, n), self.apps[1].protocol))
        if any(a.links is None for a in self.apps):
            raise ConfigurationError("every slice needs links or count when no sweep is given")
        return tuple(SliceSpec(a.links, a.protocol) for a in self.apps)

    def scenario(self, choice: Optional[int] = None) -> ScenarioConfig:
        return ScenarioConfig(self.network, self.slices_for(choice), self.packets,
                              self.trials, self.seed, self.mode, self.max_slots)

    def requirements(self) -> list:
        return [a.requirement for a in self.apps]

    def with_overrides(self, seed=None, trials=None, mode=None, packets=None) -> "Experiment":
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if trials is not None:
            changes["trials"] = int(trials)
        if mode is not None:
            changes["mode"] = RlncMode(mode)
        if packets is not None:
            changes["packets"] = int(packets)
        return replace(self, **changes) if changes else self


# ---------------------------------------------------------------------------
# Parsing


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot (``1e-3``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                |[-+]?\.(?:inf|Inf|INF)
                |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


class _Source:
    """Maps key paths back to line numbers of the YAML text."""

    def __init__(self, text: str):
        try:
            self.root = yaml.compose(text, Loader=_Loader)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            loc = f"line {mark.line + 1}" if mark else None
            raise ConfigurationError(f"malformed YAML: {exc}", loc) from None

    def where(self, path: tuple) -> str:
        node, line = self.root, None
        for key in path:
            if node is None:
                break
            line = node.start_mark.line + 1
            if isinstance(node, yaml.MappingNode):
                node = next((v for k, v in node.value if k.value == key), None)
                if node is None:
                    break
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int):
                node = node.value[key] if key < len(node.value) else None
            else:
                break
        if node is not None:
            line = node.start_mark.line + 1
        dotted = _dotted(path)
        return f"line {line}, {dotted}" if line else dotted


def _dotted(path: tuple) -> str:
    out = ""
    for key in path:
        out += f"[{key}]" if isinstance(key, int) else (f".{key}" if out else str(key))
    return out or "<root>"


class _Reader:
    def __init__(self, src: Optional[_Source]):
        self.src = src

    def fail(self, path: tuple, message: str):
        loc = self.src.where(path) if self.src else _dotted(path)
        raise ConfigurationError(message, loc)

    def section(self, data, path, required=True) -> dict:
        if data is None:
            if required:
                self.fail(path, "missing section")
            return {}
        if not isinstance(data, dict):
            self.fail(path, "expected a mapping")
        return data

    def number(self, data: dict, key: str, path: tuple, kind=float, default=None,
               required=False):
        if key not in data or data[key] is None:
            if required:
                self.fail(path + (key,), "missing required field")
            return default
        value = data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path + (key,), f"expected a number, got {value!r}")
        if kind is int and int(value) != value:
            self.fail(path + (key,), f"expected an integer, got {value!r}")
        return kind(value)

    def unknown(self, data: dict, allowed: set, path: tuple):
        for key in data:
            if key not in allowed:
                self.fail(path + (key,), "unknown field")


_NETWORK_KEYS = {"links", "erasure_prob", "link_erasure_probs", "rtt", "rtt_ms",
                 "slot_duration_us", "link_bandwidth_mbps"}
_SLICE_KEYS = {"name", "links", "count", "protocol", "generation_size", "fec_rate", "fb_rate",
               "fec_multiplier", "fb_multiplier", "requirement"}
_REQ_KEYS = {"min_goodput", "min_goodput_mbps", "max_delay", "max_delay_ms",
             "max_inorder_delay", "max_inorder_delay_ms"}
_SIM_KEYS = {"packets", "trials", "seed", "mode", "max_slots"}
_TOP_KEYS = {"network", "slices", "simulation", "sweep", "planner", "outputs",
             "analytic_overlay"}


def _ms_to_slots(r: _Reader, ms: float, slot_s: Optional[float], path) -> float:
    if slot_s is None:
        r.fail(path, "millisecond fields need network.slot_duration_us")
    return round(ms * 1e-3 / slot_s, 9)


def _parse_network(r: _Reader, data) -> tuple:
    path = ("network",)
    data = r.section(data, path)
    r.unknown(data, _NETWORK_KEYS, path)
    slot_us = r.number(data, "slot_duration_us", path)
    slot_s = slot_us * 1e-6 if slot_us is not None else None
    bandwidth = r.number(data, "link_bandwidth_mbps", path)
    if "link_erasure_probs" in data:
        probs = data["link_erasure_probs"]
        if not isinstance(probs, list) or not probs:
            r.fail(path + ("link_erasure_probs",), "expected a non-empty list of probabilities")
        for i, p in enumerate(probs):
            if isinstance(p, bool) or not isinstance(p, (int, float)):
                r.fail(path + ("link_erasure_probs", i), f"expected a number, got {p!r}")
        if "links" in data or "erasure_prob" in data:
            r.fail(path, "give either link_erasure_probs or links + erasure_prob, not both")
    else:
        n = r.number(data, "links", path, int, required=True)
        p = r.number(data, "erasure_prob", path, required=True)
        probs = [p] * n
    rtt = r.number(data, "rtt", path, int)
    if rtt is None:
        rtt_ms = r.number(data, "rtt_ms", path)
        if rtt_ms is None:
            r.fail(path + ("rtt",), "missing required field")
        slots = _ms_to_slots(r, rtt_ms, slot_s, path + ("rtt_ms",))
        if slots != int(slots):
            r.fail(path + ("rtt_ms",), f"{rtt_ms} ms is not a whole number of slots")
        rtt = int(slots)
    try:
        net = NetworkModel(tuple(probs), rtt, slot_s)
    except ConfigurationError as exc:
        r.fail(path, str(exc))
    return net, bandwidth


def _parse_protocol(r: _Reader, data: dict, path: tuple) -> ProtocolConfig:
    name = data.get("protocol", "srarq")
    try:
        variant = Protocol(str(name).lower().replace("-", ""))
    except ValueError:
        r.fail(path + ("protocol",), f"unknown protocol {name!r} (expected srarq or rlnc)")
    if variant is Protocol.SRARQ:
        for key in ("generation_size", "fec_rate", "fb_rate"):
            if key in data:
                r.fail(path + (key,), "only valid for rlnc slices")
        return ProtocolConfig.srarq()
    kwargs = {
        "generation_size": r.number(data, "generation_size", path, int, required=True),
        "fec_rate": r.number(data, "fec_rate", path),
        "fb_rate": r.number(data, "fb_rate", path),
    }
    for key in ("fec_multiplier", "fb_multiplier"):
        value = r.number(data, key, path)
        if value is not None:
            kwargs[key] = value
    try:
        return ProtocolConfig.rlnc(**kwargs)
    except ConfigurationError as exc:
        r.fail(path, str(exc))


def _parse_requirement(r, data, path, protocol, name, slot_s, bandwidth) -> Requirement:
    data = r.section(data, path)
    r.unknown(data, _REQ_KEYS, path)
    values = {}
    for key in ("max_delay", "max_inorder_delay"):
        slots = r.number(data, key, path)
        ms = r.number(data, key + "_ms", path)
        if slots is not None and ms is not None:
            r.fail(path + (key,), f"give either {key} or {key}_ms")
        if ms is not None:
            slots = _ms_to_slots(r, ms, slot_s, path + (key + "_ms",))
        values[key] = slots
    goodput = r.number(data, "min_goodput", path)
    mbps = r.number(data, "min_goodput_mbps", path)
    if goodput is not None and mbps is not None:
        r.fail(path + ("min_goodput",), "give either min_goodput or min_goodput_mbps")
    if mbps is not None:
        if bandwidth is None:
            r.fail(path + ("min_goodput_mbps",), "Mbps fields need network.link_bandwidth_mbps")
        goodput = round(mbps / bandwidth, 9)
    try:
        return Requirement(protocol, goodput, values["max_delay"],
                           values["max_inorder_delay"], name)
    except ConfigurationError as exc:
        r.fail(path, str(exc))


def _parse_slices(r: _Reader, data, net: NetworkModel, bandwidth) -> tuple:
    path = ("slices",)
    if not isinstance(data, list):
        r.fail(path, "expected a list of slices")
    if not data:
        r.fail(path, "at least one slice is required")
    apps, cursor = [], 0
    for j, item in enumerate(data):
        p = path + (j,)
        item = r.section(item, p)
        r.unknown(item, _SLICE_KEYS, p)
        protocol = _parse_protocol(r, item, p)
        name = str(item.get("name", f"app{j + 1}"))
        links = None
        if "links" in item and "count" in item:
            r.fail(p, "give either links or count")
        if "links" in item:
            raw = item["links"]
            if not isinstance(raw, list) or not all(isinstance(x, int) for x in raw):
                r.fail(p + ("links",), "expected a list of link indices")
            links = tuple(raw)
        elif "count" in item:
            count = r.number(item, "count", p, int)
            links = tuple(range(cursor, cursor + count))
            cursor += count
        if links is not None:
            try:
                SliceSpec(links, protocol).validate(net)
            except ConfigurationError as exc:
                r.fail(p + ("links" if "links" in item else "count",), str(exc))
        req = None
        if item.get("requirement") is not None:
            req = _parse_requirement(r, item["requirement"], p + ("requirement",), protocol,
                                     name, net.slot_duration, bandwidth)
        apps.append(AppSpec(name, protocol, links, req))
    return tuple(apps)


def parse(data, source: Optional[_Source] = None) -> Experiment:
    """Build an :class:`Experiment` from already-loaded YAML data."""
    r = _Reader(source)
    data = r.section(data, ())
    r.unknown(data, _TOP_KEYS, ())
    net, bandwidth = _parse_network(r, data.get("network"))
    apps = _parse_slices(r, data.get("slices"), net, bandwidth)

    sim = r.section(data.get("simulation"), ("simulation",), required=False)
    r.unknown(sim, _SIM_KEYS, ("simulation",))
    sp = ("simulation",)
    mode = sim.get("mode", RlncMode.PIPELINED.value)
    try:
        mode = RlncMode(mode)
    except ValueError:
        r.fail(sp + ("mode",), f"unknown mode {mode!r} (expected stopwait or pipelined)")

    sweep = None
    if data.get("sweep") is not None:
        sw = r.section(data["sweep"], ("sweep",))
        r.unknown(sw, {"from", "to"}, ("sweep",))
        lo = r.number(sw, "from", ("sweep",), int, required=True)
        hi = r.number(sw, "to", ("sweep",), int, required=True)
        if len(apps) != 2:
            r.fail(("sweep",), "a sweep needs exactly two slices")
        if not 1 <= lo <= hi <= net.n_links - 1:
            r.fail(("sweep",), f"sweep bounds must satisfy 1 <= from <= to <= {net.n_links - 1}")
        sweep = (lo, hi)

    planner = r.section(data.get("planner"), ("planner",), required=False)
    r.unknown(planner, {"strategy"}, ("planner",))
    try:
        strategy = Strategy(planner.get("strategy", Strategy.CONTIGUOUS.value))
    except ValueError:
        r.fail(("planner", "strategy"), "expected contiguous or count")

    outputs = []
    for i, out in enumerate(data.get("outputs") or []):
        out = r.section(out, ("outputs", i))
        fmt = out.get("format", "csv")
        if fmt not in ("csv", "json") or "path" not in out:
            r.fail(("outputs", i), "outputs need format csv|json and a path")
        outputs.append(Output(fmt, str(out["path"])))

    overlay = data.get("analytic_overlay", True)
    if not isinstance(overlay, bool):
        r.fail(("analytic_overlay",), "expected true or false")

    try:
        exp = Experiment(
            network=net,
            apps=apps,
            packets=r.number(sim, "packets", sp, int, default=1000),
            trials=r.number(sim, "trials", sp, int, default=50),
            seed=r.number(sim, "seed", sp, int, default=0),
            mode=mode,
            max_slots=r.number(sim, "max_slots", sp, int),
            sweep=sweep,
            strategy=strategy,
            outputs=tuple(outputs),
            analytic_overlay=overlay,
            link_bandwidth_mbps=bandwidth,
        )
        if sweep is None and all(a.links is not None for a in apps):
            exp.scenario()
        elif sweep is not None:
            exp.scenario(sweep[0])
    except ConfigurationError as exc:
        r.fail(sp, str(exc))
    return exp


def loads(text: str) -> Experiment:
    src = _Source(text)
    return parse(yaml.load(text, Loader=_Loader), src)


def load(path) -> Experiment:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from None
    return loads(text)


# ---------------------------------------------------------------------------
# Serialization


def _protocol_dict(p: ProtocolConfig) -> dict:
    if not p.is_rlnc:
        return {"protocol": "srarq"}
    out = {"protocol": "rlnc", "generation_size": p.generation_size}
    if p.fec_rate is not None:
        out["fec_rate"] = p.fec_rate
    if p.fb_rate is not None:
        out["fb_rate"] = p.fb_rate
    out["fec_multiplier"] = p.fec_multiplier
    out["fb_multiplier"] = p.fb_multiplier
    return out


def to_dict(exp: Experiment) -> dict:
    net = exp.network
    network = {"link_erasure_probs": list(net.link_erasure_probs), "rtt": net.rtt}
    if net.slot_duration is not None:
        network["slot_duration_us"] = round(net.slot_duration * 1e6, 9)
    if exp.link_bandwidth_mbps is not None:
        network["link_bandwidth_mbps"] = exp.link_bandwidth_mbps
    slices = []
    for app in exp.apps:
        item = {"name": app.name}
        if app.links is not None:
            item["links"] = list(app.links)
        item.update(_protocol_dict(app.protocol))
        req = app.requirement
        if req is not None:
            item["requirement"] = {k: v for k, v in (
                ("min_goodput", req.min_goodput),
                ("max_delay", req.max_delay),
                ("max_inorder_delay", req.max_inorder_delay)) if v is not None}
        slices.append(item)
    sim = {"packets": exp.packets, "trials": exp.trials, "seed": exp.seed,
           "mode": exp.mode.value}
    if exp.max_slots is not None:
        sim["max_slots"] = exp.max_slots
    out = {"network": network, "slices": slices, "simulation": sim}
    if exp.sweep is not None:
        out["sweep"] = {"from": exp.sweep[0], "to": exp.sweep[1]}
    out["planner"] = {"strategy": exp.strategy.value}
    if exp.outputs:
        out["outputs"] = [{"format": o.format, "path": o.path} for o in exp.outputs]
    out["analytic_overlay"] = exp.analytic_overlay
    return out


def dumps(exp: Experiment) -> str:
    return yaml.safe_dump(to_dict(exp), sort_keys=False)
