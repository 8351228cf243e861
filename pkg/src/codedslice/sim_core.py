"""Seeded, time-slotted simulator of SR-ARQ and RLNC slices over erasure links.

Timing model: a packet sent in slot ``t`` reaches the receiver in slot
``t + RTT/2`` unless erased, and its feedback reaches the sender in slot
``t + RTT``. An SR-ARQ sender retransmits a NACKed packet in the slot its
NACK arrives; an RLNC sender starts a repair round in the slot after the
round's last feedback.

Randomness is split per (trial, slice): every transmission of a packet (or
of a generation's coded packets) consumes its own pre-drawn uniform, so the
loss pattern a unit sees does not depend on the schedule. A separate stream
drives the random link choice.
"""

from __future__ import annotations

import csv
import enum
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analytic import NetworkModel, ProtocolConfig, SliceSpec, check_disjoint, mean_erasure
from .errors import ConfigurationError, SimulationAborted, UsageError


class RlncMode(str, enum.Enum):
    STOP_AND_WAIT = "stopwait"
    PIPELINED = "pipelined"


@dataclass(frozen=True)
class ScenarioConfig:
    network: NetworkModel
    slices: tuple
    packets_per_app: object = 1000  # int, or one int per slice
    trials: int = 1
    base_seed: int = 0
    rlnc_mode: RlncMode = RlncMode.PIPELINED
    max_slots: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "slices", tuple(self.slices))
        object.__setattr__(self, "rlnc_mode", RlncMode(self.rlnc_mode))
        if not self.slices:
            raise ConfigurationError("scenario needs at least one slice")
        check_disjoint(self.slices, self.network)
        nus = self.packets_per_app
        if isinstance(nus, (list, tuple)):
            if len(nus) != len(self.slices):
                raise ConfigurationError("packets_per_app needs one entry per slice")
            nus = tuple(int(x) for x in nus)
            object.__setattr__(self, "packets_per_app", nus)
        else:
            nus = (int(nus),)
        if any(x < 1 for x in nus):
            raise ConfigurationError("packets_per_app must be >= 1")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if not 0 <= self.base_seed < 2 ** 64:
            raise ConfigurationError("base_seed must be a 64-bit unsigned integer")

    def packets_for(self, slice_index: int) -> int:
        nus = self.packets_per_app
        return nus[slice_index] if isinstance(nus, tuple) else int(nus)


@dataclass(frozen=True)
class TrialMetrics:
    """Per-trial statistics of one slice.

    ``goodput`` is information packets per slot of link occupancy,
    ``packets_delivered / busy_slots`` with ``busy_slots = transmissions /
    slice_size``. ``completion_slots`` is the number of slots elapsed until the
    last packet was released in order.
    """

    mean_delay: float
    mean_inorder_delay: float
    goodput: float
    completion_slots: int
    packets_delivered: int
    transmissions: int
    busy_slots: float
    second_round_fraction: float = 0.0  # RLNC: generations that needed repairs

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class PacketTrace:
    seq: np.ndarray
    first_tx_slot: np.ndarray
    delivered_slot: np.ndarray
    inorder_slot: np.ndarray

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seq", "first_tx_slot", "delivered_slot", "inorder_slot"])
            for row in zip(self.seq.tolist(), self.first_tx_slot.tolist(),
                           self.delivered_slot.tolist(), self.inorder_slot.tolist()):
                w.writerow(row)
        return path


@dataclass
class SliceRun:
    metrics: TrialMetrics
    trace: PacketTrace
    generation_missing: Optional[list] = None  # RLNC: missing DoF after round 1, per generation
    generation_delay: Optional[list] = None  # RLNC: decode slot minus generation start


# ---------------------------------------------------------------------------
# Channel


class TransmissionDraws:
    """Uniform draws indexed by (unit, transmission number).

    A unit is an SR-ARQ packet or an RLNC generation. Transmission ``a`` of
    unit ``u`` over a link with erasure probability ``p`` is lost iff
    ``draw(u, a) < p``. Draws depend only on the seed, slice and unit, not on
    the schedule, so runs that differ only in slice size share their
    randomness.
    """

    def __init__(self, seed: int, slice_index: int, n_units: int, width: int):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, slice_index)))
        self.width = width
        self._block = rng.random((n_units, width))
        self._seed = seed
        self._slice = slice_index
        self._extra: dict = {}

    def draw(self, unit: int, index: int) -> float:
        if index < self.width:
            return self._block[unit, index]
        extra = self._extra.get(unit)
        if extra is None:
            ss = np.random.SeedSequence(self._seed, spawn_key=(2, self._slice, unit))
            extra = self._extra[unit] = [np.random.default_rng(ss), []]
        need = index - self.width + 1
        while len(extra[1]) < need:
            extra[1].extend(extra[0].random(self.width).tolist())
        return extra[1][index - self.width]


def channel_apply(transmissions, slot: int, net: NetworkModel, draws: TransmissionDraws):
    """Push one slot of ``(link, unit, index)`` transmissions through the links.

    Returns ``(arrivals, feedback)``: arrivals as ``(slot, unit)`` for the
    survivors, feedback as ``(slot, unit, erased)`` for every transmission.
    """
    used = set()
    probs = net.link_erasure_probs
    half, rtt = net.one_way, net.rtt
    arrivals, feedback = [], []
    for link, unit, index in transmissions:
        if link in used:
            raise UsageError(f"link {link} used twice in slot {slot}")
        used.add(link)
        lost = draws.draw(unit, index) < probs[link]
        if not lost:
            arrivals.append((slot + half, unit))
        feedback.append((slot + rtt, unit, lost))
    return arrivals, feedback


# ---------------------------------------------------------------------------
# SR-ARQ


class SrArqSender:
    """Selective repeat with an unbounded buffer.

    NACKed packets go first, oldest NACK first; new packets fill the rest of
    the slot. Packets are placed on a fresh random permutation of the links.
    """

    def __init__(self, links: Sequence[int], nu: int, rng: np.random.Generator):
        self.links = list(links)
        self.nu = nu
        self.rng = rng
        self.next_new = 0
        self.retx: deque = deque()
        self.first_tx = [-1] * nu
        self.attempts = [0] * nu
        self.transmissions = 0

    def has_work(self) -> bool:
        return bool(self.retx) or self.next_new < self.nu

    def on_feedback(self, seq: int, erased: bool) -> None:
        if erased:
            self.retx.append(seq)

    def step(self, slot: int) -> list:
        cap = len(self.links)
        sends = []
        while self.retx and len(sends) < cap:
            sends.append(self.retx.popleft())
        while self.next_new < self.nu and len(sends) < cap:
            self.first_tx[self.next_new] = slot
            sends.append(self.next_new)
            self.next_new += 1
        if not sends:
            return []
        order = self.rng.permutation(cap) if cap > 1 else (0,)
        self.transmissions += len(sends)
        out = []
        for i, seq in enumerate(sends):
            out.append((self.links[order[i]], seq, self.attempts[seq]))
            self.attempts[seq] += 1
        return out


class InOrderReceiver:
    """Reorder buffer: records arrival slots and releases the in-sequence prefix."""

    def __init__(self, nu: int):
        self.nu = nu
        self.delivered = [-1] * nu
        self.inorder = [-1] * nu
        self.next_expected = 0

    @property
    def done(self) -> bool:
        return self.next_expected >= self.nu

    def receive(self, seq: int, slot: int) -> list:
        """Returns the sequence numbers released in order at ``slot``."""
        if self.delivered[seq] >= 0:
            return []
        self.delivered[seq] = slot
        released = []
        while self.next_expected < self.nu and self.delivered[self.next_expected] >= 0:
            self.inorder[self.next_expected] = slot
            released.append(self.next_expected)
            self.next_expected += 1
        return released


# ---------------------------------------------------------------------------
# RLNC


class RlncSender:
    """Generation-based RLNC sender at degree-of-freedom granularity.

    Round 1 of a generation sends ``ceil(k * fec_rate)`` coded packets. The
    feedback of a round's last packet reports the missing DoF ``m``; a repair
    round of ``ceil(fb_rate * m)`` packets starts the slot after, until m = 0.
    Repairs are served before round-1 traffic. In pipelined mode the next
    generation's round 1 uses any link-slot left over; in stop-and-wait mode
    it waits until the previous generation is acknowledged.
    """

    def __init__(self, links: Sequence[int], gen_sizes: Sequence[int],
                 protocol: ProtocolConfig, mode: RlncMode, rng: np.random.Generator):
        self.links = list(links)
        self.rng = rng
        self.gen_sizes = list(gen_sizes)
        self.protocol = protocol
        self.mode = RlncMode(mode)
        self.n_gens = len(gen_sizes)
        self.first_tx = [-1] * self.n_gens
        self.sent = [0] * self.n_gens
        self.missing_after_round1 = [None] * self.n_gens
        self.transmissions = 0
        self.repairs: deque = deque()  # [gen, remaining, ready_slot]
        self.current = None  # [gen, remaining] of the active round 1
        self.next_gen = 0
        self.next_gen_ready = 0
        self.completed_rounds: list = []  # generations whose round ended in the last step

    def next_ready_slot(self) -> float:
        """Earliest slot at which the sender could transmit something."""
        cands = []
        if self.repairs:
            cands.append(min(r[2] for r in self.repairs))
        if self.current is not None:
            cands.append(0)
        elif self.next_gen < self.n_gens and self.mode is RlncMode.PIPELINED:
            cands.append(0)
        elif self.next_gen < self.n_gens and self.next_gen_ready is not None:
            cands.append(self.next_gen_ready)
        return min(cands) if cands else math.inf

    def on_round_feedback(self, gen: int, missing: int, slot: int) -> None:
        if self.missing_after_round1[gen] is None:
            self.missing_after_round1[gen] = missing
        if missing > 0:
            self.repairs.append([gen, self.protocol.repair_round_size(missing), slot + 1])
        elif self.mode is RlncMode.STOP_AND_WAIT:
            self.next_gen_ready = slot + 1

    def _start_next_generation(self, slot: int) -> bool:
        if self.next_gen >= self.n_gens:
            return False
        if self.mode is RlncMode.STOP_AND_WAIT:
            if self.next_gen_ready is None or self.next_gen_ready > slot:
                return False
            self.next_gen_ready = None
        g = self.next_gen
        self.next_gen += 1
        self.current = [g, self.protocol.first_round_size(self.gen_sizes[g])]
        return True

    def step(self, slot: int) -> list:
        cap = len(self.links)
        sends = []
        rtt_events = []
        for rep in self.repairs:
            if len(sends) >= cap:
                break
            if rep[2] > slot:
                continue
            n = min(rep[1], cap - len(sends))
            sends.extend([rep[0]] * n)
            rep[1] -= n
            if rep[1] == 0:
                rtt_events.append(rep[0])
        if rtt_events:
            self.repairs = deque(r for r in self.repairs if r[1] > 0)
        while len(sends) < cap:
            if self.current is None and not self._start_next_generation(slot):
                break
            g, remaining = self.current
            if self.first_tx[g] < 0:
                self.first_tx[g] = slot
            n = min(remaining, cap - len(sends))
            sends.extend([g] * n)
            remaining -= n
            if remaining == 0:
                rtt_events.append(g)
                self.current = None
            else:
                self.current[1] = remaining
        self.transmissions += len(sends)
        self.completed_rounds = rtt_events
        if not sends:
            return []
        order = self.rng.permutation(cap) if cap > 1 else (0,)
        out = []
        for i, g in enumerate(sends):
            out.append((self.links[order[i]], g, self.sent[g]))
            self.sent[g] += 1
        return out


class GenerationReceiver:
    """Counts DoF per generation; a generation decodes at k and releases in order."""

    def __init__(self, gen_sizes: Sequence[int]):
        self.gen_sizes = list(gen_sizes)
        self.n_gens = len(gen_sizes)
        self.dof = [0] * self.n_gens
        self.decoded = [-1] * self.n_gens
        self.inorder = [-1] * self.n_gens
        self.next_expected = 0

    @property
    def done(self) -> bool:
        return self.next_expected >= self.n_gens

    def missing(self, gen: int) -> int:
        return max(0, self.gen_sizes[gen] - self.dof[gen])

    def receive(self, gen: int, slot: int) -> list:
        if self.decoded[gen] >= 0:
            return []
        self.dof[gen] += 1
        if self.dof[gen] < self.gen_sizes[gen]:
            return []
        self.decoded[gen] = slot
        released = []
        while self.next_expected < self.n_gens and self.decoded[self.next_expected] >= 0:
            self.inorder[self.next_expected] = slot
            released.append(self.next_expected)
            self.next_expected += 1
        return released


# ---------------------------------------------------------------------------
# Trial drivers


SRARQ_DRAW_WIDTH = 8


def _default_cap(nu: int, size: int, pbar: float, rtt: int, redundancy: float) -> int:
    return int(max(10 ** 6, 100 * (nu * redundancy / (size * (1.0 - pbar)) + 10 * rtt)))


def _scheduler_rng(seed: int, slice_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, slice_index)))


def _simulate_srarq(net, spec, slice_index, nu, seed, max_slots) -> SliceRun:
    links = spec.link_indices
    draws = TransmissionDraws(seed, slice_index, nu, SRARQ_DRAW_WIDTH)
    sender = SrArqSender(links, nu, _scheduler_rng(seed, slice_index))
    receiver = InOrderReceiver(nu)
    arrivals: deque = deque()
    nacks: deque = deque()
    t = 0
    while not receiver.done:
        if t > max_slots:
            raise SimulationAborted(
                f"SR-ARQ slice {slice_index} exceeded {max_slots} slots "
                f"({receiver.next_expected}/{nu} packets in order)")
        while arrivals and arrivals[0][0] == t:
            receiver.receive(arrivals.popleft()[1], t)
        while nacks and nacks[0][0] == t:
            sender.on_feedback(nacks.popleft()[1], True)
        if sender.has_work():
            arrived, feedback = channel_apply(sender.step(t), t, net, draws)
            arrivals.extend(arrived)
            nacks.extend(f for f in feedback if f[2])
            t += 1
        else:
            nxt = min(arrivals[0][0] if arrivals else math.inf,
                      nacks[0][0] if nacks else math.inf)
            if nxt == math.inf:
                break
            t = nxt
    first = np.asarray(sender.first_tx)
    delivered = np.asarray(receiver.delivered)
    inorder = np.asarray(receiver.inorder)
    trace = PacketTrace(np.arange(nu), first, delivered, inorder)
    return SliceRun(_metrics(trace, sender.transmissions, spec.size), trace)


def _simulate_rlnc(net, spec, slice_index, nu, seed, max_slots, mode) -> SliceRun:
    links = spec.link_indices
    protocol = spec.resolved_protocol(net)
    k = protocol.generation_size
    gen_sizes = [k] * (nu // k) + ([nu % k] if nu % k else [])
    draws = TransmissionDraws(seed, slice_index, len(gen_sizes),
                              2 * protocol.first_round_size() + 16)
    sender = RlncSender(links, gen_sizes, protocol, mode, _scheduler_rng(seed, slice_index))
    receiver = GenerationReceiver(gen_sizes)
    rtt = net.rtt
    arrivals: deque = deque()
    round_ends: deque = deque()
    t = 0
    while not receiver.done:
        if t > max_slots:
            raise SimulationAborted(
                f"RLNC slice {slice_index} exceeded {max_slots} slots "
                f"({receiver.next_expected}/{len(gen_sizes)} generations in order)")
        while arrivals and arrivals[0][0] == t:
            receiver.receive(arrivals.popleft()[1], t)
        while round_ends and round_ends[0][0] == t:
            g = round_ends.popleft()[1]
            sender.on_round_feedback(g, receiver.missing(g), t)
        if sender.next_ready_slot() <= t:
            arrived, _ = channel_apply(sender.step(t), t, net, draws)
            arrivals.extend(arrived)
            for g in sender.completed_rounds:
                round_ends.append((t + rtt, g))
            t += 1
        else:
            nxt = min(arrivals[0][0] if arrivals else math.inf,
                      round_ends[0][0] if round_ends else math.inf,
                      sender.next_ready_slot())
            if nxt == math.inf:
                break
            t = int(nxt)
    sizes = np.asarray(gen_sizes)
    first = np.repeat(np.asarray(sender.first_tx), sizes)
    delivered = np.repeat(np.asarray(receiver.decoded), sizes)
    inorder = np.repeat(np.asarray(receiver.inorder), sizes)
    trace = PacketTrace(np.arange(nu), first, delivered, inorder)
    # generations decoded before their round-1 feedback was due needed no repairs
    missing = [0 if m is None else m for m in sender.missing_after_round1]
    metrics = _metrics(trace, sender.transmissions, spec.size,
                       second_round=sum(1 for m in missing if m) / len(missing))
    gen_delay = (np.asarray(receiver.decoded) - np.asarray(sender.first_tx)).tolist()
    return SliceRun(metrics, trace, list(missing), gen_delay)


def _metrics(trace: PacketTrace, transmissions: int, size: int, second_round=0.0) -> TrialMetrics:
    delivered = int(np.count_nonzero(trace.inorder_slot >= 0))
    busy = transmissions / size
    if delivered < len(trace.seq):
        raise SimulationAborted(f"only {delivered}/{len(trace.seq)} packets released in order")
    return TrialMetrics(
        mean_delay=float(np.mean(trace.delivered_slot - trace.first_tx_slot)),
        mean_inorder_delay=float(np.mean(trace.inorder_slot - trace.first_tx_slot)),
        goodput=delivered / busy,
        completion_slots=int(trace.inorder_slot.max()) + 1,
        packets_delivered=delivered,
        transmissions=transmissions,
        busy_slots=busy,
        second_round_fraction=second_round,
    )


def simulate_slice(cfg: ScenarioConfig, slice_index: int, seed: int) -> SliceRun:
    """Simulate one slice until all its packets are released in order."""
    if not 0 <= slice_index < len(cfg.slices):
        raise UsageError(f"slice_index {slice_index} out of range")
    net = cfg.network
    spec = cfg.slices[slice_index]
    nu = cfg.packets_for(slice_index)
    pbar = mean_erasure(spec, net)
    if spec.protocol.is_rlnc:
        redundancy = spec.resolved_protocol(net).fec_rate * 2
    else:
        redundancy = 1.0
    cap = cfg.max_slots or _default_cap(nu, spec.size, pbar, net.rtt, redundancy)
    if spec.protocol.is_rlnc:
        return _simulate_rlnc(net, spec, slice_index, nu, seed, cap, cfg.rlnc_mode)
    return _simulate_srarq(net, spec, slice_index, nu, seed, cap)


def run_trial(cfg: ScenarioConfig, slice_index: int, seed: int) -> TrialMetrics:
    return simulate_slice(cfg, slice_index, seed).metrics


def trial_seed(base_seed: int, trial: int) -> int:
    """Seed of trial ``trial``: first 64-bit word of SeedSequence(base_seed, spawn_key=(trial,))."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(trial,))
    return int(ss.generate_state(1, np.uint64)[0])


def _trial_job(args):
    cfg, slice_index, trial, seed = args
    try:
        return run_trial(cfg, slice_index, seed)
    except SimulationAborted as exc:
        raise SimulationAborted(f"trial {trial} (seed {seed}): {exc}") from None


def run_trials(cfg: ScenarioConfig, slice_index: int, workers: int = 1) -> list:
    """All ``cfg.trials`` trials of one slice, ordered by trial index."""
    jobs = [(cfg, slice_index, t, trial_seed(cfg.base_seed, t)) for t in range(cfg.trials)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_trial_job, jobs))
    return [_trial_job(j) for j in jobs]


# ---------------------------------------------------------------------------
# Aggregation

SUMMARY_FIELDS = ("mean_delay", "mean_inorder_delay", "goodput", "completion_slots")


@dataclass(frozen=True)
class Stat:
    mean: float
    std: float
    half_width: float


@dataclass(frozen=True)
class MetricsSummary:
    """Mean, sample standard deviation and 95% normal half-width per metric."""

    n_trials: int
    stats: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> Stat:
        return self.stats[name]

    def mean(self, name: str) -> float:
        return self.stats[name].mean


def aggregate(trials: Sequence[TrialMetrics]) -> MetricsSummary:
    if not trials:
        raise UsageError("aggregate needs at least one trial")
    n = len(trials)
    stats = {}
    for name in SUMMARY_FIELDS:
        values = np.array([getattr(t, name) for t in trials], dtype=float)
        mean = math.fsum(values) / n
        std = float(np.std(values, ddof=1)) if n > 1 else 0.0
        stats[name] = Stat(mean, std, 1.96 * std / math.sqrt(n) if n > 1 else 0.0)
    return MetricsSummary(n, stats)
