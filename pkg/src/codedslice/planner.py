"""Communication-aware slicing: minimum slice sizes and feasible partitions."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .analytic import (
    NetworkModel,
    Prediction,
    ProtocolConfig,
    SliceSpec,
    ceil_count,
    mean_erasure,
    predict,
    predict_slice,
    srarq_expected_delay,
)
from .errors import ConfigurationError, UsageError


class Binding(str, enum.Enum):
    GOODPUT = "goodput"
    DELAY = "delay"
    BOTH = "both"
    NONE = "none"


class Strategy(str, enum.Enum):
    CONTIGUOUS = "contiguous"
    COUNT_BASED = "count"


@dataclass(frozen=True)
class Requirement:
    """Per-application constraints. Thresholds are in slots and packets/slot."""

    protocol: ProtocolConfig = field(default_factory=ProtocolConfig.srarq)
    min_goodput: Optional[float] = None
    max_delay: Optional[float] = None
    max_inorder_delay: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        bounds = (self.min_goodput, self.max_delay, self.max_inorder_delay)
        if all(b is None for b in bounds):
            raise ConfigurationError("requirement needs at least one constraint")
        for b in bounds:
            if b is not None and not b > 0:
                raise ConfigurationError(f"requirement thresholds must be > 0, got {b}")

    @property
    def delay_bound(self) -> Optional[float]:
        """Tightest analytic bound on E[D].

        E[I] >= E[D], so an in-order bound is also a (necessary) delivery-delay
        bound; it still needs simulation to confirm.
        """
        bounds = [b for b in (self.max_delay, self.max_inorder_delay) if b is not None]
        return min(bounds) if bounds else None

    @property
    def needs_simulation(self) -> bool:
        return self.max_inorder_delay is not None


@dataclass(frozen=True)
class AllocationResult:
    feasible: bool
    links_needed: Optional[int]
    binding_constraint: Binding
    predicted: Optional[Prediction] = None
    needs_simulation: bool = False
    note: str = ""


def satisfies(req: Requirement, pred: Prediction) -> bool:
    if req.min_goodput is not None and pred.goodput < req.min_goodput:
        return False
    bound = req.delay_bound
    return bound is None or pred.delay <= bound


def _binding(n_goodput: int, n_delay: int) -> Binding:
    if n_goodput == n_delay:
        return Binding.BOTH
    return Binding.GOODPUT if n_goodput > n_delay else Binding.DELAY


def min_links(req: Requirement, mean_erasure: float, rtt: int) -> AllocationResult:
    """Smallest homogeneous slice meeting ``req``, from the closed-form models."""
    proto = req.protocol.resolve(mean_erasure)
    bound = req.delay_bound
    sim = req.needs_simulation
    if not proto.is_rlnc:
        if bound is not None and srarq_expected_delay(mean_erasure, rtt) > bound:
            return AllocationResult(False, None, Binding.DELAY, needs_simulation=sim,
                                    note="SR-ARQ delay does not depend on slice size")
        n_g = ceil_count(req.min_goodput / (1.0 - mean_erasure)) if req.min_goodput else 1
        binding = Binding.GOODPUT if req.min_goodput else Binding.NONE
        n = max(n_g, 1)
        return AllocationResult(True, n, binding, predict(proto, mean_erasure, n, rtt), sim)

    if bound is not None and rtt / 2 > bound:
        return AllocationResult(False, None, Binding.DELAY, needs_simulation=sim,
                                note="half RTT alone exceeds the delay bound")
    pred1 = predict(proto, mean_erasure, 1, rtt)
    n_g = 1
    if req.min_goodput is not None:
        n_g = max(1, ceil_count(req.min_goodput / pred1.goodput))
    n_d = 1
    if bound is not None:
        # delay stops improving once a round fits in one slot
        limit = proto.first_round_size()
        n_d = next((s for s in range(1, limit + 1)
                    if predict(proto, mean_erasure, s, rtt).delay <= bound), None)
        if n_d is None:
            return AllocationResult(False, None, Binding.DELAY, needs_simulation=sim,
                                    note="delay bound unreachable at any slice size")
    n = max(n_g, n_d)
    if req.min_goodput is None and bound is None:
        binding = Binding.NONE
    elif req.min_goodput is None:
        binding = Binding.DELAY
    elif bound is None:
        binding = Binding.GOODPUT
    else:
        binding = _binding(n_g, n_d)
    return AllocationResult(True, n, binding, predict(proto, mean_erasure, n, rtt), sim)


CAPACITY_NOTE = ("reference value 111 (10^4 links, 9 links per application) disagrees "
                 "with floor(10^4 / 9) = 1111; 1111 is reported")


def capacity(net: NetworkModel, req: Requirement) -> int:
    """How many identical applications a homogeneous network can host."""
    if not net.is_homogeneous():
        raise UsageError("capacity needs a homogeneous network; use plan_partition instead")
    res = min_links(req, net.link_erasure_probs[0], net.rtt)
    if not res.feasible:
        return 0
    return net.n_links // res.links_needed


@dataclass(frozen=True)
class SlicePlan:
    slices: tuple  # SliceSpec per application, in requirement order
    choice: Optional[int] = None  # size of the first slice for contiguous splits

    @property
    def links_used(self) -> int:
        return sum(s.size for s in self.slices)

    def sizes(self) -> tuple:
        return tuple(s.size for s in self.slices)


def _evaluate(net: NetworkModel, spec: SliceSpec, req: Requirement) -> AllocationResult:
    pred = predict_slice(spec, net)
    ok = satisfies(req, pred)
    return AllocationResult(ok, spec.size if ok else None,
                            Binding.NONE, pred, req.needs_simulation)


def evaluate_split(net: NetworkModel, reqs: Sequence[Requirement], first: int) -> tuple:
    """Contiguous slicing choice: the first ``first`` links go to app 1, the rest to app 2."""
    n = net.n_links
    specs = (SliceSpec(range(first), reqs[0].protocol),
             SliceSpec(range(first, n), reqs[1].protocol))
    return SlicePlan(specs, first), [_evaluate(net, s, r) for s, r in zip(specs, reqs)]


def _tie_key(net: NetworkModel, plan: SlicePlan, reqs: Sequence[Requirement]) -> float:
    return math.fsum(mean_erasure(s, net) for s, r in zip(plan.slices, reqs)
                     if r.delay_bound is not None)


def plan_partition(net: NetworkModel, reqs: Sequence[Requirement],
                   strategy: Strategy = Strategy.CONTIGUOUS) -> list:
    """Feasible slicings with per-slice predictions, fewest links first.

    Contiguous splits keep the network's link order; count-based plans give
    each application its minimum homogeneous slice. In-order delay bounds are
    only screened through E[D] here and are flagged for simulation.
    """
    strategy = Strategy(strategy)
    if not reqs:
        raise UsageError("plan_partition needs at least one requirement")
    if strategy is Strategy.CONTIGUOUS:
        if len(reqs) > 2:
            raise UsageError("contiguous splitting supports at most two applications")
        if len(reqs) == 1:
            spec = SliceSpec(range(net.n_links), reqs[0].protocol)
            res = _evaluate(net, spec, reqs[0])
            return [(SlicePlan((spec,), net.n_links), [res])] if res.feasible else []
        found = []
        for i in range(1, net.n_links):
            plan, results = evaluate_split(net, reqs, i)
            if all(r.feasible for r in results):
                found.append((plan, results))
        found.sort(key=lambda pr: (pr[0].links_used, _tie_key(net, pr[0], reqs), pr[0].choice))
        return found

    if not net.is_homogeneous():
        raise UsageError("count-based planning needs a homogeneous network")
    p = net.link_erasure_probs[0]
    allocs = [min_links(r, p, net.rtt) for r in reqs]
    if not all(a.feasible for a in allocs):
        return []
    if sum(a.links_needed for a in allocs) > net.n_links:
        return []
    specs, start = [], 0
    for a, r in zip(allocs, reqs):
        specs.append(SliceSpec(range(start, start + a.links_needed), r.protocol))
        start += a.links_needed
    return [(SlicePlan(tuple(specs)), allocs)]
