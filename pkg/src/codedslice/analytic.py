"""Closed-form delay and goodput models for SR-ARQ and RLNC slices.

Heterogeneous links enter every formula only through the slice's mean
erasure probability. All delays are in time slots, goodputs in information
packets per slot.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError

DEFAULT_FEC_MULTIPLIER = 1.1
DEFAULT_FB_MULTIPLIER = 2.0

_CEIL_EPS = 1e-9


def ceil_count(x: float) -> int:
    """Ceiling that ignores floating-point noise (``50 * 1.22`` is 61, not 62)."""
    return math.ceil(x - _CEIL_EPS * max(1.0, abs(x)))


class Protocol(str, enum.Enum):
    SRARQ = "srarq"
    RLNC = "rlnc"


@dataclass(frozen=True)
class NetworkModel:
    """Pool of parallel erasure links sharing one round-trip time."""

    link_erasure_probs: tuple
    rtt: int
    slot_duration: Optional[float] = None  # seconds per slot, unit conversion only

    def __post_init__(self):
        probs = tuple(float(p) for p in self.link_erasure_probs)
        object.__setattr__(self, "link_erasure_probs", probs)
        if not probs:
            raise ConfigurationError("network needs at least one link")
        for i, p in enumerate(probs):
            if not 0.0 <= p < 1.0:
                raise ConfigurationError(f"link {i} erasure probability {p} not in [0, 1)")
        if isinstance(self.rtt, bool) or int(self.rtt) != self.rtt:
            raise ConfigurationError(f"rtt must be an integer slot count, got {self.rtt}")
        object.__setattr__(self, "rtt", int(self.rtt))
        if self.rtt <= 0 or self.rtt % 2:
            raise ConfigurationError(f"rtt must be a positive even slot count, got {self.rtt}")
        if self.slot_duration is not None and not self.slot_duration > 0:
            raise ConfigurationError("slot_duration must be positive")

    @classmethod
    def homogeneous(cls, n: int, p: float, rtt: int, slot_duration=None) -> "NetworkModel":
        return cls((p,) * n, rtt, slot_duration)

    @property
    def n_links(self) -> int:
        return len(self.link_erasure_probs)

    @property
    def one_way(self) -> int:
        return self.rtt // 2

    def is_homogeneous(self) -> bool:
        return len(set(self.link_erasure_probs)) == 1


@dataclass(frozen=True)
class ProtocolConfig:
    """SR-ARQ, or RLNC with generation size and FEC/FB redundancy rates.

    RLNC rates left as ``None`` are derived per slice from its mean erasure
    probability with :func:`default_rates` (see :meth:`resolve`).
    """

    variant: Protocol = Protocol.SRARQ
    generation_size: Optional[int] = None
    fec_rate: Optional[float] = None
    fb_rate: Optional[float] = None
    fec_multiplier: float = DEFAULT_FEC_MULTIPLIER
    fb_multiplier: float = DEFAULT_FB_MULTIPLIER

    def __post_init__(self):
        object.__setattr__(self, "variant", Protocol(self.variant))
        if self.variant is Protocol.SRARQ:
            return
        k = self.generation_size
        if k is None or isinstance(k, bool) or int(k) != k or k < 1:
            raise ConfigurationError(f"RLNC generation_size must be a positive integer, got {k}")
        object.__setattr__(self, "generation_size", int(k))
        if self.fec_rate is not None and self.fec_rate < 1:
            raise ConfigurationError(f"RLNC fec_rate must be >= 1, got {self.fec_rate}")
        if self.fb_rate is not None and self.fb_rate < 1:
            raise ConfigurationError(f"RLNC fb_rate must be >= 1, got {self.fb_rate}")

    @classmethod
    def srarq(cls) -> "ProtocolConfig":
        return cls(Protocol.SRARQ)

    @classmethod
    def rlnc(cls, generation_size: int, fec_rate=None, fb_rate=None,
             fec_multiplier=DEFAULT_FEC_MULTIPLIER,
             fb_multiplier=DEFAULT_FB_MULTIPLIER) -> "ProtocolConfig":
        return cls(Protocol.RLNC, generation_size, fec_rate, fb_rate,
                   fec_multiplier, fb_multiplier)

    @property
    def is_rlnc(self) -> bool:
        return self.variant is Protocol.RLNC

    @property
    def is_resolved(self) -> bool:
        return not self.is_rlnc or (self.fec_rate is not None and self.fb_rate is not None)

    def resolve(self, mean_erasure: float) -> "ProtocolConfig":
        """Fill in missing RLNC rates for a slice with the given mean erasure."""
        if self.is_resolved:
            return self
        fec, fb = default_rates(mean_erasure, self.fec_multiplier, self.fb_multiplier)
        return replace(
            self,
            fec_rate=self.fec_rate if self.fec_rate is not None else fec,
            fb_rate=self.fb_rate if self.fb_rate is not None else fb,
        )

    def first_round_size(self, k: Optional[int] = None) -> int:
        """Coded packets sent in round 1 for a generation of ``k`` packets."""
        self._require_resolved()
        k = self.generation_size if k is None else k
        return ceil_count(k * self.fec_rate)

    def repair_round_size(self, missing: int) -> int:
        self._require_resolved()
        return ceil_count(self.fb_rate * missing)

    def _require_resolved(self):
        if not self.is_rlnc:
            raise ConfigurationError("operation requires an RLNC protocol")
        if not self.is_resolved:
            raise ConfigurationError("RLNC rates are unresolved; call resolve(mean_erasure)")


@dataclass(frozen=True)
class SliceSpec:
    link_indices: tuple
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig.srarq)

    def __post_init__(self):
        idx = tuple(int(i) for i in self.link_indices)
        object.__setattr__(self, "link_indices", idx)
        if not idx:
            raise ConfigurationError("slice must contain at least one link")
        if len(set(idx)) != len(idx):
            raise ConfigurationError(f"slice has duplicate link indices: {list(idx)}")

    @property
    def size(self) -> int:
        return len(self.link_indices)

    def validate(self, net: NetworkModel) -> None:
        for i in self.link_indices:
            if not 0 <= i < net.n_links:
                raise ConfigurationError(
                    f"link index {i} out of range for a {net.n_links}-link network")

    def erasure_probs(self, net: NetworkModel) -> list:
        self.validate(net)
        return [net.link_erasure_probs[i] for i in self.link_indices]

    def resolved_protocol(self, net: NetworkModel) -> ProtocolConfig:
        return self.protocol.resolve(mean_erasure(self, net))


def check_disjoint(slices: Sequence[SliceSpec], net: NetworkModel) -> None:
    seen = {}
    for j, s in enumerate(slices):
        s.validate(net)
        for i in s.link_indices:
            if i in seen:
                raise ConfigurationError(f"link {i} assigned to slices {seen[i]} and {j}")
            seen[i] = j


def _check_prob(p: float) -> None:
    if not 0.0 <= p < 1.0:
        raise ConfigurationError(f"mean erasure probability {p} not in [0, 1)")


def mean_erasure(slice: SliceSpec, net: NetworkModel) -> float:
    probs = slice.erasure_probs(net)
    return math.fsum(probs) / len(probs)


# ---------------------------------------------------------------------------
# SR-ARQ


@dataclass(frozen=True)
class DelayPmf:
    """Truncated delay distribution with an explicit tail mass beyond the last delay."""

    delays: np.ndarray
    probs: np.ndarray
    tail_mass: float

    def total(self) -> float:
        return math.fsum(self.probs) + self.tail_mass

    def mean(self) -> float:
        """Mean over the explicit support (the tail is ignored)."""
        return float(np.dot(self.delays, self.probs))

    def as_pairs(self) -> list:
        return list(zip(self.delays.tolist(), self.probs.tolist()))


def srarq_delay_pmf(mean_erasure: float, rtt: int, max_k: int) -> DelayPmf:
    """P[D = RTT/2 + k RTT] for k = 0..max_k, geometric in the mean erasure."""
    _check_prob(mean_erasure)
    if max_k < 0:
        raise ConfigurationError("max_k must be >= 0")
    k = np.arange(max_k + 1)
    delays = rtt / 2 + k * rtt
    probs = mean_erasure ** k * (1.0 - mean_erasure)
    return DelayPmf(delays.astype(float), probs, float(mean_erasure ** (max_k + 1)))


def srarq_expected_delay(mean_erasure: float, rtt: float) -> float:
    _check_prob(mean_erasure)
    return 0.5 * (1.0 + mean_erasure) / (1.0 - mean_erasure) * rtt


def srarq_expected_goodput(slice: SliceSpec, net: NetworkModel) -> float:
    if slice.protocol.is_rlnc:
        raise ConfigurationError("srarq_expected_goodput needs an SR-ARQ slice")
    return math.fsum(1.0 - p for p in slice.erasure_probs(net))


# ---------------------------------------------------------------------------
# RLNC


@dataclass(frozen=True)
class MissingDofPmf:
    """Distribution of degrees of freedom still missing after round 1.

    ``probs[m]`` for m = 0..k. ``threshold`` is the number of round-1 erasures
    the generation absorbs without a repair round.
    """

    probs: np.ndarray
    lam: float
    threshold: int

    @property
    def p_zero(self) -> float:
        return float(self.probs[0])

    @property
    def generation_size(self) -> int:
        return len(self.probs) - 1

    def total(self) -> float:
        return math.fsum(self.probs)

    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.probs)), self.probs))


def poisson_pmf(lam: float, upto: int) -> np.ndarray:
    """Poisson probabilities for 0..upto, by log-domain recurrence."""
    if lam == 0:
        out = np.zeros(upto + 1)
        out[0] = 1.0
        return out
    log_lam = math.log(lam)
    logs = np.empty(upto + 1)
    logs[0] = -lam
    for f in range(upto):
        logs[f + 1] = logs[f] + log_lam - math.log(f + 1)
    return np.exp(logs)


def rlnc_missing_dof_pmf(cfg: ProtocolConfig, mean_erasure: float) -> MissingDofPmf:
    """Poisson approximation of the missing-DoF count after the first round.

    Tail mass beyond ``threshold + k`` is folded into m = k so the result is
    a proper distribution.
    """
    _check_prob(mean_erasure)
    cfg = cfg.resolve(mean_erasure)
    cfg._require_resolved()
    k = cfg.generation_size
    lam = k * cfg.fec_rate * mean_erasure
    c = ceil_count((cfg.fec_rate - 1.0) * k)
    pois = poisson_pmf(lam, c + k)
    probs = np.empty(k + 1)
    probs[0] = math.fsum(pois[: c + 1])
    probs[1:] = pois[c + 1:]
    residual = 1.0 - math.fsum(probs)
    if residual > 0:
        probs[k] += residual
    return MissingDofPmf(probs, lam, c)


def rlnc_expected_delay(cfg: ProtocolConfig, slice_size: int, rtt: float,
                        pmf: MissingDofPmf) -> float:
    cfg._require_resolved()
    if slice_size < 1:
        raise ConfigurationError("slice_size must be >= 1")
    slots = ceil_count(cfg.generation_size * cfg.fec_rate / slice_size)
    p0 = pmf.p_zero
    return (rtt / 2 + slots) * p0 + (3 * rtt / 2 + slots + 1) * (1.0 - p0)


def rlnc_expected_goodput(cfg: ProtocolConfig, slice_size: int, pmf: MissingDofPmf) -> float:
    cfg._require_resolved()
    k = cfg.generation_size
    m = np.arange(len(pmf.probs))
    per_link = np.dot(k / (k * cfg.fec_rate + m * cfg.fb_rate), pmf.probs)
    return float(per_link * slice_size)


def default_rates(mean_erasure: float, fec_multiplier: float = DEFAULT_FEC_MULTIPLIER,
                  fb_multiplier: float = DEFAULT_FB_MULTIPLIER) -> tuple:
    """(FEC rate, FB rate) scaled by 1/(1 - mean erasure)."""
    _check_prob(mean_erasure)
    fec = fec_multiplier / (1.0 - mean_erasure)
    fb = fb_multiplier / (1.0 - mean_erasure)
    if fec < 1.0:
        raise ConfigurationError(f"derived FEC rate {fec:.4g} < 1; raise fec_multiplier")
    if fb < 1.0:
        raise ConfigurationError(f"derived FB rate {fb:.4g} < 1; raise fb_multiplier")
    return fec, fb


# ---------------------------------------------------------------------------
# Dispatch helpers used by the planner and the reports


@dataclass(frozen=True)
class Prediction:
    delay: float
    goodput: float
    missing: Optional[MissingDofPmf] = None


def predict(protocol: ProtocolConfig, mean_erasure: float, slice_size: int,
            rtt: int) -> Prediction:
    """Expected delay and goodput of a slice described by size and mean erasure."""
    if protocol.is_rlnc:
        cfg = protocol.resolve(mean_erasure)
        pmf = rlnc_missing_dof_pmf(cfg, mean_erasure)
        return Prediction(rlnc_expected_delay(cfg, slice_size, rtt, pmf),
                          rlnc_expected_goodput(cfg, slice_size, pmf), pmf)
    return Prediction(srarq_expected_delay(mean_erasure, rtt),
                      slice_size * (1.0 - mean_erasure))


def predict_slice(slice: SliceSpec, net: NetworkModel) -> Prediction:
    p = mean_erasure(slice, net)
    if slice.protocol.is_rlnc:
        return predict(slice.protocol, p, slice.size, net.rtt)
    return Prediction(srarq_expected_delay(p, net.rtt), srarq_expected_goodput(slice, net))
