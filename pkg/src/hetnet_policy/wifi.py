"""WiFi saturation throughput curve, user cap, and the LTE/WiFi data threshold.

The analytic curve follows the basic-access saturation model of 802.11 DCF:
every station always has a frame queued, transmits in a random slot with
probability ``tau``, and collides with conditional probability ``p``.  The
pair ``(tau, p)`` is the unique fixed point of

    tau = 2 / (1 + Wmin + p * Wmin * sum_{i<m} (2p)^i)
    p   = 1 - (1 - tau)^(n - 1)

with ``Wmin = cw_min + 1`` and ``m`` backoff stages.  The per-user throughput
is the expected payload delivered per slot divided by the expected slot
length, shared evenly between the ``n`` stations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "WifiParams",
    "ThroughputCurve",
    "CurveError",
    "FixedPointError",
    "bianchi_curve",
    "table_curve",
    "compute_W",
    "compute_k_th",
]


class CurveError(ValueError):
    """Invalid throughput curve or a curve that cannot answer the query."""


class FixedPointError(RuntimeError):
    """The saturation fixed point did not converge."""

    def __init__(self, k: int, residual: float):
        super().__init__(f"saturation fixed point did not converge for k={k} (residual {residual:.3e})")
        self.k = k
        self.residual = residual


@dataclass(frozen=True)
class WifiParams:
    """802.11g basic-access timing.  Times in microseconds, rates in Mbps."""

    channel_bit_rate: float = 54.0
    payload_bits: int = 1500 * 8
    udp_header_bits: int = 224
    slot_us: float = 20.0
    sifs_us: float = 10.0
    difs_us: float = 50.0
    cw_min: int = 15
    cw_max: int = 1023
    # Composite overhead pieces: OFDM preamble + PLCP header (per frame),
    # MAC header with FCS, and the ACK frame body.
    phy_header_us: float = 20.0
    mac_header_bits: int = 272
    ack_bits: int = 112

    def __post_init__(self):
        for name in ("channel_bit_rate", "payload_bits", "udp_header_bits", "slot_us",
                     "sifs_us", "difs_us", "cw_min", "cw_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"WifiParams.{name} must be positive")
        for name in ("phy_header_us", "mac_header_bits", "ack_bits"):
            if getattr(self, name) < 0:
                raise ValueError(f"WifiParams.{name} must be non-negative")
        if self.cw_min > self.cw_max:
            raise ValueError("cw_min must not exceed cw_max")
        ratio = (self.cw_max + 1) / (self.cw_min + 1)
        if abs(math.log2(ratio) - round(math.log2(ratio))) > 1e-12:
            raise ValueError("(cw_max + 1) / (cw_min + 1) must be a power of two")

    @property
    def backoff_stages(self) -> int:
        return int(round(math.log2((self.cw_max + 1) / (self.cw_min + 1))))

    @property
    def data_frame_us(self) -> float:
        bits = self.mac_header_bits + self.udp_header_bits + self.payload_bits
        return self.phy_header_us + bits / self.channel_bit_rate

    @property
    def ack_frame_us(self) -> float:
        return self.phy_header_us + self.ack_bits / self.channel_bit_rate

    @property
    def ack_and_phy_overhead_us(self) -> float:
        """Airtime per successful exchange beyond the UDP/IP datagram and IFS gaps."""
        return 2 * self.phy_header_us + (self.mac_header_bits + self.ack_bits) / self.channel_bit_rate

    @property
    def success_us(self) -> float:
        return self.data_frame_us + self.sifs_us + self.ack_frame_us + self.difs_us

    @property
    def collision_us(self) -> float:
        return self.data_frame_us + self.difs_us

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass(frozen=True)
class ThroughputCurve:
    """Per-user WiFi throughput ``per_user[k-1] = R_WD(k)`` for k = 1..k_max.

    ``increment[k]`` is the total-throughput gain of the (k+1)-th user,
    ``(k+1) R_WD(k+1) - k R_WD(k)``, for k = 0..k_max-1; ``increment[0]``
    is therefore ``R_WD(1)``.
    """

    per_user: tuple[float, ...]
    source: str = "table"
    increment: tuple[float, ...] = field(init=False, compare=False)

    def __post_init__(self):
        values = tuple(float(v) for v in self.per_user)
        if not values:
            raise CurveError("throughput curve is empty")
        for k, v in enumerate(values, start=1):
            if not (v > 0 and math.isfinite(v)):
                raise CurveError(f"per-user throughput must be positive and finite (k={k})")
        for k in range(1, len(values)):
            if not values[k] < values[k - 1]:
                raise CurveError(f"per-user throughput must strictly decrease; violated at k={k + 1}")
        object.__setattr__(self, "per_user", values)
        totals = [0.0] + [k * v for k, v in enumerate(values, start=1)]
        object.__setattr__(self, "increment", tuple(totals[k + 1] - totals[k] for k in range(len(values))))

    @property
    def k_max(self) -> int:
        return len(self.per_user)

    def rate(self, k: int) -> float:
        """R_WD(k); zero users contribute nothing."""
        if k == 0:
            return 0.0
        if not 1 <= k <= self.k_max:
            raise CurveError(f"k={k} outside curve domain 1..{self.k_max}")
        return self.per_user[k - 1]

    def total(self, k: int) -> float:
        return k * self.rate(k)

    def totals(self) -> np.ndarray:
        """Array of k * R_WD(k) for k = 0..k_max."""
        return np.array([self.total(k) for k in range(self.k_max + 1)])

    def truncated(self, k_max: int) -> "ThroughputCurve":
        if not 1 <= k_max <= self.k_max:
            raise CurveError(f"cannot truncate a curve of length {self.k_max} to {k_max}")
        return ThroughputCurve(self.per_user[:k_max], source=self.source)

    def rows(self) -> list[tuple[int, float, float, float]]:
        """(k, per_user, total, increment) rows; the increment of the last k is NaN."""
        out = []
        for k in range(1, self.k_max + 1):
            inc = self.increment[k] if k < self.k_max else float("nan")
            out.append((k, self.rate(k), self.total(k), inc))
        return out


def _attempt_probability(p: float, w: int, m: int) -> float:
    # sum_{i<m} (2p)^i replaces (1 - (2p)^m) / (1 - 2p), which is singular at p = 1/2
    geom = sum((2.0 * p) ** i for i in range(m))
    return 2.0 / (1.0 + w + p * w * geom)


def _solve_tau(n: int, w: int, m: int, tol: float = 1e-10, max_iter: int = 200) -> float:
    if n == 1:
        return 2.0 / (w + 1)

    def residual(tau: float) -> float:
        p = 1.0 - (1.0 - tau) ** (n - 1)
        return tau - _attempt_probability(p, w, m)

    lo, hi = 0.0, 1.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        r = residual(mid)
        if abs(r) <= tol and hi - lo <= 1e-12:
            return mid
        if r < 0:
            lo = mid
        else:
            hi = mid
    r = residual(0.5 * (lo + hi))
    if abs(r) <= tol:
        return 0.5 * (lo + hi)
    raise FixedPointError(n, abs(r))


def bianchi_curve(wp: WifiParams, k_max: int) -> ThroughputCurve:
    """Saturation per-user throughput R_WD(k) in Mbps for k = 1..k_max."""
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    w, m = wp.cw_min + 1, wp.backoff_stages
    ts, tc, slot = wp.success_us, wp.collision_us, wp.slot_us
    values = []
    for n in range(1, k_max + 1):
        tau = _solve_tau(n, w, m)
        p_tr = 1.0 - (1.0 - tau) ** n
        p_s = n * tau * (1.0 - tau) ** (n - 1) / p_tr
        slot_len = (1.0 - p_tr) * slot + p_tr * p_s * ts + p_tr * (1.0 - p_s) * tc
        # bits per microsecond == Mbps
        values.append(p_s * p_tr * wp.payload_bits / slot_len / n)
    return ThroughputCurve(tuple(values), source="bianchi")


def table_curve(values: Iterable[Sequence[float]]) -> ThroughputCurve:
    """Build a curve from ``(k, mbps)`` pairs with k = 1, 2, ... contiguous."""
    pairs = [tuple(v) for v in values]
    if not pairs:
        raise CurveError("throughput table is empty")
    for expected, (k, _) in enumerate(pairs, start=1):
        if int(k) != k or int(k) != expected:
            raise CurveError(f"table k values must be 1, 2, ... contiguous; got k={k} at position {expected}")
    return ThroughputCurve(tuple(float(v) for _, v in pairs), source="table")


def compute_W(curve: ThroughputCurve, min_per_user: float) -> int:
    """Largest k whose per-user throughput still meets ``min_per_user``."""
    qualifying = [k for k in range(1, curve.k_max + 1) if curve.rate(k) >= min_per_user]
    if not qualifying:
        raise CurveError(f"no WiFi population meets {min_per_user} Mbps per user (R_WD(1)={curve.rate(1):.4g})")
    w = max(qualifying)
    if w == curve.k_max:
        raise CurveError(f"curve never drops below {min_per_user} Mbps within k<={curve.k_max}; extend k_max")
    return w


def compute_k_th(curve: ThroughputCurve, R_LD: float) -> tuple[int, bool]:
    """Data threshold and whether the two-sided threshold condition holds.

    ``k_th`` is the first k >= 1 at which an LTE data user adds at least as
    much as the WiFi increment.  The flag checks the whole curve domain,
    including k = 0 where the increment equals ``R_WD(1)``.
    """
    if R_LD <= 0:
        raise ValueError("R_LD must be positive")
    inc = curve.increment
    candidates = [k for k in range(1, len(inc)) if R_LD >= inc[k]]
    k_th = candidates[0] if candidates else len(inc)
    valid = all((R_LD >= inc[k]) == (k >= k_th) for k in range(len(inc)))
    return k_th, valid
