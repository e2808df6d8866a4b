"""Packet injection: the stochastic stock adversary, leaky-bucket compliance
checking, and schedule-targeting attack plans against fixed-schedule protocols.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .core import DistributionSpec


class ScheduleUnavailable(RuntimeError):
    """Raised when an attack needs a transmission schedule the protocol cannot give."""


# ---------------------------------------------------------------------------
# Target distributions
# ---------------------------------------------------------------------------

class Focused:
    """Two favored stations absorb most packets; the rest share a thin tail.

    Station probabilities: P(1) = P(2) = 1/3 + 1/(3n), P(i) = 1/(3n) for i > 2.
    """

    kind = "focused"

    def __init__(self, n: int):
        self.n = n
        self._p1 = Fraction(1, 3) + Fraction(1, 3 * n)
        self._t1 = float(self._p1)
        self._t2 = float(2 * self._p1)
        self._tail = 1.0 / (3 * n)

    def probability(self, station: int) -> Fraction:
        if station in (1, 2):
            return self._p1
        return Fraction(1, 3 * self.n)

    def sample(self, rng) -> int:
        u = rng.random()
        if u < self._t1:
            return 1
        if u < self._t2:
            return 2
        station = 3 + int((u - self._t2) / self._tail)
        return min(station, self.n)


class Flat:
    """Uniform target choice over all stations."""

    kind = "flat"

    def __init__(self, n: int):
        self.n = n

    def probability(self, station: int) -> Fraction:
        return Fraction(1, self.n)

    def sample(self, rng) -> int:
        return rng.randrange(self.n) + 1


class SingleTarget:
    """Every packet goes to one fixed station."""

    kind = "single"

    def __init__(self, target: int):
        self.target = target

    def sample(self, rng) -> int:
        return self.target


class Plan:
    """Fixed injection schedule of (round, station, count) entries."""

    kind = "plan"

    def __init__(self, entries):
        self.entries = tuple(sorted(tuple(e) for e in entries))
        by_round: dict[int, dict[int, int]] = {}
        for rnd, sid, cnt in self.entries:
            if cnt:
                row = by_round.setdefault(rnd, {})
                row[sid] = row.get(sid, 0) + cnt
        self._by_round = by_round

    def injections_for(self, round_no: int) -> dict[int, int]:
        return self._by_round.get(round_no, {})

    def total(self) -> int:
        return sum(cnt for _, _, cnt in self.entries)

    def to_json(self) -> list[dict]:
        return [{"round": r, "station": s, "count": c} for r, s, c in self.entries]


def make_distribution(spec: DistributionSpec, n: int):
    if spec.kind == "focused":
        return Focused(n)
    if spec.kind == "flat":
        return Flat(n)
    if spec.kind == "single":
        return SingleTarget(spec.target)
    if spec.kind == "plan":
        return Plan(spec.plan)
    raise ValueError(f"unknown distribution kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# Stochastic stock adversary
# ---------------------------------------------------------------------------

@dataclass
class AdversaryState:
    """Withholds packets in a stock and releases them in bursts.

    Each round the stock grows by one with probability rho; the whole stock is
    then released with probability burst_p, or unconditionally once it reaches
    stock_b, so the stock never ends a round above the cap.
    """

    rho: float
    burst_p: float
    stock_b: int
    distribution: object
    stock: int = 0


def adversary_step(state: AdversaryState, round_no: int, rng) -> dict[int, int]:
    """Advance the adversary one round; returns {station: packets} injected."""
    dist = state.distribution
    if isinstance(dist, Plan):
        return dist.injections_for(round_no)

    if rng.random() < state.rho:
        state.stock += 1
    release = rng.random() < state.burst_p
    if state.stock >= state.stock_b:
        release = True
    if not release or state.stock == 0:
        return {}
    out: dict[int, int] = {}
    for _ in range(state.stock):
        sid = dist.sample(rng)
        out[sid] = out.get(sid, 0) + 1
    state.stock = 0
    return out


# ---------------------------------------------------------------------------
# Leaky-bucket compliance
# ---------------------------------------------------------------------------

def validate_leaky_bucket(trace, rho: float, b: int):
    """Check a per-round injection trace against the (rho, b) bound.

    Returns None when every window [t1, t2] satisfies
    injections <= rho * (t2 - t1 + 1) + b, else the first violating window,
    ordered by its end round and then by its start round.
    """
    # With D(t) = sum(trace[:t]) - rho*t, window [t1, t2] violates iff
    # D(t2) - D(t1 - 1) > b; scanning end rounds against the running prefix
    # minimum finds the earliest violating end in one pass.
    d = 0.0
    running_min = 0.0
    prefix = [0.0]
    for t2, count in enumerate(trace, start=1):
        d += count - rho
        prefix.append(d)
        if d - running_min > b:
            for t1 in range(1, t2 + 1):
                if d - prefix[t1 - 1] > b:
                    return (t1, t2)
        if d < running_min:
            running_min = d
    return None


# ---------------------------------------------------------------------------
# Attacks on fixed-schedule protocols
# ---------------------------------------------------------------------------

def min_schedule_attack(schedule, tau: int, n: int, k: int) -> Plan:
    """Build a plan overloading the station with the fewest scheduled slots.

    `schedule` maps a round to the set of stations switched on that round; it
    must exist (fixed in advance), so protocols that adapt to the channel
    raise ScheduleUnavailable. The plan injects floor(tau*k/n) + 1 packets into
    the least-scheduled station (ties broken toward the lowest ID), spread
    evenly over [1, tau].
    """
    if schedule is None:
        raise ScheduleUnavailable("protocol does not expose a fixed schedule")
    counts = {sid: 0 for sid in range(1, n + 1)}
    for rnd in range(1, tau + 1):
        for sid in schedule(rnd):
            counts[sid] += 1
    target = min(counts, key=lambda sid: (counts[sid], sid))
    total = (tau * k) // n + 1
    rounds = [max(1, math.ceil(j * tau / total)) for j in range(1, total + 1)]
    merged: dict[int, int] = {}
    for rnd in rounds:
        merged[rnd] = merged.get(rnd, 0) + 1
    return Plan((rnd, target, cnt) for rnd, cnt in sorted(merged.items()))
