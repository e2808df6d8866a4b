"""Round loop: injection, action collection, channel resolution, restraint
accounting, queue updates, and conservation checking.

Each round runs in a fixed order: the adversary injects, switched-on stations
act, the channel resolves to silence / one delivery / collision, feedback goes
back to the on-mode stations, and the restrain limit plus the packet
conservation identity are asserted.
"""

from __future__ import annotations

from dataclasses import dataclass

from .adversary import AdversaryState, adversary_step, make_distribution
from .core import (
    COLLISION, SILENCE, ChannelObservation, ProtocolInvariantBroken,
    RestrainViolation, SimConfig, SimulationError, derive_stream, single,
    validate_config,
)
from .metrics import MetricsAccumulator, MetricsSummary, metrics_update
from .protocols import make_system


@dataclass(frozen=True)
class RoundReport:
    observation: ChannelObservation
    on_mode: int
    injections: int
    delivered: bool


@dataclass(frozen=True)
class SimResult:
    """Counters and measurements from one finished run."""

    config: SimConfig
    injected: int
    delivered: int
    queued_total: int
    final_queues: tuple[int, ...]
    collisions: int
    max_cycle_collisions: int
    max_on_mode: int
    metrics: MetricsSummary
    checkpoints: tuple = ()
    reports: tuple = ()


def resolve_channel(attempts) -> ChannelObservation:
    """0 attempts -> silence, 1 -> that single transmission, >= 2 -> collision."""
    if not attempts:
        return SILENCE
    if len(attempts) == 1:
        sid, bits = attempts[0]
        return single(sid, bits)
    return COLLISION


def restrain_check(actions, limit):
    """Count on-mode actions against the limit; None when within it."""
    if isinstance(actions, int):
        count = actions
    else:
        count = sum(1 for a in actions if a.kind != "off")
    if limit is not None and count > limit:
        return RestrainViolation(0, count, limit)
    return None


class Engine:
    """One simulation world; single-threaded, deterministic in the seed."""

    def __init__(self, config, *, checkpoint_rounds=(), collect_reports=False):
        self.config = config = validate_config(config)
        self.n = config.n
        self.queues = list(config.initial_queues)
        self.system = make_system(config)
        self.adversary = AdversaryState(
            rho=config.rho, burst_p=config.burst_p, stock_b=config.stock_b,
            distribution=make_distribution(config.distribution, config.n),
        )
        self.rng_adversary = derive_stream(config.seed, "adversary")
        self.acc = MetricsAccumulator(config.n)
        self.round = 0
        self.injected = sum(config.initial_queues)
        self.delivered = 0
        self.queued_total = self.injected
        self.collisions = 0
        self.cycle_collisions = 0
        self.max_cycle_collisions = 0
        self.max_on_mode = 0
        self.checkpoint_rounds = frozenset(checkpoint_rounds)
        self.checkpoints = []
        self.collect_reports = collect_reports
        self.reports = []
        limit = config.restrain_limit
        declared = self.system.declared
        if limit is None:
            self.limit = declared
        elif declared is None:
            self.limit = limit
        else:
            self.limit = min(limit, declared)

    def step(self) -> RoundReport:
        """Advance one round and report what happened on the channel."""
        self.round += 1
        r = self.round
        queues = self.queues
        system = self.system

        injections = adversary_step(self.adversary, r, self.rng_adversary)
        injected_now = 0
        if injections:
            for sid, count in injections.items():
                queues[sid - 1] += count
                injected_now += count
            self.injected += injected_now
            self.queued_total += injected_now
            if system.wants_injection_notes:
                system.note_injections(injections)

        attempts, on_count = system.actions(r, queues)
        n_attempts = len(attempts)
        if n_attempts == 0:
            obs = SILENCE
            success = None
            delivered_now = False
        elif n_attempts == 1:
            sid, bits = attempts[0]
            if queues[sid - 1] <= 0:
                raise ProtocolInvariantBroken(
                    f"round {r}: station {sid} transmitted with an empty queue")
            queues[sid - 1] -= 1
            self.delivered += 1
            self.queued_total -= 1
            obs = single(sid, bits)
            success = sid
            delivered_now = True
        else:
            for sid, _ in attempts:
                if queues[sid - 1] <= 0:
                    raise ProtocolInvariantBroken(
                        f"round {r}: station {sid} transmitted with an empty queue")
            obs = COLLISION
            success = None
            delivered_now = False
            self.collisions += 1
            self.cycle_collisions += 1

        if system.wants_feedback:
            system.finish_round(r, obs, success, queues)

        limit = self.limit
        if on_count > self.max_on_mode:
            self.max_on_mode = on_count
        if limit is not None and on_count > limit:
            raise RestrainViolation(r, on_count, limit)
        if self.injected != self.delivered + self.queued_total:
            raise SimulationError(
                f"round {r}: conservation broken "
                f"({self.injected} != {self.delivered} + {self.queued_total})")

        metrics_update(self.acc, queues, on_count,
                       collision=n_attempts >= 2, total=self.queued_total)
        if r % self.n == 0:
            if self.cycle_collisions > self.max_cycle_collisions:
                self.max_cycle_collisions = self.cycle_collisions
            self.cycle_collisions = 0
        if r in self.checkpoint_rounds:
            self.checkpoints.append((r, self.acc.snapshot()))

        report = RoundReport(obs, on_count, injected_now, delivered_now)
        if self.collect_reports:
            self.reports.append(report)
        return report

    def run(self) -> SimResult:
        step = self.step
        for _ in range(self.config.rounds - self.round):
            step()
        if self.cycle_collisions > self.max_cycle_collisions:
            self.max_cycle_collisions = self.cycle_collisions
        return SimResult(
            config=self.config,
            injected=self.injected,
            delivered=self.delivered,
            queued_total=self.queued_total,
            final_queues=tuple(self.queues),
            collisions=self.collisions,
            max_cycle_collisions=self.max_cycle_collisions,
            max_on_mode=self.max_on_mode,
            metrics=self.acc.snapshot(),
            checkpoints=tuple(self.checkpoints),
            reports=tuple(self.reports),
        )


def run_round(engine: Engine) -> RoundReport:
    """Advance an engine one round; the engine is the mutable world state."""
    return engine.step()


def run_simulation(config, *, checkpoint_rounds=(), collect_reports=False) -> SimResult:
    """Run a validated (or raw) configuration to completion."""
    return Engine(config, checkpoint_rounds=checkpoint_rounds,
                  collect_reports=collect_reports).run()
