"""The protocol families: token-cycle adaptive and full-sensing state machines,
fixed-schedule round-robin and interleaved selectors, three backoff variants,
and the centralized state-aware comparator.

Stations expose decide(round, queue_len) -> StationAction and
observe(round, observation, own_ack); decide mutates only transmission-phase
state, observe is the sole channel-feedback mutator. A per-protocol system
object drives the stations efficiently (idle stations sit in a wake calendar
instead of being polled every round).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import (
    LISTEN, OFF, TRANSMIT, TRANSMIT_BIG, TRANSMIT_LAST_BIG, ChannelObservation,
    ProtocolInvariantBroken, SimConfig, StationAction, derive_stream,
)
from .selectors import SelectorFamily

IDLE = "idle"
LISTENING = "listening"
TRANSMITTING = "transmitting"
BIG = "big"
LAST_BIG = "last_big"

BACKOFF_WINDOW_CAP = 2048


def _move_to_front(order: list[int], sid: int) -> None:
    if order[0] != sid:
        order.remove(sid)
        order.insert(0, sid)


# ---------------------------------------------------------------------------
# Token-cycle stations (adaptive and full-sensing)
# ---------------------------------------------------------------------------

class AdaptiveStation:
    """Token-cycle station that marks its packets with big/last-big bits.

    One station holds the transmit token per round while its successor on the
    shared list listens; a station whose queue exceeds 3n keeps the token as
    "big" until an end-of-cycle round finds it back at or below 3n, then
    announces the handoff for one more full cycle so every station moves it to
    the front of its local list.
    """

    __slots__ = ("sid", "n", "state", "order", "wake_round")

    def __init__(self, sid: int, n: int):
        self.sid = sid
        self.n = n
        self.order = list(range(1, n + 1))
        if sid == 1:
            self.state = TRANSMITTING
            self.wake_round = 0
        elif sid == 2:
            self.state = LISTENING
            self.wake_round = 0
        else:
            self.state = IDLE
            self.wake_round = sid - 1  # its first listening slot

    def position(self) -> int:
        return self.order.index(self.sid)

    def wake(self) -> None:
        self.state = LISTENING

    def decide(self, round_no: int, queue_len: int) -> StationAction:
        n = self.n
        state = self.state
        if state is TRANSMITTING:
            if queue_len > 3 * n:
                self.state = BIG
                return TRANSMIT_BIG
            self.state = IDLE
            self.wake_round = round_no + n - 1
            if queue_len > 0:
                return TRANSMIT
            return OFF  # token held with an empty queue: silent round
        if state is BIG:
            if round_no % n == 0 and queue_len <= 3 * n:
                self.state = LAST_BIG
                return TRANSMIT_LAST_BIG
            if queue_len == 0:
                raise ProtocolInvariantBroken(f"big station {self.sid} has no packets")
            return TRANSMIT_BIG
        if state is LAST_BIG:
            if queue_len == 0:
                raise ProtocolInvariantBroken(f"last-big station {self.sid} has no packets")
            if round_no % n == 0:
                # Handoff cycle complete: take the head of the list and keep
                # the token as a plain transmitter from the next round on.
                _move_to_front(self.order, self.sid)
                self.state = TRANSMITTING
            return TRANSMIT_LAST_BIG
        if state is LISTENING:
            return LISTEN
        return OFF

    def observe(self, round_no: int, obs: ChannelObservation, own_ack: bool) -> None:
        if self.state is not LISTENING:
            return
        if obs.kind == "collision":
            raise ProtocolInvariantBroken("collision heard under the adaptive protocol")
        bits = obs.bits
        if obs.kind == "single" and bits is not None and (bits.big or bits.last_big):
            # Sleep until the same listening slot next cycle, one round later
            # when the front-move pushed this station's position up by one.
            before = self.position()
            if bits.last_big:
                _move_to_front(self.order, obs.sender)
            shifted = 1 if self.position() > before else 0
            self.state = IDLE
            self.wake_round = round_no + self.n + shifted
        else:
            # Plain transmission or silence: the token passes to this station.
            self.state = TRANSMITTING


class FullSensingStation:
    """Token-cycle station that infers big stations from IDs and collisions.

    Without control bits, a listener learns about a big station either by
    hearing a transmitter that is not its list predecessor or by waiting one
    extra round after a collision. variant_k = 0 is the original protocol
    (big threshold 3n); variant_k >= 1 raises the threshold to 2n + k*n and
    makes an interrupted transmitter sleep about k*n rounds.
    """

    __slots__ = ("sid", "n", "state", "order", "wake_round", "variant_k",
                 "transmitted", "queue_seen", "token_from_exit")

    def __init__(self, sid: int, n: int, variant_k: int = 0):
        self.sid = sid
        self.n = n
        self.variant_k = variant_k
        self.order = list(range(1, n + 1))
        self.transmitted = False
        self.queue_seen = 0
        self.token_from_exit = False
        if sid == 1:
            self.state = TRANSMITTING
            self.wake_round = 0
        elif sid == 2:
            self.state = LISTENING
            self.wake_round = 0
        else:
            self.state = IDLE
            self.wake_round = sid - 1

    def position(self) -> int:
        return self.order.index(self.sid)

    def predecessor(self) -> int:
        return self.order[self.position() - 1]

    def _big_threshold(self) -> int:
        if self.variant_k >= 1:
            return 2 * self.n + self.variant_k * self.n
        return 3 * self.n

    def _slot_next_cycle(self, round_no: int) -> int:
        """This station's listening round within the cycle after round_no.

        A station at list position p listens in rounds congruent to p and
        transmits the round after; re-deriving the wake from the current
        position re-packs the schedule after big-station moves reshuffle
        the list.
        """
        n = self.n
        cycle_close = round_no + (-round_no) % n
        position = self.position()
        return cycle_close + (position if position >= 1 else n)

    def wake(self) -> None:
        self.state = LISTENING

    def decide(self, round_no: int, queue_len: int) -> StationAction:
        state = self.state
        self.queue_seen = queue_len
        if state is TRANSMITTING:
            if queue_len > 0:
                self.transmitted = True
                return TRANSMIT
            self.transmitted = False
            return LISTEN  # nothing to send; stay on to read the channel
        if state is BIG:
            if queue_len == 0:
                raise ProtocolInvariantBroken(f"big station {self.sid} has no packets")
            self.transmitted = True
            return TRANSMIT
        if state is LISTENING:
            return LISTEN
        return OFF

    def observe(self, round_no: int, obs: ChannelObservation, own_ack: bool) -> None:
        n = self.n
        state = self.state
        if state is LISTENING:
            if obs.kind == "collision":
                return  # hold on one round to hear the big station's ID
            if obs.kind == "single" and obs.sender != self.predecessor():
                # Out-of-order transmitter: it must be big; learn it and
                # sleep until this station's listening slot next cycle.
                _move_to_front(self.order, obs.sender)
                self.state = IDLE
                self.wake_round = self._slot_next_cycle(round_no)
            else:  # predecessor transmitted, or silence: take the token
                self.state = TRANSMITTING
            return

        if state is TRANSMITTING:
            if obs.kind == "collision":
                # Interrupted by the big station whose transmission handed
                # this station the token; a station that took the token via
                # its own big-state exit learned nothing from the collision.
                if not self.token_from_exit:
                    _move_to_front(self.order, self.predecessor())
                extra = (self.variant_k - 1) * n if self.variant_k >= 1 else 0
                self.state = IDLE
                self.wake_round = self._slot_next_cycle(round_no) + extra
            elif obs.kind == "single":
                if self.transmitted:
                    if self.queue_seen - 1 > self._big_threshold():
                        self.state = BIG
                    else:
                        self.state = IDLE
                        self.wake_round = round_no + n - 1
                else:
                    # A big predecessor transmitted through this empty slot.
                    _move_to_front(self.order, obs.sender)
                    self.state = IDLE
                    self.wake_round = round_no + n - 1
            else:  # silence: queue was empty and no big station exists
                self.state = IDLE
                self.wake_round = round_no + n - 1
            self.transmitted = False
            self.token_from_exit = False
            return

        if state is BIG:
            remaining = self.queue_seen - (1 if own_ack else 0)
            if round_no % n == 0 and remaining <= 2 * n:
                _move_to_front(self.order, self.sid)
                self.state = TRANSMITTING
                self.token_from_exit = True
            self.transmitted = False


# ---------------------------------------------------------------------------
# Schedule helpers (acknowledgment-based protocols)
# ---------------------------------------------------------------------------

def round_robin_turn(round_no: int, n: int) -> int:
    """Station allowed to transmit alone in this round (1-based everywhere)."""
    return (round_no - 1) % n + 1


@dataclass
class InterleavedState:
    """Per-level selector families cycled one set per level per pass."""

    levels: int
    families: tuple[SelectorFamily, ...]

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(len(f.sets) for f in self.families)


def singleton_family(n: int, omega: int) -> SelectorFamily:
    return SelectorFamily(n, omega, 1, tuple((i,) for i in range(1, n + 1)),
                          "singletons")


def build_interleaved_state(n: int, families) -> InterleavedState:
    """Assign one family per level omega = 2^i, falling back to singletons.

    A level uses the first provided family whose omega matches; levels with no
    usable family run the plain one-station-per-round schedule.
    """
    levels = max(1, math.ceil(math.log2(n)))
    chosen = []
    for i in range(1, levels + 1):
        omega = 2 ** i
        pick = None
        for fam in families:
            if fam.omega == omega and fam.n == n:
                pick = fam
                break
        chosen.append(pick if pick is not None else singleton_family(n, omega))
    return InterleavedState(levels, tuple(chosen))


def interleaved_schedule(t: int, state: InterleavedState) -> tuple[int, int]:
    """Decompose round t = j*L + i into (level i, 1-based set index)."""
    levels = state.levels
    i = (t - 1) % levels + 1
    j = (t - i) // levels
    m_i = len(state.families[i - 1].sets)
    return i, j % m_i + 1


def state_aware_choose(queues) -> int | None:
    """Lowest-ID station among the largest queues; None when all are empty."""
    best = max(queues)
    if best == 0:
        return None
    return queues.index(best) + 1


def backoff_window(kind: str, i: int) -> int:
    """Contention window after i failures, capped at 2048 and floored at 1."""
    if kind == "exponential":
        w = 2 ** i if i < 11 else BACKOFF_WINDOW_CAP
    elif kind == "linear":
        w = 2 * i
    elif kind == "square":
        w = 2 * i * i
    else:
        raise ValueError(f"unknown backoff kind {kind!r}")
    return max(1, min(BACKOFF_WINDOW_CAP, w))


class BackoffStation:
    """Randomized sender: pick a slot in the current window, grow it on failure.

    The failure counter belongs to the head-of-line packet; it resets on a
    delivered packet and never shrinks while that packet waits.
    """

    __slots__ = ("sid", "kind", "attempts", "slot", "rng")

    def __init__(self, sid: int, kind: str, rng):
        self.sid = sid
        self.kind = kind
        self.attempts = 0
        self.slot = None
        self.rng = rng

    def decide(self, round_no: int, queue_len: int) -> StationAction:
        if queue_len <= 0:
            return OFF
        if self.slot is None:
            self.slot = round_no + self.rng.randrange(backoff_window(self.kind, self.attempts))
        if self.slot == round_no:
            return TRANSMIT
        return OFF

    def on_success(self) -> None:
        self.attempts = 0
        self.slot = None

    def on_failure(self) -> None:
        self.attempts += 1
        self.slot = None


# ---------------------------------------------------------------------------
# Protocol systems: drive stations for the engine
# ---------------------------------------------------------------------------

class ProtocolSystem:
    """Round driver for one protocol family."""

    wants_feedback = False
    wants_injection_notes = False
    declared = None  # channel restrain this protocol promises

    def actions(self, round_no: int, queues) -> tuple[list, int]:
        """Return ([(station, bits), ...] transmit attempts, on-mode count)."""
        raise NotImplementedError

    def finish_round(self, round_no: int, obs, success_sid, queues) -> None:
        pass

    def note_injections(self, injections) -> None:
        pass

    def schedule_oracle(self):
        """round -> tuple of on-mode stations, for fixed-schedule protocols."""
        return None


class TokenSystem(ProtocolSystem):
    """Drives adaptive or full-sensing stations through the wake calendar."""

    wants_feedback = True

    def __init__(self, config: SimConfig):
        n = config.n
        name = config.protocol.name
        if name == "adaptive":
            self.stations = [AdaptiveStation(sid, n) for sid in range(1, n + 1)]
            self.declared = 2
        else:
            k = config.protocol.variant_k or 0
            self.stations = [FullSensingStation(sid, n, k) for sid in range(1, n + 1)]
            self.declared = 3
        self.calendar: dict[int, list] = {}
        self.active = [st for st in self.stations if st.state is not IDLE]
        for st in self.stations:
            if st.state is IDLE:
                self.calendar.setdefault(st.wake_round, []).append(st)
        self._observers = []

    def actions(self, round_no: int, queues):
        for st in self.calendar.pop(round_no, ()):
            st.wake()
            self.active.append(st)
        attempts = []
        observers = []
        on_count = 0
        still_active = []
        for st in self.active:
            action = st.decide(round_no, queues[st.sid - 1])
            kind = action.kind
            if kind == "transmit":
                attempts.append((st.sid, action.bits))
                observers.append(st)
                on_count += 1
            elif kind == "listen":
                observers.append(st)
                on_count += 1
            if st.state is IDLE:
                self.calendar.setdefault(st.wake_round, []).append(st)
            else:
                still_active.append(st)
        self.active = still_active
        observers.sort(key=lambda st: st.sid)
        self._observers = observers
        if len(attempts) > 1 and isinstance(self.stations[0], AdaptiveStation):
            raise ProtocolInvariantBroken(
                f"round {round_no}: {len(attempts)} adaptive stations transmitted")
        return attempts, on_count

    def finish_round(self, round_no, obs, success_sid, queues):
        dropped = False
        for st in self._observers:
            if st.state is IDLE:
                continue  # went idle during its own decide; hears nothing
            st.observe(round_no, obs, own_ack=(st.sid == success_sid))
            if st.state is IDLE:
                self.calendar.setdefault(st.wake_round, []).append(st)
                dropped = True
        if dropped:
            self.active = [st for st in self.active if st.state is not IDLE]

    def local_lists(self) -> list[tuple[int, ...]]:
        return [tuple(st.order) for st in self.stations]


class RoundRobinSystem(ProtocolSystem):
    """One scheduled station per round; it listens when it has nothing to send."""

    declared = 1

    def __init__(self, config: SimConfig):
        self.n = config.n

    def actions(self, round_no: int, queues):
        sid = (round_no - 1) % self.n + 1
        if queues[sid - 1] > 0:
            return [(sid, None)], 1
        return [], 1

    def schedule_oracle(self):
        n = self.n
        return lambda r: ((r - 1) % n + 1,)


class InterleavedSystem(ProtocolSystem):
    """Cycles the per-level selector sets; set members are on every time."""

    def __init__(self, config: SimConfig):
        self.n = config.n
        self.state = build_interleaved_state(config.n, config.protocol.families)
        self.declared = max(len(s) for fam in self.state.families for s in fam.sets)

    def active_set(self, round_no: int) -> tuple[int, ...]:
        level, index = interleaved_schedule(round_no, self.state)
        return self.state.families[level - 1].sets[index - 1]

    def actions(self, round_no: int, queues):
        members = self.active_set(round_no)
        attempts = [(sid, None) for sid in members if queues[sid - 1] > 0]
        return attempts, len(members)

    def schedule_oracle(self):
        return self.active_set


class BackoffSystem(ProtocolSystem):
    """Backoff stations; only stations holding packets are tracked."""

    wants_feedback = True
    wants_injection_notes = True
    declared = None

    def __init__(self, config: SimConfig):
        kind = config.protocol.backoff_kind
        self.stations = [
            BackoffStation(sid, kind, derive_stream(config.seed, f"backoff.{sid}"))
            for sid in range(1, config.n + 1)
        ]
        self.pending = {sid for sid, q in enumerate(config.initial_queues, start=1) if q > 0}
        self._attempted: list[int] = []

    def note_injections(self, injections):
        self.pending.update(injections)

    def actions(self, round_no: int, queues):
        attempts = []
        for sid in sorted(self.pending):
            if self.stations[sid - 1].decide(round_no, queues[sid - 1]).kind == "transmit":
                attempts.append((sid, None))
        self._attempted = [sid for sid, _ in attempts]
        return attempts, len(attempts)

    def finish_round(self, round_no, obs, success_sid, queues):
        if success_sid is not None:
            self.stations[success_sid - 1].on_success()
            if queues[success_sid - 1] == 0:
                self.pending.discard(success_sid)
        elif len(self._attempted) > 1:
            for sid in self._attempted:
                self.stations[sid - 1].on_failure()


class StateAwareSystem(ProtocolSystem):
    """Centralized comparator: the largest queue transmits each round."""

    declared = 1

    def __init__(self, config: SimConfig):
        self.n = config.n

    def actions(self, round_no: int, queues):
        sid = state_aware_choose(queues)
        if sid is None:
            return [], 0
        return [(sid, None)], 1


def make_system(config: SimConfig) -> ProtocolSystem:
    name = config.protocol.name
    if name in ("adaptive", "fullsensing", "fullsensing_mod"):
        return TokenSystem(config)
    if name == "round_robin":
        return RoundRobinSystem(config)
    if name == "interleaved":
        return InterleavedSystem(config)
    if name == "backoff":
        return BackoffSystem(config)
    if name == "state_aware":
        return StateAwareSystem(config)
    raise ValueError(f"unknown protocol {name!r}")
