"""Domain types, configuration validation, and deterministic random streams.

Every stochastic component draws from its own labeled stream, so the adversary's
randomness stays independent of any protocol's and identical configurations
reproduce identical runs bit for bit.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass, field

_MASK64 = (1 << 64) - 1

PROTOCOL_NAMES = (
    "adaptive",
    "fullsensing",
    "fullsensing_mod",
    "round_robin",
    "interleaved",
    "backoff",
    "state_aware",
)
BACKOFF_KINDS = ("exponential", "linear", "square")

# Protocols that may run without any restrain limit.
_UNBOUNDED_OK = ("backoff", "state_aware")


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class ConfigError(ValueError):
    """A configuration document violates the schema."""

    def __init__(self, message: str, field_name: str | None = None):
        super().__init__(message)
        self.field = field_name


class RangeError(ConfigError):
    """A field value is outside its allowed range."""

    def __init__(self, field_name: str, bound: str, value):
        super().__init__(f"{field_name}={value!r} violates {bound}", field_name)
        self.bound = bound
        self.value = value


class MissingParameter(ConfigError):
    """A required field or protocol parameter is absent."""


class SimulationError(RuntimeError):
    """Base class for failures raised while a simulation is running."""


class ProtocolInvariantBroken(SimulationError):
    """A protocol state machine reached a state it must never reach."""


class RestrainViolation(SimulationError):
    """More stations were switched on in one round than the channel allows."""

    def __init__(self, round_no: int, count: int, limit: int):
        super().__init__(f"round {round_no}: {count} stations on, limit {limit}")
        self.round = round_no
        self.count = count
        self.limit = limit


# ---------------------------------------------------------------------------
# Per-round actions and channel feedback
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdaptiveBits:
    """Control bits a transmitter may attach to a packet."""

    big: bool = False
    last_big: bool = False

    def __post_init__(self):
        if self.big and self.last_big:
            raise ValueError("big and last_big are mutually exclusive")


BITS_BIG = AdaptiveBits(big=True)
BITS_LAST_BIG = AdaptiveBits(last_big=True)


@dataclass(frozen=True)
class StationAction:
    """What one station does in one round: transmit, listen, or stay off."""

    kind: str  # "transmit" | "listen" | "off"
    bits: AdaptiveBits | None = None


OFF = StationAction("off")
LISTEN = StationAction("listen")
TRANSMIT = StationAction("transmit")
TRANSMIT_BIG = StationAction("transmit", BITS_BIG)
TRANSMIT_LAST_BIG = StationAction("transmit", BITS_LAST_BIG)


@dataclass(frozen=True)
class ChannelObservation:
    """Resolved channel state for one round."""

    kind: str  # "silence" | "single" | "collision"
    sender: int | None = None
    bits: AdaptiveBits | None = None


SILENCE = ChannelObservation("silence")
COLLISION = ChannelObservation("collision")


def single(sender: int, bits: AdaptiveBits | None = None) -> ChannelObservation:
    return ChannelObservation("single", sender, bits)


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

class RandomStream(random.Random):
    """Mersenne-Twister stream seeded from SHA-256 of (seed, label).

    Same (seed, label) always yields the same sequence; distinct labels give
    independent streams even under the same seed.
    """

    def __new__(cls, seed: int = 0, label: str = ""):
        # random.Random forwards constructor args to the C-level __new__,
        # which only accepts a seed; bypass it and seed in __init__.
        return super().__new__(cls)

    def __init__(self, seed: int, label: str):
        material = hashlib.sha256(f"{seed & _MASK64:016x}|{label}".encode()).digest()
        super().__init__(int.from_bytes(material, "big"))
        self.seed_value = seed
        self.label = label


def derive_stream(seed: int, label: str) -> RandomStream:
    """Derive the reproducible stream identified by (seed, label)."""
    return RandomStream(seed, label)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DistributionSpec:
    """Where injected packets go: focused/flat draws, a single target, or a plan."""

    kind: str  # "focused" | "flat" | "single" | "plan"
    target: int | None = None
    plan: tuple[tuple[int, int, int], ...] | None = None  # (round, station, count)


@dataclass(frozen=True)
class ProtocolSpec:
    """Parsed protocol identifier plus its parameters."""

    name: str
    backoff_kind: str | None = None
    variant_k: int | None = None
    selector_path: str | None = None
    families: tuple = ()

    def canonical(self) -> str:
        if self.name == "backoff":
            return f"backoff({self.backoff_kind})"
        if self.name == "fullsensing_mod":
            return f"fullsensing_mod({self.variant_k})"
        if self.name == "interleaved":
            return f"interleaved({self.selector_path})"
        return self.name


@dataclass(frozen=True)
class SimConfig:
    """Validated description of one simulation run."""

    n: int
    protocol: ProtocolSpec
    rho: float
    rounds: int
    seed: int
    burst_p: float = 0.5
    stock_b: int = 256
    restrain_limit: int | None = None  # None means unbounded
    distribution: DistributionSpec = field(default_factory=lambda: DistributionSpec("focused"))
    initial_queues: tuple[int, ...] = ()


_CONFIG_KEYS = {
    "n", "protocol", "rho", "rounds", "seed", "burst_p", "stock_b",
    "restrain_limit", "distribution", "initial_queues",
}
# Short spellings that mirror the CSV column names.
_KEY_ALIASES = {"p": "burst_p", "b": "stock_b"}

_PROTOCOL_RE = re.compile(r"^([a-z_]+)(?:\((.*)\))?$")
_DIST_SINGLE_RE = re.compile(r"^single\((\d+)\)$")


def _require_int(value, name: str, low: int, high: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise RangeError(name, "integer required", value)
    bound = f">= {low}" if high is None else f"in [{low}, {high}]"
    if value < low or (high is not None and value > high):
        raise RangeError(name, bound, value)
    return value


def _require_prob(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RangeError(name, "number required", value)
    if not 0 < value <= 1:
        raise RangeError(name, "in (0, 1]", value)
    return float(value)


def declared_restrain(protocol: ProtocolSpec) -> int | None:
    """Channel restrain each protocol promises; None means unbounded."""
    if protocol.name == "adaptive":
        return 2
    if protocol.name in ("fullsensing", "fullsensing_mod"):
        return 3
    if protocol.name in ("round_robin", "state_aware"):
        return 1
    if protocol.name == "interleaved":
        sizes = [len(s) for fam in protocol.families for s in fam.sets]
        return max(sizes, default=1)
    return None  # backoff


def _parse_protocol(value, n: int) -> ProtocolSpec:
    if not isinstance(value, str):
        raise ConfigError(f"protocol must be a string, got {value!r}", "protocol")
    match = _PROTOCOL_RE.match(value.strip())
    if not match:
        raise ConfigError(f"cannot parse protocol {value!r}", "protocol")
    name, arg = match.group(1), match.group(2)
    if name not in PROTOCOL_NAMES:
        raise ConfigError(f"unknown protocol {name!r}", "protocol")

    if name == "backoff":
        if not arg:
            raise MissingParameter("backoff requires a kind: backoff(exponential|linear|square)",
                                   "protocol")
        if arg not in BACKOFF_KINDS:
            raise RangeError("protocol", f"backoff kind in {BACKOFF_KINDS}", arg)
        return ProtocolSpec(name, backoff_kind=arg)

    if name == "fullsensing_mod":
        if not arg:
            raise MissingParameter("fullsensing_mod requires an integer k: fullsensing_mod(2)",
                                   "protocol")
        try:
            k = int(arg)
        except ValueError:
            raise RangeError("protocol", "fullsensing_mod(k) with integer k >= 1", arg) from None
        if k < 1:
            raise RangeError("protocol", "fullsensing_mod(k) with k >= 1", k)
        return ProtocolSpec(name, variant_k=k)

    if name == "interleaved":
        if not arg:
            raise MissingParameter("interleaved requires a selector family file: interleaved(path)",
                                   "protocol")
        from . import selectors  # deferred: keeps core importable on its own

        try:
            families = selectors.load_family_file(arg)
        except OSError as exc:
            raise MissingParameter(f"cannot read selector family file {arg!r}: {exc}",
                                   "protocol") from exc
        for fam in families:
            if fam.n != n:
                raise ConfigError(
                    f"selector family has n={fam.n}, run has n={n}", "protocol")
        return ProtocolSpec(name, selector_path=arg, families=families)

    if arg:
        raise ConfigError(f"protocol {name!r} takes no parameter", "protocol")
    return ProtocolSpec(name)


def _parse_distribution(value, n: int) -> DistributionSpec:
    if isinstance(value, str):
        text = value.strip()
        if text in ("focused", "flat"):
            return DistributionSpec(text)
        match = _DIST_SINGLE_RE.match(text)
        if match:
            target = int(match.group(1))
            if not 1 <= target <= n:
                raise RangeError("distribution", f"single(i) with 1 <= i <= {n}", target)
            return DistributionSpec("single", target=target)
        raise ConfigError(f"unknown distribution {value!r}", "distribution")
    if isinstance(value, dict) and set(value) == {"plan"}:
        entries = []
        for item in value["plan"]:
            try:
                rnd, sid, cnt = int(item["round"]), int(item["station"]), int(item["count"])
            except (KeyError, TypeError, ValueError):
                raise ConfigError("plan entries need integer round/station/count",
                                  "distribution") from None
            if rnd < 1:
                raise RangeError("distribution.plan.round", ">= 1", rnd)
            if not 1 <= sid <= n:
                raise RangeError("distribution.plan.station", f"in [1, {n}]", sid)
            if cnt < 0:
                raise RangeError("distribution.plan.count", ">= 0", cnt)
            entries.append((rnd, sid, cnt))
        entries.sort()
        return DistributionSpec("plan", plan=tuple(entries))
    raise ConfigError(f"cannot parse distribution {value!r}", "distribution")


def validate_config(raw) -> SimConfig:
    """Normalize and validate a configuration document.

    Accepts a dict (parsed JSON) or an already validated SimConfig, which is
    returned unchanged. Raises a ConfigError naming the first violated
    constraint otherwise.
    """
    if isinstance(raw, SimConfig):
        return raw
    if not isinstance(raw, dict):
        raise ConfigError(f"config must be a JSON object, got {type(raw).__name__}")

    doc = {}
    for key, value in raw.items():
        canon = _KEY_ALIASES.get(key, key)
        if canon not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}", key)
        if canon in doc:
            raise ConfigError(f"duplicate config key {key!r}", key)
        doc[canon] = value

    for key in ("n", "protocol", "rho", "rounds", "seed"):
        if key not in doc:
            raise MissingParameter(f"config key {key!r} is required", key)

    n = _require_int(doc["n"], "n", 2)
    rho = _require_prob(doc["rho"], "rho")
    rounds = _require_int(doc["rounds"], "rounds", 0)
    seed = _require_int(doc["seed"], "seed", 0, _MASK64)
    burst_p = _require_prob(doc.get("burst_p", 0.5), "burst_p")
    stock_b = _require_int(doc.get("stock_b", 256), "stock_b", 1)
    protocol = _parse_protocol(doc["protocol"], n)
    distribution = _parse_distribution(doc.get("distribution", "focused"), n)

    limit = doc.get("restrain_limit", None)
    if limit is None:
        restrain = declared_restrain(protocol)
    elif limit == "unbounded":
        if protocol.name not in _UNBOUNDED_OK:
            raise RangeError("restrain_limit",
                             f"'unbounded' only for {_UNBOUNDED_OK}", limit)
        restrain = None
    else:
        restrain = _require_int(limit, "restrain_limit", 1)

    initial = doc.get("initial_queues", None)
    if initial is None:
        queues = (0,) * n
    else:
        if not isinstance(initial, (list, tuple)) or len(initial) != n:
            raise ConfigError(f"initial_queues must list {n} integers", "initial_queues")
        queues = tuple(_require_int(v, "initial_queues", 0) for v in initial)

    return SimConfig(
        n=n, protocol=protocol, rho=rho, rounds=rounds, seed=seed,
        burst_p=burst_p, stock_b=stock_b, restrain_limit=restrain,
        distribution=distribution, initial_queues=queues,
    )
