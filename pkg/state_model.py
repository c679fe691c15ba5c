"""
State ontology for the authority gate.

Real state, provable projection, state gap, declared assumptions and the
coverage envelope that authority is constructed over.
"""
import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Union

logger = logging.getLogger(__name__)


class UniverseError(KeyError):
    """A component id is not registered in the universe."""


class AssumptionConflict(ValueError):
    """A declared assumption contradicts a proven entry."""


class Status(str, Enum):
    VALID = "valid"
    INVALID = "invalid"
    UNDEFINED = "undefined"
    UNOBSERVABLE = "unobservable"


DEFINITE = frozenset({Status.VALID, Status.INVALID})
# Ground truth and channel entries never carry UNOBSERVABLE; absence is how a
# channel loses a component.
ENTRY_STATUSES = (Status.VALID, Status.INVALID, Status.UNDEFINED)

ComponentId = str


@dataclass(frozen=True)
class Universe:
    """Ordered set of registered component names."""
    components: tuple
    members: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(str(c) for c in self.components)
        if len(set(names)) != len(names):
            raise ValueError(f"Duplicate component ids in universe: {names}")
        if not names:
            raise ValueError("Universe must register at least one component")
        object.__setattr__(self, 'components', names)
        object.__setattr__(self, 'members', frozenset(names))

    def __contains__(self, name):
        return name in self.members

    def __iter__(self):
        return iter(self.components)

    def __len__(self):
        return len(self.components)

    def check(self, ids: Iterable[ComponentId]) -> frozenset:
        """Return ids as a frozenset, raising UniverseError on any unknown name."""
        ids = frozenset(ids)
        if ids <= self.members:
            return ids
        unknown = ids - self.members
        if unknown:
            raise UniverseError(f"Unregistered component(s): {sorted(unknown)}")
        return ids

    def ordered(self, ids: Iterable[ComponentId]) -> tuple:
        """Universe order restricted to ids."""
        ids = set(ids)
        return tuple(c for c in self.components if c in ids)


# I = identity consistency, B = behavioural patterns, R = regulatory
# compliance, C = transactional context, E = emergent factors
DEFAULT_UNIVERSE = Universe(("I", "B", "R", "C", "E"))


@dataclass(frozen=True)
class ComponentObservation:
    id: ComponentId
    status: Status


def _freeze(entries: Mapping) -> Mapping:
    return MappingProxyType({
        k if type(k) is str else str(k): v if type(v) is Status else Status(v)
        for k, v in entries.items()
    })


@dataclass(frozen=True)
class RealState:
    """
    Ground truth at one step. Total over the universe; never UNOBSERVABLE.
    """
    at: int
    components: Mapping
    universe: Universe = DEFAULT_UNIVERSE

    def __post_init__(self):
        comps = _freeze(self.components)
        self.universe.check(comps)
        missing = self.universe.members.difference(comps)
        if missing:
            raise UniverseError(f"Real state must be total; missing {sorted(missing)}")
        if Status.UNOBSERVABLE in comps.values():
            raise ValueError("Real state cannot hold UNOBSERVABLE components")
        object.__setattr__(self, 'components', comps)

    @classmethod
    def all_valid(cls, universe: Universe = DEFAULT_UNIVERSE, at: int = 0) -> 'RealState':
        return cls(at=at, components={c: Status.VALID for c in universe}, universe=universe)

    def with_status(self, at: int, **updates) -> 'RealState':
        return self.evolve(at, updates)

    def evolve(self, at: int, updates: Mapping) -> 'RealState':
        comps = dict(self.components)
        comps.update(updates)
        return RealState(at=at, components=comps, universe=self.universe)


@lru_cache(maxsize=4096)
def _checksum(items: tuple) -> str:
    payload = ";".join(f"{k}={v}" for k, v in items)
    return hashlib.blake2b(payload.encode("utf-8"), digest_size=16).hexdigest()


def _tag_of_frozen(entries: Mapping) -> str:
    return _checksum(tuple(sorted((k, v.value) for k, v in entries.items())))


def integrity_tag(entries: Mapping) -> str:
    """Deterministic checksum over a set of channel entries."""
    return _tag_of_frozen(_freeze(entries))


@dataclass(frozen=True)
class ProvableState:
    """
    What an attestable channel carries at one step.

    Build with `capture` so the integrity tag covers the entries. A state whose
    entries were replaced after capture fails `verify`. The tag over the
    frozen entries is computed once, at construction.
    """
    at: int
    entries: Mapping
    integrity_tag: Optional[str]
    universe: Universe = DEFAULT_UNIVERSE
    intact: bool = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = _freeze(self.entries)
        self.universe.check(entries)
        if Status.UNOBSERVABLE in entries.values():
            raise ValueError("Channel entries cannot be UNOBSERVABLE; omit the component instead")
        object.__setattr__(self, 'entries', entries)
        computed = _tag_of_frozen(entries)
        if self.integrity_tag is None:
            object.__setattr__(self, 'integrity_tag', computed)
        object.__setattr__(self, 'intact', computed == self.integrity_tag)

    @classmethod
    def capture(cls, at: int, entries: Mapping, universe: Universe = DEFAULT_UNIVERSE) -> 'ProvableState':
        """Freeze entries and seal them with their own tag."""
        return cls(at=at, entries=entries, integrity_tag=None, universe=universe)

    def verify(self) -> bool:
        return self.intact

    def status(self, component: ComponentId) -> Status:
        return self.entries.get(component, Status.UNOBSERVABLE)

    def domain(self) -> frozenset:
        return frozenset(self.entries)


@dataclass(frozen=True)
class Stale:
    """Channel still reports an earlier status."""
    previous: Status


@dataclass(frozen=True)
class Masked:
    """Channel carries an entry it cannot classify."""


MASKED = Masked()

Distortion = Union[Stale, Masked]


@dataclass(frozen=True)
class CoverageEnvelope:
    """
    Proven state, declared assumptions H and the acknowledged residual.

    The residual is derived from `proven` on every access.
    """
    proven: ProvableState
    assumptions: frozenset = field(default_factory=frozenset)

    @property
    def universe(self) -> Universe:
        return self.proven.universe

    @property
    def residual(self) -> frozenset:
        return frozenset(self.universe) - self.proven.domain()

    def assumed(self, component: ComponentId) -> Optional[Status]:
        for cid, status in self.assumptions:
            if cid == component:
                return status
        return None

    def describe(self) -> dict:
        """Summary carried by audit records."""
        return {
            'proven': {c: self.proven.entries[c].value
                       for c in self.universe.ordered(self.proven.domain())},
            'residual': list(self.universe.ordered(self.residual)),
            'assumptions': sorted(cid for cid, _ in self.assumptions),
        }


def project(real: RealState, visible: Iterable[ComponentId],
            distortions: Optional[Mapping] = None) -> ProvableState:
    """
    Restrict ground truth to the components a channel can see.

    Args:
        real: Ground truth at this step
        visible: Components the channel carries
        distortions: component -> Stale(previous) or MASKED

    Returns:
        ProvableState: entries over exactly the visible components, tag over the final entries
    """
    universe = real.universe
    visible = universe.check(visible)
    distortions = distortions or {}
    keys = universe.check(distortions)
    if not keys <= visible:
        raise UniverseError(f"Distortions outside the visible set: {sorted(keys - visible)}")

    entries = {}
    for cid in universe.ordered(visible):
        d = distortions.get(cid)
        if d is None:
            entries[cid] = real.components[cid]
        elif isinstance(d, Masked):
            entries[cid] = Status.UNDEFINED
        else:
            entries[cid] = Status(d.previous)
    return ProvableState.capture(real.at, entries, universe)


def normalize_assumptions(assumptions) -> frozenset:
    if isinstance(assumptions, Mapping):
        assumptions = assumptions.items()
    return frozenset((str(cid), Status(status)) for cid, status in (assumptions or ()))


def build_envelope(proven: ProvableState, assumptions=()) -> CoverageEnvelope:
    """
    Assemble the coverage envelope, rejecting assumptions that contradict
    a definite proven entry.
    """
    assumptions = normalize_assumptions(assumptions)
    proven.universe.check(cid for cid, _ in assumptions)
    for cid, status in assumptions:
        held = proven.entries.get(cid)
        if held in DEFINITE and held != status:
            raise AssumptionConflict(f"Assumption {cid}={status.value} contradicts proven {held.value}")
    return CoverageEnvelope(proven=proven, assumptions=assumptions)


def gap(real: RealState, proven: ProvableState) -> frozenset:
    """Components absent from the provable state or reported with a diverging status."""
    return frozenset(
        cid for cid, status in real.components.items()
        if proven.entries.get(cid) != status
    )


def observations(proven: ProvableState) -> list:
    """One observation per universe component; UNOBSERVABLE where the channel has no entry."""
    return [ComponentObservation(cid, proven.status(cid)) for cid in proven.universe]
