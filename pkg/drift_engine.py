"""
Seeded drift injection.

Four drift kinds act on ground truth and on the observation channels:

    Observable  - I or C turns INVALID; the attested channel sees it (coverage permitting)
    Delayed     - R turns INVALID; channels see it only after the propagation lag
    Hidden      - E turns INVALID; no provable channel ever carries it
    Ambiguous   - B becomes UNDEFINED; channels carry UNDEFINED at best

Every step draws exactly three uniforms from the stream (drift?, kind/target,
channel inclusion) so traces line up across coverage levels.
"""
import bisect
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import accumulate
from types import MappingProxyType
from typing import Mapping, Optional

import numpy as np

from state_model import MASKED, RealState, Stale, Status, project

logger = logging.getLogger(__name__)


class DriftKind(str, Enum):
    OBSERVABLE = "observable"
    DELAYED = "delayed"
    HIDDEN = "hidden"
    AMBIGUOUS = "ambiguous"
    NONE = "none"


KIND_ORDER = (DriftKind.OBSERVABLE, DriftKind.DELAYED, DriftKind.HIDDEN, DriftKind.AMBIGUOUS)
DEFAULT_MIX = (0.30, 0.25, 0.25, 0.20)
DEFAULT_TARGETS = (
    (DriftKind.OBSERVABLE, ("I", "C")),
    (DriftKind.DELAYED, ("R",)),
    (DriftKind.HIDDEN, ("E",)),
    (DriftKind.AMBIGUOUS, ("B",)),
)
UNIFORMS_PER_STEP = 3


@dataclass(frozen=True)
class DriftEvent:
    kind: DriftKind
    target: Optional[str]
    step: int
    in_channel: bool = False


@dataclass(frozen=True)
class DriftConfig:
    """
    Drift parameters.

    Args:
        p_drift: Probability that a step carries any drift
        mix: Probabilities of (observable, delayed, hidden, ambiguous)
        seed: 64-bit seed of the stream
        coverage: Probability an observable/delayed/ambiguous event reaches the attested channel
        targets: (kind, components) pairs; observable events pick uniformly among their components
    """
    p_drift: float = 0.5
    mix: tuple = DEFAULT_MIX
    seed: int = 42
    coverage: float = 1.0
    targets: tuple = DEFAULT_TARGETS

    def __post_init__(self):
        mix = tuple(float(m) for m in self.mix)
        if len(mix) != len(KIND_ORDER):
            raise ValueError(f"mix needs {len(KIND_ORDER)} probabilities, got {len(mix)}")
        if any(m < 0 for m in mix) or abs(math.fsum(mix) - 1.0) > 1e-12:
            raise ValueError(f"mix must be non-negative and sum to 1, got {mix}")
        if not 0.0 <= self.p_drift <= 1.0:
            raise ValueError(f"p_drift must lie in [0, 1], got {self.p_drift}")
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError(f"coverage must lie in [0, 1], got {self.coverage}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        targets = tuple((DriftKind(k), tuple(str(c) for c in comps)) for k, comps in self.targets)
        kinds = [k for k, _ in targets]
        if sorted(kinds) != sorted(KIND_ORDER) or any(not comps for _, comps in targets):
            raise ValueError("targets must name at least one component for each drift kind")
        named = [c for _, comps in targets for c in comps]
        if len(set(named)) != len(named):
            raise ValueError(f"A component may be the target of only one drift kind: {named}")
        object.__setattr__(self, 'mix', mix)
        object.__setattr__(self, 'seed', int(self.seed))
        object.__setattr__(self, 'targets', targets)

    def targets_for(self, kind: DriftKind) -> tuple:
        for k, comps in self.targets:
            if k == kind:
                return comps
        return ()

    @property
    def cumulative(self) -> tuple:
        return tuple(accumulate(self.mix))

    def with_coverage(self, coverage: float) -> 'DriftConfig':
        return replace(self, coverage=coverage)

    def make_rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def _event_from_uniforms(config: DriftConfig, cumulative: tuple, u, step: int) -> DriftEvent:
    u_drift, u_kind, u_channel = u
    if u_drift >= config.p_drift:
        return DriftEvent(DriftKind.NONE, None, step)

    k = bisect.bisect_right(cumulative, u_kind)
    if k >= len(KIND_ORDER):
        # float slack at the top of the cumulative mix
        k = max(i for i, m in enumerate(config.mix) if m > 0)
    kind = KIND_ORDER[k]

    # Position inside the kind's interval picks the target
    lower = cumulative[k] - config.mix[k]
    comps = config.targets_for(kind)
    idx = min(int((u_kind - lower) / config.mix[k] * len(comps)), len(comps) - 1)

    in_channel = kind != DriftKind.HIDDEN and u_channel < config.coverage
    return DriftEvent(kind, comps[idx], step, in_channel)


def sample_step(config: DriftConfig, rng: np.random.Generator, step: int = 0):
    """
    Draw one step's event.

    Returns:
        tuple: (DriftEvent, rng advanced by three uniforms)
    """
    u = rng.random(UNIFORMS_PER_STEP)
    return _event_from_uniforms(config, config.cumulative, u, step), rng


def sample_trace(config: DriftConfig, rng: np.random.Generator, n: int, start_step: int = 0) -> list:
    """n consecutive events, drawn in one block from the same stream layout as sample_step."""
    block = rng.random((n, UNIFORMS_PER_STEP))
    cumulative = config.cumulative
    return [_event_from_uniforms(config, cumulative, row, start_step + i)
            for i, row in enumerate(block.tolist())]


@dataclass(frozen=True)
class ChannelState:
    """
    Accumulated channel effects of the events of one episode.

    shown maps a component to (status the attested channel reports, first step it reports it).
    """
    admission: Mapping
    visible: frozenset
    lag: int = 2
    shown: Mapping = field(default_factory=lambda: MappingProxyType({}))
    masked: frozenset = frozenset()
    blurred: frozenset = frozenset()
    restore_at: Mapping = field(default_factory=lambda: MappingProxyType({}))

    @classmethod
    def open(cls, admission: RealState, visible, lag: int = 2) -> 'ChannelState':
        return cls(admission=admission.components,
                   visible=admission.universe.check(visible), lag=lag)


def apply_drift(event: DriftEvent, real: RealState, channels: ChannelState,
                recovery_steps: Optional[int] = None):
    """
    Apply one event to ground truth and to the channels.

    Args:
        event: The step's event (kind NONE still advances the step)
        real: Ground truth before the step
        channels: Channel effects accumulated so far
        recovery_steps: If set, observable drift reverts in ground truth after this many steps;
                        the attested channel keeps reporting the stale INVALID

    Returns:
        tuple: (new RealState, new ChannelState)
    """
    step = event.step
    if step < real.at:
        raise ValueError(f"Event step {step} precedes the real state step {real.at}")

    updates = {}
    shown = channels.shown
    restore_at = channels.restore_at
    masked = channels.masked
    blurred = channels.blurred

    # 1. Recoveries that fall due now
    due = [c for c, at in restore_at.items() if at <= step]
    if due:
        restore_at = {c: at for c, at in restore_at.items() if c not in due}
        updates.update({c: Status.VALID for c in due})

    # 2. The event itself
    kind, target = event.kind, event.target
    if kind == DriftKind.OBSERVABLE:
        updates[target] = Status.INVALID
        if event.in_channel:
            shown = {**shown, target: (Status.INVALID, step)}
        if recovery_steps:
            restore_at = {**restore_at, target: step + recovery_steps}
    elif kind == DriftKind.DELAYED:
        updates[target] = Status.INVALID
        if event.in_channel:
            arrives = step + channels.lag
            earlier = shown.get(target)
            if earlier is None or earlier[1] > arrives:
                shown = {**shown, target: (Status.INVALID, arrives)}
    elif kind == DriftKind.HIDDEN:
        updates[target] = Status.INVALID
        masked = masked | {target}
    elif kind == DriftKind.AMBIGUOUS:
        updates[target] = Status.UNDEFINED
        blurred = blurred | {target}
        if event.in_channel:
            shown = {**shown, target: (Status.UNDEFINED, step)}

    if shown is not channels.shown or restore_at is not channels.restore_at \
            or masked is not channels.masked or blurred is not channels.blurred:
        channels = replace(channels, shown=MappingProxyType(dict(shown)), masked=masked,
                           blurred=blurred, restore_at=MappingProxyType(dict(restore_at)))
    return real.evolve(step, updates), channels


def provable_view(real: RealState, channels: ChannelState):
    """The attested channel at real.at: admission status unless a drift effect has arrived."""
    step = real.at
    distortions = {}
    for cid in channels.visible:
        if cid in channels.masked:
            distortions[cid] = MASKED
            continue
        entry = channels.shown.get(cid)
        reported = entry[0] if entry is not None and entry[1] <= step else channels.admission[cid]
        if reported != real.components[cid]:
            distortions[cid] = Stale(reported)
    return project(real, channels.visible, distortions)


def oracle_view(lagged_real: RealState, extra_visible, channels: ChannelState):
    """Oracle channel: ground truth as of `lagged_real`, minus anything hidden."""
    return project(lagged_real, frozenset(extra_visible) - channels.masked)


def ram_observe(real: RealState, channels: ChannelState) -> dict:
    """
    Fresh observation used by the gate.

    Observable and delayed components are re-read at their current value;
    hidden-drifted and ambiguous components are UNDEFINED.
    """
    unresolved = channels.masked | channels.blurred
    return {cid: (Status.UNDEFINED if cid in unresolved else status)
            for cid, status in real.components.items()}


def ground_truth_authority(real: RealState) -> bool:
    """A_r: true iff every component is VALID; UNDEFINED counts against execution."""
    return all(status == Status.VALID for status in real.components.values())


def check_oracle_channel(extra_visible, config: DriftConfig):
    """
    Oracle channels may not cover hidden components, and carry nothing over
    observable ones (those are read directly by the attested channel).
    """
    extra_visible = frozenset(extra_visible)
    hidden = extra_visible & set(config.targets_for(DriftKind.HIDDEN))
    if hidden:
        raise ValueError(f"Oracle channel cannot cover hidden components: {sorted(hidden)}")
    direct = extra_visible & set(config.targets_for(DriftKind.OBSERVABLE))
    if direct:
        raise ValueError(f"Oracle channel overlaps observable components: {sorted(direct)}")
    return extra_visible
