"""
Reconstruction gate.

Authority is constructed fresh from a coverage envelope for each request and
routed to one of four outcomes: full execution, narrowed execution, definitive
refusal, or halt on insufficient information. Nothing here keeps state between
calls.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Iterable, Mapping, Optional

from state_model import (
    ProvableState, Status, UniverseError, build_envelope,
)

logger = logging.getLogger(__name__)


class AttestationFailure(RuntimeError):
    """Observed state failed its integrity check; F was not evaluated."""


class Verdict(str, Enum):
    EXECUTE = "execute"
    NARROW = "narrow"
    REFUSE_DEFINITIVE = "refuse_definitive"
    HALT_INSUFFICIENT = "halt_insufficient"


# Reason codes written to the audit log
REASON_ESTABLISHED = "authority_established"
REASON_NARROWED = "authority_narrowed"
REASON_NOT_CONSTRUCTIBLE = "authority_not_constructible"
REASON_ATTESTATION_FAILURE = "attestation_failure"
REASON_NO_MISMATCH = "no_mismatch"
REASON_MISMATCH = "mismatch_detected"
REASON_CODES = frozenset({
    REASON_ESTABLISHED, REASON_NARROWED, REASON_NOT_CONSTRUCTIBLE,
    REASON_ATTESTATION_FAILURE, REASON_NO_MISMATCH, REASON_MISMATCH,
})


@dataclass(frozen=True)
class Privilege:
    name: str
    requires: frozenset

    def __post_init__(self):
        requires = frozenset(str(c) for c in self.requires)
        if not requires:
            raise ValueError(f"Privilege '{self.name}' must require at least one component")
        object.__setattr__(self, 'requires', requires)

    @cached_property
    def ordered(self) -> tuple:
        return tuple(sorted(self.requires))


@dataclass(frozen=True)
class ActionClass:
    """Non-empty set of privileges; narrowing is the strict-subset relation."""
    privileges: frozenset

    def __post_init__(self):
        privileges = frozenset(self.privileges)
        if not privileges:
            raise ValueError("Action class must hold at least one privilege")
        names = [p.name for p in privileges]
        if len(set(names)) != len(names):
            raise ValueError(f"Duplicate privilege names: {sorted(names)}")
        object.__setattr__(self, 'privileges', privileges)

    @classmethod
    def of(cls, requirements: Mapping) -> 'ActionClass':
        """Build from a {privilege name: required components} mapping."""
        return cls(frozenset(Privilege(name, frozenset(req)) for name, req in requirements.items()))

    @cached_property
    def names(self) -> tuple:
        return tuple(sorted(p.name for p in self.privileges))

    @cached_property
    def components(self) -> frozenset:
        return frozenset().union(*(p.requires for p in self.privileges))

    def is_narrowing_of(self, other: 'ActionClass') -> bool:
        return self.privileges < other.privileges

    def restrict(self, names: Iterable[str]) -> 'ActionClass':
        names = set(names)
        return ActionClass(frozenset(p for p in self.privileges if p.name in names))


@dataclass(frozen=True)
class PrivilegeReason:
    """Why one privilege was granted, refused or left undetermined."""
    decision: str
    components: tuple = ()


GRANTED = "granted"
REFUSED = "refused"
UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class GateOutcome:
    verdict: Verdict
    granted: Optional[ActionClass]
    reasons: Mapping
    lifted_by_assumptions: frozenset = field(default_factory=frozenset)

    @property
    def executes(self) -> bool:
        return self.verdict in (Verdict.EXECUTE, Verdict.NARROW)

    @property
    def reason_code(self) -> str:
        if self.verdict == Verdict.EXECUTE:
            return REASON_ESTABLISHED
        if self.verdict == Verdict.NARROW:
            return REASON_NARROWED
        return REASON_NOT_CONSTRUCTIBLE


# --- Constructor over the four named components -----------------------------

IDENTITY = "identity_consistency"
BEHAVIOR = "behavior_stability"
REGULATORY = "regulatory_compliance"
CONTEXT = "context_integrity"
CONSTRUCTOR_REQUIRED = (IDENTITY, BEHAVIOR, REGULATORY, CONTEXT)

# The four named components alias onto the simulation universe
CONSTRUCTOR_ALIASES = {IDENTITY: "I", BEHAVIOR: "B", REGULATORY: "R", CONTEXT: "C"}


class _Undefined(Enum):
    UNDEFINED = "undefined"

    def __repr__(self):
        return "UNDEFINED"


UNDEFINED = _Undefined.UNDEFINED


def explain_authority(state: Mapping):
    """
    Four-component constructor with the reason of the first clause that fired.

    Args:
        state: partial map of the four named components to a Status (None counts as missing)

    Returns:
        tuple: (True | False | UNDEFINED, reason code)
    """
    # 1. Observability of every required component
    for component in CONSTRUCTOR_REQUIRED:
        value = state.get(component)
        if value is None or Status(value) == Status.UNOBSERVABLE:
            return UNDEFINED, f"missing:{component}"

    status = {c: Status(state[c]) for c in CONSTRUCTOR_REQUIRED}

    # 2. Constructive conditions, in listed order
    if status[IDENTITY] != Status.VALID:
        if status[IDENTITY] == Status.INVALID:
            return False, f"refused:{IDENTITY}"
        return UNDEFINED, f"undetermined:{IDENTITY}"

    if status[BEHAVIOR] != Status.VALID:
        return UNDEFINED, f"undetermined:{BEHAVIOR}"

    if status[REGULATORY] != Status.VALID:
        if status[REGULATORY] == Status.INVALID:
            return False, f"refused:{REGULATORY}"
        return UNDEFINED, f"undetermined:{REGULATORY}"

    if status[CONTEXT] != Status.VALID:
        return UNDEFINED, f"undetermined:{CONTEXT}"

    return True, REASON_ESTABLISHED


def construct_authority(state: Mapping):
    return explain_authority(state)[0]


# --- General gate -------------------------------------------------------------

def _classify(envelope, privilege):
    proven = envelope.proven.entries
    refused_by = []
    undetermined_by = []
    for cid in privilege.ordered:
        status = proven.get(cid)
        if status == Status.INVALID:
            refused_by.append(cid)
        elif status != Status.VALID:
            undetermined_by.append(cid)
    if refused_by:
        return PrivilegeReason(REFUSED, tuple(refused_by))
    if undetermined_by:
        return PrivilegeReason(UNDETERMINED, tuple(undetermined_by))
    return PrivilegeReason(GRANTED)


def evaluate_gate(envelope, requested: ActionClass) -> GateOutcome:
    """
    Construct authority for `requested` over `envelope`.

    Each privilege is decided on its own: granted when every required component
    is proven VALID, refused when any is proven INVALID, undetermined otherwise.
    """
    try:
        envelope.universe.check(requested.components)
    except UniverseError:
        logger.error("Requested class %s names unregistered components", requested.names)
        raise

    reasons = {p.name: _classify(envelope, p) for p in requested.privileges}
    granted = [p for p in requested.privileges if reasons[p.name].decision == GRANTED]

    # Audit only: H never upgrades a residual component
    lifted = frozenset(
        p.name for p in requested.privileges
        if reasons[p.name].decision == UNDETERMINED
        and all(envelope.assumed(c) == Status.VALID for c in reasons[p.name].components)
    )

    if len(granted) == len(requested.privileges):
        return GateOutcome(Verdict.EXECUTE, requested, reasons, lifted)
    if granted:
        return GateOutcome(Verdict.NARROW, ActionClass(frozenset(granted)), reasons, lifted)
    if all(r.decision == REFUSED for r in reasons.values()):
        return GateOutcome(Verdict.REFUSE_DEFINITIVE, None, reasons, lifted)
    return GateOutcome(Verdict.HALT_INSUFFICIENT, None, reasons, lifted)


def gate_step(observe: Callable[[], ProvableState], attest: Callable[[ProvableState], bool],
              requested: ActionClass, assumptions=()) -> GateOutcome:
    """
    One fresh pass of the gate: observe, attest, construct.

    Raises:
        AttestationFailure: when `attest` rejects the observed state
    """
    proven = observe()
    if not attest(proven):
        logger.warning("Attestation failed at step %s; halting before authority construction", proven.at)
        raise AttestationFailure(f"integrity check failed at step {proven.at}")
    return evaluate_gate(build_envelope(proven, assumptions), requested)


@dataclass(frozen=True)
class LoopStep:
    at: int
    outcome: Optional[GateOutcome]
    reason: str
    justification: Optional[dict] = None


def run_execution_loop(observe, attest, requested: ActionClass, execute: Callable,
                       max_steps: int, assumptions=(), justify: bool = False) -> list:
    """
    Observe, attest, construct and route until a halt or `max_steps`.

    `execute` is called with the granted ActionClass on Execute or Narrow.
    No grant from an earlier iteration is consulted.

    Returns:
        list: LoopStep per iteration; the last one is the halt if any
    """
    trace = []
    for _ in range(max_steps):
        try:
            proven = observe()
            if not attest(proven):
                raise AttestationFailure(f"integrity check failed at step {proven.at}")
            envelope = build_envelope(proven, assumptions)
            outcome = evaluate_gate(envelope, requested)
        except AttestationFailure:
            trace.append(LoopStep(at=len(trace), outcome=None, reason=REASON_ATTESTATION_FAILURE))
            break

        justification = None
        if justify:
            justification = {
                'envelope': envelope.describe(),
                'reasons': {n: {'decision': r.decision, 'components': list(r.components)}
                            for n, r in sorted(outcome.reasons.items())},
            }
        trace.append(LoopStep(at=proven.at, outcome=outcome, reason=outcome.reason_code,
                              justification=justification))
        if not outcome.executes:
            break
        execute(outcome.granted)
    return trace
