"""
Comparison decision functions: closed attestation against an admission
snapshot, and the same check extended with a delayed oracle channel.

Both apply the weaker criterion "not provably false": an UNDEFINED entry or a
missing component never triggers a halt.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from state_model import DEFINITE, ProvableState, Status

logger = logging.getLogger(__name__)


class Decision(str, Enum):
    PROCEED = "proceed"
    HALT = "halt"


@dataclass(frozen=True)
class AdmissionSnapshot:
    """Captured once at admission and never refreshed."""
    proven_at_admission: ProvableState
    admitted_class: object


@dataclass(frozen=True)
class OracleChannel:
    extra_visible: frozenset
    propagation_lag: int = 2

    def __post_init__(self):
        if self.propagation_lag < 0:
            raise ValueError(f"propagation_lag must be non-negative, got {self.propagation_lag}")
        object.__setattr__(self, 'extra_visible', frozenset(self.extra_visible))


def find_mismatches(snapshot: AdmissionSnapshot, current: ProvableState) -> tuple:
    """
    Components that make attestation halt.

    A component counts when both maps hold it with differing definite
    statuses, or when either map reports it INVALID.
    """
    before = snapshot.proven_at_admission.entries
    now = current.entries
    flagged = set()
    for cid in set(before) & set(now):
        if before[cid] in DEFINITE and now[cid] in DEFINITE and before[cid] != now[cid]:
            flagged.add(cid)
    for entries in (before, now):
        flagged.update(cid for cid, status in entries.items() if status == Status.INVALID)
    return current.universe.ordered(flagged)


def decide_attestation(snapshot: AdmissionSnapshot, current_proven: ProvableState) -> Decision:
    if not current_proven.verify():
        # Enforcement acts on what it can see; a broken tag is visible
        logger.debug("Attestation baseline: integrity tag mismatch at step %s", current_proven.at)
        return Decision.HALT
    if find_mismatches(snapshot, current_proven):
        return Decision.HALT
    return Decision.PROCEED


def merge_views(current_proven: ProvableState, oracle_view: ProvableState) -> ProvableState:
    """Union of both channels; the oracle entry wins on overlap."""
    entries = dict(current_proven.entries)
    entries.update(oracle_view.entries)
    return ProvableState.capture(current_proven.at, entries, current_proven.universe)


def decide_oracle(snapshot: AdmissionSnapshot, current_proven: ProvableState,
                  oracle: OracleChannel, oracle_view: ProvableState,
                  merged: Optional[ProvableState] = None) -> Decision:
    """
    Attestation check over the provable state extended by the oracle channel.

    Args:
        snapshot: Admission snapshot of the episode
        current_proven: Attested channel at this step
        oracle: Channel description (extra components, lag)
        oracle_view: Oracle entries, already delayed by the channel lag
        merged: merge_views(current_proven, oracle_view) if the caller already built it

    Returns:
        Decision: PROCEED or HALT
    """
    outside = oracle_view.domain() - oracle.extra_visible
    if outside:
        raise ValueError(f"Oracle view carries components outside its channel: {sorted(outside)}")
    if not current_proven.verify() or not oracle_view.verify():
        logger.debug("Oracle baseline: integrity tag mismatch at step %s", current_proven.at)
        return Decision.HALT
    if merged is None:
        merged = merge_views(current_proven, oracle_view)
    return Decision.HALT if find_mismatches(snapshot, merged) else Decision.PROCEED
