import pytest
from hypothesis import given
from hypothesis import strategies as st

from baseline_models import (
    AdmissionSnapshot, Decision, OracleChannel, decide_attestation, decide_oracle, find_mismatches,
)
from state_model import ENTRY_STATUSES, ProvableState, RealState, Stale, Status, project

ATTESTED = {"I", "B", "R", "C"}


@pytest.fixture
def snapshot(clean_state, transfer):
    return AdmissionSnapshot(project(clean_state, ATTESTED), transfer)


def test_observable_change_halts(snapshot, clean_state):
    current = project(clean_state.evolve(1, {"I": Status.INVALID}), ATTESTED)
    assert decide_attestation(snapshot, current) == Decision.HALT
    assert find_mismatches(snapshot, current) == ("I",)


def test_hidden_change_proceeds(snapshot, clean_state):
    current = project(clean_state.evolve(1, {"E": Status.INVALID}), ATTESTED)
    assert decide_attestation(snapshot, current) == Decision.PROCEED


def test_undefined_entry_is_not_a_mismatch(snapshot, clean_state):
    current = project(clean_state.evolve(1, {"B": Status.UNDEFINED}), ATTESTED)
    assert decide_attestation(snapshot, current) == Decision.PROCEED


def test_invalid_in_snapshot_halts(clean_state, transfer):
    admitted = AdmissionSnapshot(project(clean_state.evolve(0, {"C": Status.INVALID}), ATTESTED), transfer)
    assert decide_attestation(admitted, project(clean_state, {"I"})) == Decision.HALT


def test_tampered_current_halts(snapshot, clean_state):
    proven = project(clean_state, ATTESTED)
    tampered = ProvableState(at=1, entries={**proven.entries, "B": Status.UNDEFINED},
                             integrity_tag=proven.integrity_tag)
    assert decide_attestation(snapshot, tampered) == Decision.HALT


def test_oracle_lag_arithmetic(snapshot, clean_state):
    oracle = OracleChannel(frozenset({"R"}), propagation_lag=2)
    history = [clean_state, clean_state.evolve(1, {"R": Status.INVALID}),
               clean_state.evolve(2, {"R": Status.INVALID}), clean_state.evolve(3, {"R": Status.INVALID})]

    def decide_at(t):
        real = history[t]
        current = project(real, ATTESTED, {"R": Stale(Status.VALID)} if real.components["R"] != Status.VALID else {})
        view = project(history[max(t - oracle.propagation_lag, 0)], oracle.extra_visible)
        return decide_oracle(snapshot, current, oracle, view)

    # drift at t=1: stale at t=1 and t=2, visible at t=3
    assert [decide_at(t) for t in (1, 2, 3)] == [Decision.PROCEED, Decision.PROCEED, Decision.HALT]


def test_oracle_never_sees_hidden_drift(snapshot, clean_state):
    oracle = OracleChannel(frozenset({"R"}), propagation_lag=0)
    real = clean_state.evolve(5, {"E": Status.INVALID})
    assert decide_oracle(snapshot, project(real, ATTESTED), oracle, project(real, {"R"})) == Decision.PROCEED


def test_oracle_view_outside_channel_is_rejected(snapshot, clean_state):
    oracle = OracleChannel(frozenset({"R"}))
    with pytest.raises(ValueError):
        decide_oracle(snapshot, project(clean_state, ATTESTED), oracle, project(clean_state, {"R", "E"}))


def test_negative_lag_is_rejected():
    with pytest.raises(ValueError):
        OracleChannel(frozenset({"R"}), propagation_lag=-1)


entries_over_attested = st.fixed_dictionaries({c: st.sampled_from(ENTRY_STATUSES) for c in sorted(ATTESTED)})


@given(entries_over_attested, st.sampled_from(ENTRY_STATUSES))
def test_oracle_halts_whenever_attestation_halts(entries, oracle_r):
    real = RealState.all_valid()
    snapshot = AdmissionSnapshot(project(real, ATTESTED), None)
    current = ProvableState.capture(1, entries)
    view = ProvableState.capture(1, {"R": oracle_r})
    oracle = OracleChannel(frozenset({"R"}))
    # the oracle reports R at least as badly as the attested channel does
    if entries["R"] == Status.INVALID and oracle_r != Status.INVALID:
        return
    if decide_attestation(snapshot, current) == Decision.HALT:
        assert decide_oracle(snapshot, current, oracle, view) == Decision.HALT


@given(st.dictionaries(st.sampled_from(sorted(ATTESTED)), st.sampled_from([Status.VALID, Status.UNDEFINED])))
def test_undefined_only_input_proceeds(entries):
    snapshot = AdmissionSnapshot(project(RealState.all_valid(), ATTESTED), None)
    assert decide_attestation(snapshot, ProvableState.capture(1, entries)) == Decision.PROCEED
