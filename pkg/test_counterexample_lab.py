import itertools
import json

import numpy as np
import pytest

from counterexample_lab import (
    FAMILIES, NOT_PROVABLY_FALSE, PROVABLY_TRUE, FiniteInstance, SizeError, Witness,
    count_witnesses, enumerate_assignments, find_witness, generate_instance, necessity_scan,
    verify_witness,
)
from state_model import DEFAULT_UNIVERSE, Status, Universe, project


def transfer_gap(rule=NOT_PROVABLY_FALSE):
    return FiniteInstance(DEFAULT_UNIVERSE, frozenset("IBRC"), frozenset("IBRCE"), rule, "transfer_gap")


def brute_force_witness_count(instance):
    """Independent oracle: itertools over Status values and the instance's own predicates."""
    count = 0
    for values in itertools.product((Status.VALID, Status.INVALID, Status.UNDEFINED), repeat=len(instance.universe)):
        real = dict(zip(instance.universe, values))
        provable = {c: real[c] for c in instance.visible}
        if instance.admits(provable) and not instance.authority(real) and instance.authority_on_provable(provable):
            count += 1
    return count


def test_enumeration_order_is_product_order():
    universe = Universe(("a", "b"))
    table = enumerate_assignments(universe)
    assert table.tolist() == [list(row) for row in itertools.product(range(3), repeat=2)]


def test_universe_too_large():
    big = Universe(tuple(f"c{i}" for i in range(13)))
    with pytest.raises(SizeError):
        enumerate_assignments(big)
    with pytest.raises(SizeError):
        find_witness(FiniteInstance(big, frozenset({"c0"}), frozenset({"c12"})))


def test_transfer_gap_witness_points_at_hidden_component():
    witness = find_witness(transfer_gap())
    assert witness.delta_star == "E"
    assert witness.s_r_star.components["E"] == Status.INVALID
    assert all(witness.s_r_star.components[c] == Status.VALID for c in "IBRC")
    assert verify_witness(transfer_gap(), witness).valid


def test_gap_free_has_no_witness():
    instance = FiniteInstance(DEFAULT_UNIVERSE, frozenset("IBRCE"), frozenset("IBRCE"))
    assert find_witness(instance) is None
    assert count_witnesses(instance) == 0


def test_insensitive_requirement_has_no_witness():
    instance = FiniteInstance(DEFAULT_UNIVERSE, frozenset("IBRC"), frozenset("IR"))
    assert find_witness(instance) is None


def test_witness_with_visible_delta_fails():
    instance = transfer_gap()
    witness = find_witness(instance)
    forged = Witness(s_p=witness.s_p, s_r_star=witness.s_r_star, delta_star="I")
    report = verify_witness(instance, forged)
    assert not report.valid
    assert 'delta_hidden' in report.failed()


def test_witness_with_inconsistent_projection_fails():
    instance = transfer_gap()
    witness = find_witness(instance)
    other = witness.s_r_star.evolve(0, {"C": Status.INVALID})
    report = verify_witness(instance, Witness(s_p=witness.s_p, s_r_star=other, delta_star="E"))
    assert 'projection_consistent' in report.failed()


def test_witness_json_round_trip():
    instance = transfer_gap()
    witness = find_witness(instance)
    restored = Witness.from_dict(json.loads(json.dumps(witness.to_dict())))
    assert restored == witness
    assert verify_witness(instance, restored).valid


def test_chunking_does_not_change_the_answer():
    instance = FiniteInstance(Universe(tuple("abcdef")), frozenset("abc"), frozenset("bdf"), PROVABLY_TRUE)
    expected = find_witness(instance)
    for chunk in (1, 7, 100, 10_000):
        assert find_witness(instance, chunk_size=chunk) == expected


@pytest.mark.parametrize("rule", [NOT_PROVABLY_FALSE, PROVABLY_TRUE])
def test_vectorised_count_matches_itertools(rule):
    universe = Universe(("x", "y", "z"))
    for visible in (frozenset(), frozenset("x"), frozenset("xy"), frozenset("xyz")):
        for required in (frozenset("x"), frozenset("z"), frozenset("yz"), frozenset("xyz")):
            instance = FiniteInstance(universe, visible, required, rule)
            assert count_witnesses(instance) == brute_force_witness_count(instance)


def test_necessity_scan_on_transfer_gap():
    report = necessity_scan(transfer_gap())
    assert report.assignments == 3 ** 5
    assert report.ram_invalid_executions == 0
    # E is never observable, so the gate can never establish the transfer
    assert report.ram_executions == 0
    assert report.ram_halts_on_valid == report.authority_true == 1
    assert report.attestation_invalid_executions > 0
    assert report.witnesses == count_witnesses(transfer_gap())


def test_necessity_scan_gap_free_halts_only_where_invalid():
    instance = FiniteInstance(DEFAULT_UNIVERSE, frozenset("IBRCE"), frozenset("IRE"))
    report = necessity_scan(instance)
    assert report.ram_invalid_executions == 0
    assert report.ram_halts_on_valid == 0
    assert report.ram_executions == report.authority_true
    assert sum(report.verdicts.values()) == report.assignments


def test_generated_families_agree_with_gap_sensitivity():
    rng = np.random.default_rng(2024)
    for _ in range(60):
        family = FAMILIES[int(rng.integers(len(FAMILIES)))]
        instance = generate_instance(rng, family, int(rng.integers(2, 6)))
        witness = find_witness(instance)
        assert (witness is not None) == (family == "gap_sensitive") == instance.gap_sensitive
        if witness is not None:
            assert verify_witness(instance, witness).valid
        assert necessity_scan(instance).ram_invalid_executions == 0


@pytest.mark.slow
def test_generated_families_full_size():
    rng = np.random.default_rng(42)
    for family, expect_witness in (("gap_sensitive", True), ("gap_free", False)):
        for _ in range(500):
            instance = generate_instance(rng, family, int(rng.integers(2, 9)))
            witness = find_witness(instance)
            assert (witness is not None) == expect_witness
            if witness is not None:
                assert verify_witness(instance, witness).valid
            assert necessity_scan(instance).ram_invalid_executions == 0


def test_instance_dict_round_trip():
    instance = transfer_gap(PROVABLY_TRUE)
    assert FiniteInstance.from_dict(instance.to_dict()) == instance


def test_instance_validation():
    with pytest.raises(ValueError):
        FiniteInstance(DEFAULT_UNIVERSE, frozenset("I"), frozenset())
    with pytest.raises(ValueError):
        FiniteInstance(DEFAULT_UNIVERSE, frozenset("I"), frozenset("I"), admission_rule="maybe")
    with pytest.raises(KeyError):
        FiniteInstance(DEFAULT_UNIVERSE, frozenset("IZ"), frozenset("I"))


def test_witness_projection_matches_project():
    witness = find_witness(transfer_gap())
    assert witness.s_p == project(witness.s_r_star, frozenset("IBRC"))
