"""
Counterexample lab: exhaustive search over small finite instances for states
that an admission rule accepts, that look valid on the provable projection,
and that are invalid in reality.

Status codes used in the enumeration tables:
    0 = VALID, 1 = INVALID, 2 = UNDEFINED
Rows follow itertools.product order over that alphabet (last component fastest).
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from authority_gate import ActionClass, evaluate_gate
from state_model import ProvableState, RealState, Status, Universe, build_envelope, project

logger = logging.getLogger(__name__)

MAX_COMPONENTS = 12
CODES = (Status.VALID, Status.INVALID, Status.UNDEFINED)
VALID, INVALID, UNDEFINED = 0, 1, 2

NOT_PROVABLY_FALSE = "not_provably_false"
PROVABLY_TRUE = "provably_true"
ADMISSION_RULES = (NOT_PROVABLY_FALSE, PROVABLY_TRUE)

FAMILIES = ("gap_sensitive", "gap_free", "insensitive")


class SizeError(ValueError):
    """Universe too large to enumerate."""


@dataclass(frozen=True)
class FiniteInstance:
    """
    A finite setting for the search.

    F holds when every component in `requirements` is VALID.
    G is the admission rule over the visible components:
        not_provably_false - no visible component is INVALID
        provably_true      - every visible component is VALID
    """
    universe: Universe
    visible: frozenset
    requirements: frozenset
    admission_rule: str = NOT_PROVABLY_FALSE
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, 'visible', self.universe.check(self.visible))
        object.__setattr__(self, 'requirements', self.universe.check(self.requirements))
        if not self.requirements:
            raise ValueError("F must require at least one component")
        if self.admission_rule not in ADMISSION_RULES:
            raise ValueError(f"Unknown admission rule '{self.admission_rule}', expected one of {ADMISSION_RULES}")

    @property
    def hidden(self) -> frozenset:
        return frozenset(self.universe) - self.visible

    @property
    def gap_sensitive(self) -> bool:
        return bool(self.requirements & self.hidden)

    def authority(self, components) -> bool:
        """F over a full assignment."""
        return all(components[c] == Status.VALID for c in self.requirements)

    def authority_on_provable(self, entries) -> bool:
        """F read from the provable projection alone (hidden requirements are not consulted)."""
        return all(entries.get(c) == Status.VALID for c in self.requirements & self.visible)

    def admits(self, entries) -> bool:
        """G over the provable projection."""
        statuses = [entries.get(c) for c in self.visible]
        if self.admission_rule == PROVABLY_TRUE:
            return all(s == Status.VALID for s in statuses)
        return all(s != Status.INVALID for s in statuses)

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'universe': list(self.universe),
            'visible': list(self.universe.ordered(self.visible)),
            'requirements': list(self.universe.ordered(self.requirements)),
            'admission_rule': self.admission_rule,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'FiniteInstance':
        universe = Universe(tuple(data['universe']))
        return cls(universe=universe, visible=frozenset(data['visible']),
                   requirements=frozenset(data['requirements']),
                   admission_rule=data.get('admission_rule', NOT_PROVABLY_FALSE),
                   name=data.get('name', ""))


@dataclass(frozen=True)
class Witness:
    s_p: ProvableState
    s_r_star: RealState
    delta_star: str

    def to_dict(self) -> dict:
        universe = self.s_r_star.universe
        return {
            'universe': list(universe),
            's_p': {c: self.s_p.entries[c].value for c in universe.ordered(self.s_p.domain())},
            's_r_star': {c: self.s_r_star.components[c].value for c in universe},
            'delta_star': self.delta_star,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'Witness':
        universe = Universe(tuple(data['universe']))
        real = RealState(at=0, components=data['s_r_star'], universe=universe)
        proven = ProvableState.capture(0, data['s_p'], universe)
        return cls(s_p=proven, s_r_star=real, delta_star=data['delta_star'])


@dataclass(frozen=True)
class WitnessReport:
    valid: bool
    conditions: dict = field(default_factory=dict)

    def failed(self) -> list:
        return [name for name, ok in self.conditions.items() if not ok]


@dataclass(frozen=True)
class NecessityReport:
    instance: str
    assignments: int
    authority_true: int
    authority_false: int
    ram_executions: int
    ram_invalid_executions: int
    ram_halts_on_valid: int
    attestation_invalid_executions: int
    witnesses: int
    verdicts: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            'instance': self.instance,
            'assignments': self.assignments,
            'authority_true': self.authority_true,
            'authority_false': self.authority_false,
            'ram': {
                'executions': self.ram_executions,
                'invalid_executions': self.ram_invalid_executions,
                'halts_on_valid': self.ram_halts_on_valid,
                'verdicts': dict(self.verdicts),
            },
            'attestation': {'invalid_executions': self.attestation_invalid_executions},
            'witnesses': self.witnesses,
        }


# --- Enumeration --------------------------------------------------------------

def _check_size(universe: Universe):
    if len(universe) > MAX_COMPONENTS:
        raise SizeError(f"Universe of {len(universe)} components exceeds the enumerable limit of {MAX_COMPONENTS}")


def enumerate_assignments(universe: Universe, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
    """
    Rows [start, stop) of the full status table, shape (rows, len(universe)).
    """
    _check_size(universe)
    n = len(universe)
    total = 3 ** n
    stop = total if stop is None else min(stop, total)
    idx = np.arange(start, stop, dtype=np.int64)
    place = 3 ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] // place) % 3).astype(np.uint8)


def _columns(instance: FiniteInstance, ids) -> list:
    return [instance.universe.components.index(c) for c in instance.universe.ordered(ids)]


def _masks(instance: FiniteInstance, table: np.ndarray):
    """(G, F, F on provable) boolean vectors over the rows of `table`."""
    req = _columns(instance, instance.requirements)
    vis = _columns(instance, instance.visible)
    req_vis = _columns(instance, instance.requirements & instance.visible)

    f_real = (table[:, req] == VALID).all(axis=1)
    f_provable = (table[:, req_vis] == VALID).all(axis=1)
    if instance.admission_rule == PROVABLY_TRUE:
        admitted = (table[:, vis] == VALID).all(axis=1)
    else:
        admitted = ~(table[:, vis] == INVALID).any(axis=1)
    return admitted, f_real, f_provable


def _witness_mask(instance: FiniteInstance, table: np.ndarray) -> np.ndarray:
    admitted, f_real, f_provable = _masks(instance, table)
    return admitted & ~f_real & f_provable


def _row_to_real(instance: FiniteInstance, row) -> RealState:
    return RealState(at=0, components={c: CODES[int(code)] for c, code in zip(instance.universe, row)},
                     universe=instance.universe)


def _delta_star(instance: FiniteInstance, real: RealState) -> str:
    for cid in instance.universe.ordered(instance.requirements & instance.hidden):
        if real.components[cid] != Status.VALID:
            return cid
    raise AssertionError("witness row without an invalidating hidden requirement")


def find_witness(instance: FiniteInstance, chunk_size: int = 4096) -> Optional[Witness]:
    """
    First witness in enumeration order, or None.

    The table is scanned in ranges of `chunk_size` rows; the first range with
    a hit decides, so the answer does not depend on the range size.
    """
    _check_size(instance.universe)
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be positive, got {chunk_size}")
    total = 3 ** len(instance.universe)
    for start in range(0, total, chunk_size):
        table = enumerate_assignments(instance.universe, start, start + chunk_size)
        hits = np.flatnonzero(_witness_mask(instance, table))
        if hits.size:
            real = _row_to_real(instance, table[hits[0]])
            logger.debug("Witness for %s at row %d", instance.name or "instance", start + int(hits[0]))
            return Witness(s_p=project(real, instance.visible), s_r_star=real,
                           delta_star=_delta_star(instance, real))
    return None


def count_witnesses(instance: FiniteInstance) -> int:
    table = enumerate_assignments(instance.universe)
    return int(_witness_mask(instance, table).sum())


def verify_witness(instance: FiniteInstance, witness: Witness) -> WitnessReport:
    """Re-check every witness condition from the records alone, without the enumeration tables."""
    real = witness.s_r_star
    entries = witness.s_p.entries
    delta = witness.delta_star
    conditions = {
        'admitted': instance.admits(entries),
        'invalid_in_reality': not instance.authority(real.components),
        'valid_on_provable': instance.authority_on_provable(entries),
        'delta_hidden': delta in instance.universe and delta not in instance.visible,
        'delta_invalidates': delta in instance.requirements
                             and real.components.get(delta) != Status.VALID,
        'projection_consistent': witness.s_p.domain() == instance.visible
                                 and all(entries[c] == real.components[c] for c in entries)
                                 and witness.s_p.verify(),
    }
    return WitnessReport(valid=all(conditions.values()), conditions=conditions)


def necessity_scan(instance: FiniteInstance) -> NecessityReport:
    """
    Run the gate over every assignment's provable projection and count how
    often it executes where F is false.
    """
    table = enumerate_assignments(instance.universe)
    admitted, f_real, f_provable = _masks(instance, table)
    requested = ActionClass.of({'F': instance.requirements})

    # The gate only reads the visible requirements; evaluate once per distinct projection
    req_vis = _columns(instance, instance.requirements & instance.visible)
    vis_ids = instance.universe.ordered(instance.visible)
    vis_cols = _columns(instance, instance.visible)
    place = 3 ** np.arange(len(req_vis), dtype=np.int64)
    key = (table[:, req_vis].astype(np.int64) * place).sum(axis=1)
    _, first, inverse = np.unique(key, return_index=True, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    per_key = np.bincount(inverse, minlength=len(first))

    outcomes = []
    for row_index in first:
        entries = {c: CODES[int(code)] for c, code in zip(vis_ids, table[row_index, vis_cols])}
        proven = ProvableState.capture(0, entries, instance.universe)
        outcomes.append(evaluate_gate(build_envelope(proven), requested))

    executes = np.array([o.executes for o in outcomes], dtype=bool)[inverse]

    verdicts = {}
    for outcome, count in zip(outcomes, per_key.tolist()):
        verdicts[outcome.verdict.value] = verdicts.get(outcome.verdict.value, 0) + count

    report = NecessityReport(
        instance=instance.name,
        assignments=int(table.shape[0]),
        authority_true=int(f_real.sum()),
        authority_false=int((~f_real).sum()),
        ram_executions=int(executes.sum()),
        ram_invalid_executions=int((executes & ~f_real).sum()),
        ram_halts_on_valid=int((~executes & f_real).sum()),
        attestation_invalid_executions=int((admitted & ~f_real).sum()),
        witnesses=int((admitted & ~f_real & f_provable).sum()),
        verdicts=verdicts,
    )
    logger.debug("Necessity scan %s: %s", instance.name or "instance", report.as_dict())
    return report


# --- Generated instance families ----------------------------------------------

def generate_instance(rng: np.random.Generator, family: str, n_components: int) -> FiniteInstance:
    """
    Random instance of one family.

    gap_sensitive - some component hidden, F requires at least one hidden component
    gap_free      - everything visible
    insensitive   - some component hidden, F requires visible components only
    """
    if family not in FAMILIES:
        raise ValueError(f"Unknown family '{family}', expected one of {FAMILIES}")
    if not 2 <= n_components <= MAX_COMPONENTS:
        raise SizeError(f"n_components must lie in [2, {MAX_COMPONENTS}], got {n_components}")

    names = tuple(f"X{i}" for i in range(n_components))
    universe = Universe(names)
    rule = ADMISSION_RULES[int(rng.integers(len(ADMISSION_RULES)))]

    if family == "gap_free":
        visible = frozenset(names)
        required = _random_subset(rng, names, at_least=1)
    else:
        order = rng.permutation(n_components)
        n_hidden = int(rng.integers(1, n_components))
        hidden = [names[i] for i in order[:n_hidden]]
        shown = [names[i] for i in order[n_hidden:]]
        visible = frozenset(shown)
        if family == "gap_sensitive":
            required = _random_subset(rng, hidden, at_least=1) | _random_subset(rng, shown, at_least=0)
        else:
            required = _random_subset(rng, shown, at_least=1)

    return FiniteInstance(universe=universe, visible=visible, requirements=required,
                          admission_rule=rule, name=f"{family}-{n_components}")


def _random_subset(rng: np.random.Generator, names, at_least: int) -> frozenset:
    names = list(names)
    if not names:
        return frozenset()
    picked = {n for n in names if rng.random() < 0.5}
    while len(picked) < at_least:
        picked.add(names[int(rng.integers(len(names)))])
    return frozenset(picked)
