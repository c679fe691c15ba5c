"""
Paired simulation of attestation, oracle-extended attestation and the
reconstruction gate over identical drift traces.
"""
import logging
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Optional

import numpy as np
import pandas as pd

from authority_gate import (
    REASON_ATTESTATION_FAILURE, REASON_MISMATCH, REASON_NO_MISMATCH,
    ActionClass, AttestationFailure, gate_step,
)
from baseline_models import (
    AdmissionSnapshot, Decision, OracleChannel, decide_attestation, decide_oracle,
    find_mismatches, merge_views,
)
from drift_engine import (
    ChannelState, DriftConfig, DriftEvent, apply_drift, check_oracle_channel,
    ground_truth_authority, oracle_view, provable_view, ram_observe, sample_trace,
)
from state_model import (
    DEFAULT_UNIVERSE, MASKED, ProvableState, RealState, Stale, Status, Universe, build_envelope, project,
)

logger = logging.getLogger(__name__)

UNDEFINED_MARKER = "undefined"
DEFAULT_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))


class InvariantViolation(AssertionError):
    """A run broke a property the harness guarantees."""


class Model(str, Enum):
    ATTESTATION = "attestation"
    ORACLE = "oracle"
    RAM = "ram"


ALL_MODELS = (Model.ATTESTATION, Model.ORACLE, Model.RAM)


@dataclass(frozen=True)
class ModelDecision:
    executed: bool
    reason: str
    verdict: str
    granted: tuple = ()
    envelope: Optional[dict] = None


@dataclass(frozen=True)
class StepRecord:
    step: int
    event: DriftEvent
    a_r: bool
    decisions: Mapping
    episode: int = 0


@dataclass(frozen=True)
class SimulationSetup:
    """
    Everything about a run that is not drift.

    Args:
        universe: Registered components
        requested: Action class every step asks for
        visible: Components of the attested channel
        oracle: Extra channel of the oracle-extended baseline
        episode_length: Decision steps per admission snapshot
        recovery_steps: Observable drift reverts after this many steps (None = persists)
        assumptions: Declared H, recorded in the gate's envelope
        record_envelopes: Keep envelope summaries on decisions (audit output)
    """
    universe: Universe = DEFAULT_UNIVERSE
    requested: ActionClass = ActionClass.of({'transfer': ("I", "B", "R", "C", "E")})
    visible: frozenset = frozenset({"I", "B", "R", "C"})
    oracle: OracleChannel = OracleChannel(frozenset({"R"}), 2)
    episode_length: int = 4
    recovery_steps: Optional[int] = None
    assumptions: frozenset = frozenset()
    record_envelopes: bool = False

    def __post_init__(self):
        if self.episode_length < 1:
            raise ValueError(f"episode_length must be at least 1, got {self.episode_length}")
        self.universe.check(self.visible)
        self.universe.check(self.oracle.extra_visible)
        self.universe.check(self.requested.components)

    @property
    def guards_universe(self) -> bool:
        """Every privilege needs the whole universe, so the gate can never execute on an invalid step."""
        return all(p.requires >= frozenset(self.universe) for p in self.requested.privileges)


@dataclass(frozen=True)
class Metrics:
    """
    Exact rates; a rate with an empty denominator is None (rendered as 'undefined').
    """
    ier: Optional[Fraction]
    shr: Optional[Fraction]
    ocr: Optional[Fraction]
    executions: int
    halts: int
    invalid_executions: int
    halts_on_invalid: int
    halts_on_valid: int
    a_r_false: int
    a_r_true: int

    def as_dict(self) -> dict:
        def rate(x):
            return None if x is None else float(x)
        return {
            'ier': rate(self.ier), 'shr': rate(self.shr), 'ocr': rate(self.ocr),
            'counts': {
                'executions': self.executions, 'halts': self.halts,
                'invalid_executions': self.invalid_executions,
                'halts_on_invalid': self.halts_on_invalid,
                'halts_on_valid': self.halts_on_valid,
                'a_r_false': self.a_r_false, 'a_r_true': self.a_r_true,
            },
        }


def format_rate(value: Optional[Fraction]) -> str:
    return UNDEFINED_MARKER if value is None else f"{float(value):.6f}"


class MetricsTally:
    """Streaming counters for one model."""

    def __init__(self):
        self.executions = 0
        self.halts = 0
        self.invalid_executions = 0
        self.halts_on_invalid = 0
        self.halts_on_valid = 0
        self.a_r_false = 0
        self.a_r_true = 0

    def add(self, a_r: bool, executed: bool):
        if a_r:
            self.a_r_true += 1
        else:
            self.a_r_false += 1
        if executed:
            self.executions += 1
            if not a_r:
                self.invalid_executions += 1
        else:
            self.halts += 1
            if a_r:
                self.halts_on_valid += 1
            else:
                self.halts_on_invalid += 1

    def metrics(self) -> Metrics:
        def ratio(num, den):
            return Fraction(num, den) if den else None
        return Metrics(
            ier=ratio(self.invalid_executions, self.executions),
            shr=ratio(self.halts_on_invalid, self.a_r_false),
            ocr=ratio(self.halts_on_valid, self.a_r_true),
            executions=self.executions, halts=self.halts,
            invalid_executions=self.invalid_executions,
            halts_on_invalid=self.halts_on_invalid, halts_on_valid=self.halts_on_valid,
            a_r_false=self.a_r_false, a_r_true=self.a_r_true,
        )


# --- Per-model decisions ------------------------------------------------------

def baseline_reason(decision: Decision, *inputs: ProvableState) -> str:
    """Audit reason of a baseline decision, judged on the channel views it was given."""
    if decision == Decision.PROCEED:
        return REASON_NO_MISMATCH
    if not all(view.verify() for view in inputs):
        return REASON_ATTESTATION_FAILURE
    return REASON_MISMATCH


_PROCEEDED = ModelDecision(executed=True, reason=REASON_NO_MISMATCH, verdict=Decision.PROCEED.value)


def _baseline_decision(decision: Decision, snapshot, inspected: ProvableState, inputs: tuple,
                       record: bool) -> ModelDecision:
    if decision == Decision.PROCEED and not record:
        return _PROCEEDED
    envelope = None
    if record:
        envelope = build_envelope(inspected).describe()
        envelope['mismatches'] = list(find_mismatches(snapshot, inspected))
    return ModelDecision(executed=decision == Decision.PROCEED, reason=baseline_reason(decision, *inputs),
                         verdict=decision.value, envelope=envelope)


def _ram_decision(real: RealState, channels: ChannelState, setup: SimulationSetup) -> ModelDecision:
    observed = []

    def observe():
        proven = ProvableState.capture(real.at, ram_observe(real, channels), setup.universe)
        observed.append(proven)
        return proven

    try:
        outcome = gate_step(observe, ProvableState.verify, setup.requested, setup.assumptions)
    except AttestationFailure:
        return ModelDecision(executed=False, reason=REASON_ATTESTATION_FAILURE, verdict="attestation_failure")

    granted = outcome.granted.names if outcome.granted is not None else ()
    if not setup.record_envelopes:
        return _shared_decision(outcome.executes, outcome.reason_code, outcome.verdict.value, granted)
    envelope = build_envelope(observed[0], setup.assumptions).describe()
    return ModelDecision(executed=outcome.executes, reason=outcome.reason_code,
                         verdict=outcome.verdict.value, granted=granted, envelope=envelope)


@lru_cache(maxsize=256)
def _shared_decision(executed: bool, reason: str, verdict: str, granted: tuple) -> ModelDecision:
    return ModelDecision(executed=executed, reason=reason, verdict=verdict, granted=granted)


# --- Episodes -----------------------------------------------------------------

def iter_episode(config: DriftConfig, models: Iterable, length: int, setup: SimulationSetup,
                 rng: np.random.Generator, start_step: int = 0, episode: int = 0):
    """Yield one StepRecord per decision step of a single admission episode."""
    models = tuple(Model(m) for m in models)
    lag = setup.oracle.propagation_lag

    # 1. Admission: clean state, snapshot of the attested channel
    admission = RealState.all_valid(setup.universe, at=start_step)
    channels = ChannelState.open(admission, setup.visible, lag)
    snapshot = AdmissionSnapshot(provable_view(admission, channels), setup.requested)
    history = deque([admission], maxlen=lag + 1)
    real = admission

    for event in sample_trace(config, rng, length, start_step + 1):
        # 2. Drift, then ground truth
        real, channels = apply_drift(event, real, channels, setup.recovery_steps)
        history.append(real)
        a_r = ground_truth_authority(real)

        # 3. Each model on its own view
        decisions = {}
        if Model.ATTESTATION in models or Model.ORACLE in models:
            current = provable_view(real, channels)
        if Model.ATTESTATION in models:
            decisions[Model.ATTESTATION] = _baseline_decision(
                decide_attestation(snapshot, current), snapshot, current, (current,),
                setup.record_envelopes)
        if Model.ORACLE in models:
            # history[0] is the state lag steps back, or admission early in the episode
            view = oracle_view(history[0], setup.oracle.extra_visible, channels)
            merged = merge_views(current, view)
            decisions[Model.ORACLE] = _baseline_decision(
                decide_oracle(snapshot, current, setup.oracle, view, merged), snapshot,
                merged, (current, view), setup.record_envelopes)
        if Model.RAM in models:
            decisions[Model.RAM] = _ram_decision(real, channels, setup)

        yield StepRecord(step=event.step, event=event, a_r=a_r, decisions=decisions, episode=episode)


def run_episode(config: DriftConfig, models: Iterable = ALL_MODELS, length: int = 1,
                setup: Optional[SimulationSetup] = None, rng: Optional[np.random.Generator] = None,
                start_step: int = 0) -> list:
    """
    Run one episode: a single admission snapshot followed by `length` decision steps.

    Returns:
        list: StepRecord per decision step
    """
    if length < 1:
        raise ValueError(f"Episode length must be at least 1, got {length}")
    setup = setup or SimulationSetup()
    rng = rng if rng is not None else config.make_rng()
    return list(iter_episode(config, models, length, setup, rng, start_step))


def iter_simulation(config: DriftConfig, setup: SimulationSetup, n: int, models: Iterable = ALL_MODELS,
                    rng: Optional[np.random.Generator] = None):
    """Chain episodes of setup.episode_length steps until n decision steps have run."""
    if n < 1:
        raise ValueError(f"Number of steps must be at least 1, got {n}")
    check_oracle_channel(setup.oracle.extra_visible, config)
    rng = rng if rng is not None else config.make_rng()
    done = 0
    episode = 0
    while done < n:
        length = min(setup.episode_length, n - done)
        yield from iter_episode(config, models, length, setup, rng, start_step=done, episode=episode)
        done += length
        episode += 1


def simulate(config: DriftConfig, setup: Optional[SimulationSetup] = None, n: int = 100_000,
             models: Iterable = ALL_MODELS, rng: Optional[np.random.Generator] = None) -> list:
    return list(iter_simulation(config, setup or SimulationSetup(), n, models, rng))


# --- Metrics ------------------------------------------------------------------

def compute_metrics(records: list, model) -> Metrics:
    """
    IER = invalid executions / executions
    SHR = halts on invalid steps / invalid steps
    OCR = halts on valid steps / valid steps
    """
    if not records:
        raise ValueError("compute_metrics needs at least one record")
    model = Model(model)
    tally = MetricsTally()
    for record in records:
        tally.add(record.a_r, record.decisions[model].executed)
    return tally.metrics()


def records_to_frame(records: list) -> pd.DataFrame:
    """One row per StepRecord with each model's decision and reason."""
    rows = []
    for r in records:
        row = {
            'step': r.step,
            'episode': r.episode,
            'event': r.event.kind.value,
            'target': r.event.target or "",
            'in_channel': r.event.in_channel,
            'a_r': r.a_r,
        }
        for model in ALL_MODELS:
            d = r.decisions.get(model)
            if d is not None:
                row[f'{model.value}_executed'] = d.executed
                row[f'{model.value}_verdict'] = d.verdict
                row[f'{model.value}_reason'] = d.reason
        rows.append(row)
    return pd.DataFrame(rows)


def brute_force_metrics(records: list, model) -> Metrics:
    """Recount from the tabular form of the records; used to cross-check compute_metrics."""
    model = Model(model)
    df = records_to_frame(records)
    executed = df[f'{model.value}_executed'].astype(bool)
    valid = df['a_r'].astype(bool)

    executions = int(executed.sum())
    invalid_executions = int((executed & ~valid).sum())
    halts_on_invalid = int((~executed & ~valid).sum())
    halts_on_valid = int((~executed & valid).sum())
    a_r_false = int((~valid).sum())
    a_r_true = int(valid.sum())

    return Metrics(
        ier=Fraction(invalid_executions, executions) if executions else None,
        shr=Fraction(halts_on_invalid, a_r_false) if a_r_false else None,
        ocr=Fraction(halts_on_valid, a_r_true) if a_r_true else None,
        executions=executions, halts=len(df) - executions,
        invalid_executions=invalid_executions, halts_on_invalid=halts_on_invalid,
        halts_on_valid=halts_on_valid, a_r_false=a_r_false, a_r_true=a_r_true,
    )


def check_invariants(metrics: Mapping, setup: SimulationSetup):
    """
    Raise InvariantViolation if a run broke the gate's guarantees or the
    oracle's dominance over plain attestation.
    """
    ram = metrics.get(Model.RAM)
    if ram is not None:
        if setup.guards_universe:
            if ram.invalid_executions:
                raise InvariantViolation(f"gate executed on {ram.invalid_executions} invalid step(s)")
            if ram.halts_on_valid:
                raise InvariantViolation(f"gate halted on {ram.halts_on_valid} valid step(s)")
        else:
            logger.warning("Requested class does not require the whole universe; zero-IER not asserted")
    att, orc = metrics.get(Model.ATTESTATION), metrics.get(Model.ORACLE)
    if att is not None and orc is not None and orc.invalid_executions > att.invalid_executions:
        raise InvariantViolation(
            f"oracle executed on more invalid steps ({orc.invalid_executions}) "
            f"than attestation ({att.invalid_executions})")


# --- Coverage sweep -----------------------------------------------------------

@dataclass(frozen=True)
class SweepResult:
    grid: tuple
    points: tuple
    n: int
    seed: int
    models: tuple = ALL_MODELS

    def at(self, coverage: float, model) -> Metrics:
        return self.points[self.grid.index(coverage)][Model(model)]

    def column(self, model, rate: str = 'ier') -> list:
        return [getattr(point[Model(model)], rate) for point in self.points]

    def to_frame(self) -> pd.DataFrame:
        """Sweep table; rates already rendered with six decimals."""
        rows = []
        for coverage, point in zip(self.grid, self.points):
            for model in self.models:
                m = point[model]
                rows.append({
                    'coverage': f"{coverage:.6f}",
                    'model': model.value,
                    'ier': format_rate(m.ier),
                    'shr': format_rate(m.shr),
                    'ocr': format_rate(m.ocr),
                    'executions': m.executions,
                    'halts': m.halts,
                    'n': self.n,
                    'seed': self.seed,
                })
        return pd.DataFrame(rows, columns=['coverage', 'model', 'ier', 'shr', 'ocr',
                                           'executions', 'halts', 'n', 'seed'])


def check_grid(grid) -> tuple:
    grid = tuple(float(c) for c in grid)
    if not grid:
        raise ValueError("Coverage grid is empty")
    if any(not 0.0 <= c <= 1.0 for c in grid):
        raise ValueError(f"Coverage grid must lie in [0, 1]: {grid}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"Coverage grid must be strictly increasing: {grid}")
    return grid


def _sweep_point(task):
    config, seed_seq, n, setup, models = task
    rng = np.random.default_rng(seed_seq)
    tallies = {m: MetricsTally() for m in models}
    for record in iter_simulation(config, setup, n, models, rng):
        for model, tally in tallies.items():
            tally.add(record.a_r, record.decisions[model].executed)
    point = {m: t.metrics() for m, t in tallies.items()}
    check_invariants(point, setup)
    logger.debug("coverage %.2f done: %s", config.coverage,
                 {m.value: format_rate(p.ier) for m, p in point.items()})
    return point


def coverage_sweep(base: DriftConfig, grid=DEFAULT_GRID, n: int = 100_000,
                   setup: Optional[SimulationSetup] = None, models: Iterable = ALL_MODELS,
                   workers: int = 1) -> SweepResult:
    """
    Run n steps at each coverage level of the grid.

    Each grid point gets its own child of the base seed, so results do not
    depend on whether points run in parallel.
    """
    if n < 1:
        raise ValueError(f"Steps per point must be at least 1, got {n}")
    grid = check_grid(grid)
    setup = setup or SimulationSetup()
    models = tuple(Model(m) for m in models)
    children = np.random.SeedSequence(base.seed).spawn(len(grid))
    tasks = [(base.with_coverage(c), child, n, setup, models) for c, child in zip(grid, children)]

    logger.info("Sweeping %d coverage levels x %d steps (workers=%d)", len(grid), n, workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_sweep_point, tasks))
    else:
        points = [_sweep_point(task) for task in tasks]
    return SweepResult(grid=grid, points=tuple(points), n=n, seed=base.seed, models=models)


# --- Scripted case study ------------------------------------------------------

@dataclass(frozen=True)
class CaseStudyRow:
    case: str
    model: Model
    executes: bool
    correct: bool
    verdict: str
    failure_mode: str
    executes_label: str = ""

    @property
    def executes_text(self) -> str:
        return self.executes_label or ("Yes" if self.executes else "No")


@dataclass(frozen=True)
class CaseStudyReport:
    rows: tuple = field(default_factory=tuple)

    def matrix(self) -> dict:
        return {(r.case, r.model): (r.executes, r.correct) for r in self.rows}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            'Case': r.case,
            'Model': MODEL_LABELS[r.model],
            'Executes?': r.executes_text,
            'Correct?': "Yes" if r.correct else "No",
            'Verdict': r.verdict,
            'Failure mode': r.failure_mode,
        } for r in self.rows])


MODEL_LABELS = {
    Model.ATTESTATION: "Attestation (closed)",
    Model.ORACLE: "Attestation + Oracle",
    Model.RAM: "RAM",
}

CASE_A = "A: observable drift"
CASE_B = "B: hidden drift"
CASE_EDGE = "Edge: legitimate change"


def _failure_mode(case, model, executes, correct):
    if correct:
        if model == Model.RAM and not executes:
            return "None (defers until authority reconstructible)"
        return "None"
    if model == Model.ATTESTATION:
        return "Executes on stale provable state; gap undetected"
    if model == Model.ORACLE:
        return "Oracle coverage gap; unmodeled signal undetected"
    return "Executes without reconstructible authority"


def scripted_cases(setup: SimulationSetup) -> dict:
    """
    Execution-time states of the scripted transfer, keyed by case.

    Each value is (real state, attested-channel distortions, hidden components).

    t0: everything valid, transfer admitted.
    t1: Case A - the IP change reaches the attested channel.
        Case B - anomaly in a parallel session (hidden) and a possible regulatory
                 restriction that has not propagated yet.
        Edge   - the context changes legitimately; the attested channel carries
                 the new reading unclassified while every condition still holds.
    """
    admission = RealState.all_valid(setup.universe, at=0)
    return {
        CASE_A: (admission.evolve(1, {"C": Status.INVALID}), {}, frozenset()),
        CASE_B: (admission.evolve(1, {"E": Status.INVALID, "R": Status.UNDEFINED}),
                 {"R": Stale(Status.VALID)}, frozenset({"E"})),
        CASE_EDGE: (admission.evolve(1, {"C": Status.VALID}), {"C": MASKED}, frozenset()),
    }


def run_case_study(setup: Optional[SimulationSetup] = None) -> CaseStudyReport:
    """Replay the scripted admission/pre-execution transfer scenario for every model."""
    setup = setup or SimulationSetup()
    universe = setup.universe
    admission = RealState.all_valid(universe, at=0)
    snapshot = AdmissionSnapshot(project(admission, setup.visible), setup.requested)
    lagged_oracle = project(admission, setup.oracle.extra_visible)

    rows = []
    for case, (real, distortions, hidden) in scripted_cases(setup).items():
        a_r = ground_truth_authority(real)
        attested = project(real, setup.visible, {c: d for c, d in distortions.items() if c in setup.visible})
        channels = ChannelState.open(admission, setup.visible, setup.oracle.propagation_lag)
        if hidden:
            channels = ChannelState(admission=channels.admission, visible=channels.visible,
                                    lag=channels.lag, masked=hidden)

        decisions = {
            Model.ATTESTATION: decide_attestation(snapshot, attested) == Decision.PROCEED,
            Model.ORACLE: decide_oracle(snapshot, attested, setup.oracle, lagged_oracle) == Decision.PROCEED,
        }
        ram = _ram_decision(real, channels, setup)
        decisions[Model.RAM] = ram.executed
        verdicts = {
            Model.ATTESTATION: "proceed" if decisions[Model.ATTESTATION] else "halt",
            Model.ORACLE: "proceed" if decisions[Model.ORACLE] else "halt",
            Model.RAM: ram.verdict,
        }

        for model in ALL_MODELS:
            executes = decisions[model]
            correct = executes == a_r
            label = ""
            if model == Model.ORACLE and executes and not a_r:
                # a faster-propagating signal would have reached the oracle
                label = "Yes (in many cases)"
            rows.append(CaseStudyRow(case=case, model=model, executes=executes, correct=correct,
                                     verdict=verdicts[model],
                                     failure_mode=_failure_mode(case, model, executes, correct),
                                     executes_label=label))
    return CaseStudyReport(rows=tuple(rows))
