"""
Result files and console tables.

Every file is written once through a temporary file in the target directory
and renamed into place.
"""
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional
from xml.sax.saxutils import escape

import pandas as pd

from authority_gate import REASON_CODES, ActionClass, evaluate_gate
from simulator import ALL_MODELS, Model, SweepResult, format_rate, records_to_frame
from state_model import ProvableState, Status, Universe, build_envelope

logger = logging.getLogger(__name__)

MODEL_COLORS = {
    Model.ATTESTATION: "#d62728",
    Model.ORACLE: "#ff7f0e",
    Model.RAM: "#2ca02c",
}


# --- Atomic file output -------------------------------------------------------

def atomic_write(path, write) -> Path:
    """
    Call write(tmp_path) then rename tmp_path onto path.

    Args:
        path: Final destination; parent directories are created
        write: Callable taking the temporary path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.debug("Wrote %s", path)
    return path


def write_text(path, text: str) -> Path:
    def write(tmp):
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    return atomic_write(path, write)


def write_json(path, payload) -> Path:
    return write_text(path, json.dumps(payload, indent=2) + "\n")


def write_frame(path, df: pd.DataFrame) -> Path:
    return atomic_write(path, lambda tmp: df.to_csv(tmp, index=False, lineterminator="\n"))


# --- Metrics ------------------------------------------------------------------

def metrics_payload(scenario_summary: dict, n: int, metrics: dict) -> dict:
    """Run result: one entry per model, rates as floats or null when undefined."""
    payload = {'scenario': scenario_summary, 'n': n}
    for model in ALL_MODELS:
        if model in metrics:
            payload[model.value] = metrics[model].as_dict()
    return payload


def metrics_frame(metrics: dict) -> pd.DataFrame:
    return pd.DataFrame([{
        'model': model.value,
        'ier': format_rate(m.ier),
        'shr': format_rate(m.shr),
        'ocr': format_rate(m.ocr),
        'executions': m.executions,
        'halts': m.halts,
        'a_r_false': m.a_r_false,
        'a_r_true': m.a_r_true,
    } for model, m in metrics.items()])


def render_table(df: pd.DataFrame) -> str:
    return df.to_string(index=False)


def write_steps_csv(path, records: list) -> Path:
    return write_frame(path, records_to_frame(records))


def write_sweep_csv(path, sweep: SweepResult) -> Path:
    return write_frame(path, sweep.to_frame())


# --- SVG chart ----------------------------------------------------------------

SVG_WIDTH = 640
SVG_HEIGHT = 400
MARGIN = {'left': 60, 'right': 150, 'top': 30, 'bottom': 50}


def _x(coverage: float) -> float:
    plot_w = SVG_WIDTH - MARGIN['left'] - MARGIN['right']
    return MARGIN['left'] + coverage * plot_w


def _y(rate: float) -> float:
    plot_h = SVG_HEIGHT - MARGIN['top'] - MARGIN['bottom']
    return MARGIN['top'] + (1.0 - rate) * plot_h


RATE_TITLES = {
    'ier': "Invalid execution rate vs. coverage",
    'shr': "Safe halt rate vs. coverage",
    'ocr': "Over-conservative halt rate vs. coverage",
}


def render_rate_svg(sweep: SweepResult, rate: str = 'ier', title: Optional[str] = None) -> str:
    """
    Line chart of one rate over the coverage grid, one polyline per model.

    Axes are fixed to [0, 1] on both sides. Grid points where the rate is
    undefined (empty denominator) are left out of the line.
    """
    if rate not in RATE_TITLES:
        raise ValueError(f"Unknown rate '{rate}'; expected one of {sorted(RATE_TITLES)}")
    title = title or RATE_TITLES[rate]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" '
        f'viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">',
        f'<rect width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>',
        f'<text x="{SVG_WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]

    # Axes
    x0, x1 = _x(0.0), _x(1.0)
    y0, y1 = _y(0.0), _y(1.0)
    parts.append(f'<line class="axis" x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y0:.2f}" stroke="black"/>')
    parts.append(f'<line class="axis" x1="{x0:.2f}" y1="{y0:.2f}" x2="{x0:.2f}" y2="{y1:.2f}" stroke="black"/>')
    for i in range(0, 11, 2):
        tick = i / 10
        parts.append(f'<text x="{_x(tick):.2f}" y="{y0 + 18:.2f}" text-anchor="middle" font-size="11">{tick:.1f}</text>')
        parts.append(f'<text x="{x0 - 8:.2f}" y="{_y(tick) + 4:.2f}" text-anchor="end" font-size="11">{tick:.1f}</text>')
    parts.append(f'<text x="{(x0 + x1) / 2:.2f}" y="{SVG_HEIGHT - 10}" text-anchor="middle" font-size="12">'
                 f'State coverage</text>')
    parts.append(f'<text x="16" y="{(y0 + y1) / 2:.2f}" text-anchor="middle" font-size="12" '
                 f'transform="rotate(-90 16 {(y0 + y1) / 2:.2f})">{rate.upper()}</text>')

    # One line per model
    for i, model in enumerate(sweep.models):
        values = sweep.column(model, rate)
        coords = " ".join(f"{_x(c):.2f},{_y(float(v)):.2f}" for c, v in zip(sweep.grid, values) if v is not None)
        color = MODEL_COLORS.get(model, "black")
        parts.append(f'<polyline class="series" data-model="{model.value}" fill="none" stroke="{color}" '
                     f'stroke-width="2" points="{coords}"/>')
        ly = MARGIN['top'] + 20 * i + 10
        lx = SVG_WIDTH - MARGIN['right'] + 15
        parts.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 26}" y="{ly + 4}" font-size="11">{model.value}</text>')

    parts.append('</svg>')
    return "\n".join(parts) + "\n"


def write_sweep_svg(path, sweep: SweepResult, rate: str = 'ier') -> Path:
    return write_text(path, render_rate_svg(sweep, rate))


# --- Audit log ----------------------------------------------------------------

@dataclass(frozen=True)
class AuditRecord:
    """One decision of one model at one step. Written for inspection only."""
    step: int
    model: str
    verdict: str
    reason: str
    envelope: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.reason not in REASON_CODES:
            raise ValueError(f"Unknown reason code '{self.reason}'")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> 'AuditRecord':
        return cls(**json.loads(line))


class AuditLog:
    """Append-only list of AuditRecord for one run."""

    def __init__(self):
        self._records = []

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def append(self, record: AuditRecord):
        self._records.append(record)

    def extend_from_steps(self, records: Iterable):
        for r in records:
            for model in ALL_MODELS:
                d = r.decisions.get(model)
                if d is not None:
                    self.append(AuditRecord(step=r.step, model=model.value, verdict=d.verdict,
                                            reason=d.reason, envelope=d.envelope or {}))
        return self

    def write(self, path) -> Path:
        return write_text(path, "".join(rec.to_json() + "\n" for rec in self._records))

    @classmethod
    def read(cls, path) -> 'AuditLog':
        log = cls()
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    log.append(AuditRecord.from_json(line))
        return log


def replay_audit(log: Iterable, requested: ActionClass, universe: Universe) -> list:
    """
    Feed each recorded gate envelope back through evaluate_gate.

    Returns:
        list: (step, recorded verdict, replayed verdict) for every disagreement
    """
    mismatches = []
    replayed = 0
    for rec in log:
        if rec.model != Model.RAM.value or 'proven' not in rec.envelope:
            continue
        proven = ProvableState.capture(rec.step, rec.envelope['proven'], universe)
        assumptions = {c: Status.VALID for c in rec.envelope.get('assumptions', [])}
        outcome = evaluate_gate(build_envelope(proven, assumptions), requested)
        replayed += 1
        if outcome.verdict.value != rec.verdict:
            mismatches.append((rec.step, rec.verdict, outcome.verdict.value))
    logger.info("Replayed %d gate decisions, %d disagreement(s)", replayed, len(mismatches))
    return mismatches


# --- Case study and lab output ------------------------------------------------

def case_study_payload(report) -> dict:
    return {'rows': [{
        'case': r.case,
        'model': r.model.value,
        'executes': r.executes,
        'executes_label': r.executes_text,
        'correct': r.correct,
        'verdict': r.verdict,
        'failure_mode': r.failure_mode,
    } for r in report.rows]}


def witness_payload(instance, witness, report=None) -> dict:
    payload = {'instance': instance.to_dict(), 'witness': None}
    if witness is not None:
        payload['witness'] = witness.to_dict()
        if report is not None:
            payload['verified'] = report.valid
            payload['conditions'] = dict(report.conditions)
    return payload


def render_witness(instance, witness, report=None) -> str:
    name = instance.name or "instance"
    if witness is None:
        return f"{name}: no witness"
    universe = instance.universe
    lines = [
        f"{name}: witness found (delta* = {witness.delta_star})",
        "  provable : " + ", ".join(f"{c}={witness.s_p.entries[c].value}"
                                    for c in universe.ordered(witness.s_p.domain())),
        "  real     : " + ", ".join(f"{c}={witness.s_r_star.components[c].value}" for c in universe),
    ]
    if report is not None:
        for cond, ok in report.conditions.items():
            lines.append(f"  {'✅' if ok else '❌'} {cond}")
    return "\n".join(lines)


def render_banner(title: str, width: Optional[int] = 80) -> str:
    return "\n".join(["=" * width, title, "=" * width])
