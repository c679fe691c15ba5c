#!/usr/bin/env python3
"""
Command-line front door.

    python cli_reporting.py run            --config scenarios/default.yaml [--emit-steps]
    python cli_reporting.py sweep          --config scenarios/default.yaml
    python cli_reporting.py case-study
    python cli_reporting.py witness        instances/transfer_gap.yaml
    python cli_reporting.py necessity-scan instances/gap_free.yaml

Exit codes: 0 ok, 2 configuration or usage error, 3 invariant violation.
"""
import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import reporting
from counterexample_lab import SizeError, find_witness, necessity_scan, verify_witness
from scenario_config import DEFAULT_SCENARIO, HERE, ConfigError, load_instance, load_scenario
from simulator import (
    InvariantViolation, brute_force_metrics, check_invariants, compute_metrics,
    coverage_sweep, run_case_study, simulate,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3

DEFAULT_INSTANCE = HERE / "instances" / "transfer_gap.yaml"


def _scenario(args):
    scenario = load_scenario(args.config, seed=args.seed)
    if args.out_dir:
        scenario = scenario.with_out_dir(args.out_dir)
    return scenario


def _out(scenario_or_dir, name: str) -> Path:
    out_dir = getattr(scenario_or_dir, 'out_dir', scenario_or_dir)
    return Path(out_dir) / name


def cmd_run(args) -> int:
    scenario = _scenario(args)
    setup = scenario.setup
    if args.emit_steps:
        setup = replace(setup, record_envelopes=True)

    # 1. Simulate
    logger.info("Running %d steps at coverage %.2f", scenario.steps, scenario.drift.coverage)
    records = simulate(scenario.drift, setup, scenario.steps, scenario.models)

    # 2. Metrics, cross-checked against the tabular recount
    metrics = {m: compute_metrics(records, m) for m in scenario.models}
    for model, m in metrics.items():
        if brute_force_metrics(records, model) != m:
            raise InvariantViolation(f"metric recount mismatch for {model.value}")
    check_invariants(metrics, setup)

    # 3. Output
    written = [reporting.write_json(_out(scenario, "metrics.json"),
                                    reporting.metrics_payload(scenario.summary(), scenario.steps, metrics))]
    if args.emit_steps:
        written.append(reporting.write_steps_csv(_out(scenario, "steps.csv"), records))
        audit = reporting.AuditLog().extend_from_steps(records)
        written.append(audit.write(_out(scenario, "audit.jsonl")))
        disagreements = reporting.replay_audit(audit, setup.requested, setup.universe)
        if disagreements:
            raise InvariantViolation(f"audit replay disagrees on {len(disagreements)} step(s), "
                                     f"first: {disagreements[0]}")

    print(reporting.render_banner(f"RUN {scenario.name}: n={scenario.steps}, seed={scenario.seed}"))
    print(reporting.render_table(reporting.metrics_frame(metrics)))
    for path in written:
        logger.info("Wrote %s", path)
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario = _scenario(args)
    sweep = coverage_sweep(scenario.drift, scenario.grid, scenario.sweep_steps, scenario.setup,
                           scenario.models, workers=scenario.workers)
    csv_path = reporting.write_sweep_csv(_out(scenario, "sweep.csv"), sweep)
    charts = [reporting.write_sweep_svg(_out(scenario, "sweep.svg"), sweep)]
    for rate in ('shr', 'ocr'):
        charts.append(reporting.write_sweep_svg(_out(scenario, f"sweep_{rate}.svg"), sweep, rate))

    print(reporting.render_banner(f"COVERAGE SWEEP {scenario.name}: n={sweep.n}/point, seed={sweep.seed}"))
    print(reporting.render_table(sweep.to_frame()))
    logger.info("Wrote %s and %s", csv_path, ", ".join(str(p) for p in charts))
    return EXIT_OK


def cmd_case_study(args) -> int:
    scenario = _scenario(args)
    report = run_case_study()
    path = reporting.write_json(_out(scenario, "case_study.json"), reporting.case_study_payload(report))

    print(reporting.render_banner("MODEL COMPARISON UNDER DRIFT"))
    print(reporting.render_table(report.to_frame()))
    logger.info("Wrote %s", path)
    return EXIT_OK


def cmd_witness(args) -> int:
    instance = load_instance(args.instance)
    witness = find_witness(instance)
    report = verify_witness(instance, witness) if witness is not None else None
    out_dir = args.out_dir or "results"
    path = reporting.write_json(_out(out_dir, "witness.json"), reporting.witness_payload(instance, witness, report))

    print(reporting.render_witness(instance, witness, report))
    logger.info("Wrote %s", path)
    if report is not None and not report.valid:
        raise InvariantViolation(f"witness failed verification: {report.failed()}")
    return EXIT_OK


def cmd_necessity_scan(args) -> int:
    instance = load_instance(args.instance)
    report = necessity_scan(instance)
    out_dir = args.out_dir or "results"
    path = reporting.write_json(_out(out_dir, "necessity_scan.json"), report.as_dict())

    print(reporting.render_banner(f"NECESSITY SCAN {instance.name}"))
    print(f"Assignments:                    {report.assignments}")
    print(f"F false:                        {report.authority_false}")
    print(f"Gate invalid executions:        {report.ram_invalid_executions}")
    print(f"Gate halts where F holds:       {report.ram_halts_on_valid}")
    print(f"Attestation invalid executions: {report.attestation_invalid_executions}")
    logger.info("Wrote %s", path)
    if report.ram_invalid_executions:
        raise InvariantViolation(f"gate executed on {report.ram_invalid_executions} invalid assignment(s)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=str(DEFAULT_SCENARIO),
                        help="Scenario YAML (default: scenarios/default.yaml)")
    common.add_argument("--seed", type=int, default=None,
                        help="Override the scenario seed")
    common.add_argument("--emit-steps", action="store_true",
                        help="Also write per-step CSV and the JSONL audit log (run only)")
    common.add_argument("--out-dir", default=None,
                        help="Output directory (default: the scenario's output.dir)")
    common.add_argument("--quiet", action="store_true",
                        help="Only log warnings and errors")

    parser = argparse.ArgumentParser(
        prog="ramgate",
        description="Authority gate experiments: drift simulation, coverage sweeps, counterexamples.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", parents=[common], help="Simulate one scenario and write metrics")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", parents=[common], help="IER/SHR/OCR over the coverage grid")
    p_sweep.set_defaults(func=cmd_sweep)

    p_case = sub.add_parser("case-study", parents=[common], help="Scripted three-case comparison table")
    p_case.set_defaults(func=cmd_case_study)

    for name, func, helptext in (
        ("witness", cmd_witness, "Search an instance for a counterexample witness"),
        ("necessity-scan", cmd_necessity_scan, "Run the gate over every assignment of an instance"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("instance", nargs="?", default=str(DEFAULT_INSTANCE),
                       help="Instance YAML (default: instances/transfer_gap.yaml)")
        p.set_defaults(func=func)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, SizeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as e:
        logger.error("Invariant violation: %s", e)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
