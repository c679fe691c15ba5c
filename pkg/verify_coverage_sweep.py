import math
import sys

from scenario_config import load_scenario
from simulator import Model, coverage_sweep


def binomial_sigma(metrics):
    if metrics.ier is None or metrics.executions == 0:
        return 0.0
    p = float(metrics.ier)
    return math.sqrt(p * (1 - p) / metrics.executions)


def verify_coverage_sweep(steps=None, workers=None):
    print("=" * 80)
    print("COVERAGE SWEEP VERIFICATION")
    print("=" * 80)

    scenario = load_scenario()
    n = steps or scenario.sweep_steps
    print(f"\nScenario: {scenario.name}, seed {scenario.seed}, {n} steps per point")
    sweep = coverage_sweep(scenario.drift, scenario.grid, n, scenario.setup, scenario.models,
                           workers=workers or scenario.workers)

    print(f"\n{'Coverage':<10} | {'Attestation':<12} | {'Oracle':<12} | {'RAM':<12}")
    print("-" * 80)
    for c in sweep.grid:
        row = [sweep.at(c, m).ier for m in (Model.ATTESTATION, Model.ORACLE, Model.RAM)]
        cells = ["undefined" if v is None else f"{float(v):.3f}" for v in row]
        print(f"{c:<10.1f} | {cells[0]:<12} | {cells[1]:<12} | {cells[2]:<12}")

    checks = []

    # 1. Gate never executes on an invalid step
    ram = [sweep.at(c, Model.RAM) for c in sweep.grid]
    checks.append(("RAM IER = 0, SHR = 1, OCR = 0 at every point",
                   all(m.invalid_executions == 0 and m.halts_on_valid == 0 and m.shr == 1 for m in ram)))

    # 2. Attestation floor at full coverage
    att_full = sweep.at(sweep.grid[-1], Model.ATTESTATION)
    checks.append(("Attestation IER > 0 at full coverage", att_full.ier is not None and att_full.ier > 0))

    # 3. Non-increasing within 2 sigma
    att = [sweep.at(c, Model.ATTESTATION) for c in sweep.grid]
    monotone = True
    for lo, hi in zip(att, att[1:]):
        slack = 2 * math.hypot(binomial_sigma(lo), binomial_sigma(hi))
        if float(hi.ier) > float(lo.ier) + slack:
            monotone = False
    checks.append(("Attestation IER non-increasing in coverage (2 sigma)", monotone))

    # 4. Oracle dominance and shared floor
    checks.append(("Oracle IER <= attestation IER at every point",
                   all(sweep.at(c, Model.ORACLE).ier <= sweep.at(c, Model.ATTESTATION).ier for c in sweep.grid)))
    checks.append(("Oracle IER == attestation IER at full coverage",
                   sweep.at(sweep.grid[-1], Model.ORACLE).ier == att_full.ier))

    print("\n--- Structural checks ---")
    for label, ok in checks:
        print(f"{'✅' if ok else '❌'} {label}")

    return all(ok for _, ok in checks)


if __name__ == "__main__":
    steps = int(sys.argv[1]) if len(sys.argv) > 1 else None
    sys.exit(0 if verify_coverage_sweep(steps) else 1)
