import csv
import json
import re

import pytest
import yaml

import reporting
from cli_reporting import EXIT_CONFIG, EXIT_OK, main
from counterexample_lab import FiniteInstance, Witness, verify_witness
from drift_engine import DriftConfig
from scenario_config import DEFAULT_SCENARIO, load_scenario
from simulator import Model, SimulationSetup, coverage_sweep, format_rate, simulate

INSTANCES = DEFAULT_SCENARIO.parent.parent / "instances"


@pytest.fixture
def small_scenario(tmp_path):
    with open(DEFAULT_SCENARIO, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    data['steps'] = 800
    data['sweep'] = {'grid': [0.2, 0.6, 1.0], 'steps': 1200}
    data['workers'] = 1
    data['output'] = {'dir': str(tmp_path / "out")}
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def test_run_writes_metrics(small_scenario, tmp_path):
    assert main(["run", "--config", str(small_scenario), "--quiet"]) == EXIT_OK
    payload = json.loads((tmp_path / "out" / "metrics.json").read_text())
    assert payload['ram']['ier'] == 0.0
    assert payload['ram']['shr'] == 1.0
    assert payload['n'] == 800
    assert payload['scenario']['seed'] == 42


def test_run_emit_steps_writes_csv_and_replayable_audit(small_scenario, tmp_path):
    assert main(["run", "--config", str(small_scenario), "--emit-steps", "--quiet"]) == EXIT_OK
    rows = read_csv(tmp_path / "out" / "steps.csv")
    assert len(rows) == 800
    log = reporting.AuditLog.read(tmp_path / "out" / "audit.jsonl")
    assert len(log) == 800 * 3
    scenario = load_scenario(small_scenario)
    assert reporting.replay_audit(log, scenario.setup.requested, scenario.setup.universe) == []


def test_out_dir_flag_wins(small_scenario, tmp_path):
    target = tmp_path / "elsewhere"
    assert main(["run", "--config", str(small_scenario), "--out-dir", str(target), "--quiet"]) == EXIT_OK
    assert (target / "metrics.json").exists()


def test_malformed_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("universe: [I]\nsurprise: true\n", encoding="utf-8")
    assert main(["run", "--config", str(bad)]) == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["sweep", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG
    assert "not found" in capsys.readouterr().err


def test_unknown_command_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["explode"])
    assert exc.value.code == 2


def test_sweep_csv_and_svg(small_scenario, tmp_path):
    assert main(["sweep", "--config", str(small_scenario), "--quiet"]) == EXIT_OK
    csv_path = tmp_path / "out" / "sweep.csv"
    first = csv_path.read_bytes()

    with open(csv_path, newline="", encoding="utf-8") as f:
        header = next(csv.reader(f))
    assert header == ['coverage', 'model', 'ier', 'shr', 'ocr', 'executions', 'halts', 'n', 'seed']
    rows = read_csv(csv_path)
    assert len(rows) == 3 * 3
    assert {r['ier'] for r in rows if r['model'] == "ram"} == {"0.000000"}

    # same seed, same bytes
    assert main(["sweep", "--config", str(small_scenario), "--quiet"]) == EXIT_OK
    assert csv_path.read_bytes() == first

    svg = (tmp_path / "out" / "sweep.svg").read_text()
    lines = dict(re.findall(r'data-model="(\w+)"[^>]*points="([^"]*)"', svg))
    assert set(lines) == {"attestation", "oracle", "ram"}
    ram_y = {float(p.split(",")[1]) for p in lines["ram"].split()}
    assert ram_y == {round(reporting._y(0.0), 2)}
    assert len(lines["attestation"].split()) == 3


def svg_series(path):
    svg = path.read_text()
    return {model: [tuple(float(v) for v in p.split(",")) for p in points.split()]
            for model, points in re.findall(r'data-model="(\w+)"[^>]*points="([^"]*)"', svg)}


def test_sweep_writes_shr_and_ocr_charts(small_scenario, tmp_path):
    assert main(["sweep", "--config", str(small_scenario), "--quiet"]) == EXIT_OK
    out = tmp_path / "out"
    shr = svg_series(out / "sweep_shr.svg")
    ocr = svg_series(out / "sweep_ocr.svg")
    assert set(shr) == set(ocr) == {"attestation", "oracle", "ram"}
    assert all(len(points) == 3 for points in shr.values())
    # the gate halts on every invalid step and never on a valid one
    assert {y for _, y in shr["ram"]} == {round(reporting._y(1.0), 2)}
    assert {y for _, y in ocr["ram"]} == {round(reporting._y(0.0), 2)}
    assert [x for x, _ in ocr["ram"]] == [round(reporting._x(c), 2) for c in (0.2, 0.6, 1.0)]
    assert "Safe halt rate" in (out / "sweep_shr.svg").read_text()


def test_rate_chart_rejects_unknown_rate():
    sweep = coverage_sweep(DriftConfig(seed=3), grid=(1.0,), n=50)
    with pytest.raises(ValueError):
        reporting.render_rate_svg(sweep, 'latency')


def test_csv_cells_match_metrics(tmp_path):
    sweep = coverage_sweep(DriftConfig(seed=3), grid=(0.5, 1.0), n=600)
    path = reporting.write_sweep_csv(tmp_path / "sweep.csv", sweep)
    for row in read_csv(path):
        m = sweep.at(float(row['coverage']), Model(row['model']))
        assert row['ier'] == format_rate(m.ier)
        assert row['shr'] == format_rate(m.shr)
        assert int(row['executions']) == m.executions


def test_case_study_command(small_scenario, tmp_path, capsys):
    assert main(["case-study", "--config", str(small_scenario), "--quiet"]) == EXIT_OK
    payload = json.loads((tmp_path / "out" / "case_study.json").read_text())
    assert len(payload['rows']) == 9
    assert "Yes (in many cases)" in capsys.readouterr().out
    labels = {(r['case'], r['model']): r['executes_label'] for r in payload['rows']}
    assert labels[("B: hidden drift", "oracle")] == "Yes (in many cases)"
    assert labels[("A: observable drift", "ram")] == "No"
    assert labels[("Edge: legitimate change", "attestation")] == "Yes"


def test_witness_command_round_trips(tmp_path):
    out = tmp_path / "lab"
    assert main(["witness", str(INSTANCES / "transfer_gap.yaml"), "--out-dir", str(out), "--quiet"]) == EXIT_OK
    payload = json.loads((out / "witness.json").read_text())
    instance = FiniteInstance.from_dict(payload['instance'])
    witness = Witness.from_dict(payload['witness'])
    assert payload['verified'] is True
    assert witness.delta_star == "E"
    assert verify_witness(instance, witness).valid


def test_witness_command_gap_free(tmp_path, capsys):
    out = tmp_path / "lab"
    assert main(["witness", str(INSTANCES / "gap_free.yaml"), "--out-dir", str(out), "--quiet"]) == EXIT_OK
    assert "no witness" in capsys.readouterr().out
    assert json.loads((out / "witness.json").read_text())['witness'] is None


def test_necessity_scan_command(tmp_path):
    out = tmp_path / "lab"
    assert main(["necessity-scan", str(INSTANCES / "gap_free.yaml"), "--out-dir", str(out), "--quiet"]) == EXIT_OK
    payload = json.loads((out / "necessity_scan.json").read_text())
    assert payload['ram']['invalid_executions'] == 0
    assert payload['ram']['halts_on_valid'] == 0


def test_replay_detects_tampered_verdict():
    setup = SimulationSetup(record_envelopes=True)
    records = simulate(DriftConfig(seed=1), setup, n=50, models=[Model.RAM])
    log = reporting.AuditLog().extend_from_steps(records)
    first = next(iter(log))
    forged = reporting.AuditLog()
    forged.append(reporting.AuditRecord(step=first.step, model=first.model,
                                        verdict="narrow" if first.verdict != "narrow" else "execute",
                                        reason=first.reason, envelope=first.envelope))
    assert len(reporting.replay_audit(forged, setup.requested, setup.universe)) == 1


def test_audit_record_rejects_unknown_reason():
    with pytest.raises(ValueError):
        reporting.AuditRecord(step=1, model="ram", verdict="execute", reason="because")


def test_atomic_write_leaves_no_temp_files(tmp_path):
    reporting.write_json(tmp_path / "a" / "x.json", {'k': 1})
    assert [p.name for p in (tmp_path / "a").iterdir()] == ["x.json"]
    with pytest.raises(RuntimeError):
        def fail(tmp):
            raise RuntimeError("disk full")
        reporting.atomic_write(tmp_path / "a" / "y.json", fail)
    assert [p.name for p in (tmp_path / "a").iterdir()] == ["x.json"]
