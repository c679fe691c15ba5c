import pytest
import yaml

from scenario_config import (
    DEFAULT_SCENARIO, SEED_ENV, ConfigError, load_instance, load_scenario, resolve_seed,
)
from simulator import Model
from state_model import Status


def scenario_file(tmp_path, **changes):
    with open(DEFAULT_SCENARIO, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    for key, value in changes.items():
        if value is None:
            data.pop(key, None)
        else:
            data[key] = value
    path = tmp_path / "scenario.yaml"
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def test_default_scenario_loads():
    scenario = load_scenario(DEFAULT_SCENARIO, env={})
    assert scenario.seed == 42
    assert scenario.seed_source == "config"
    assert scenario.drift.mix == (0.30, 0.25, 0.25, 0.20)
    assert scenario.setup.visible == {"I", "B", "R", "C"}
    assert scenario.setup.guards_universe
    assert scenario.grid[0] == 0.1 and scenario.grid[-1] == 1.0
    assert scenario.models == (Model.ATTESTATION, Model.ORACLE, Model.RAM)


def test_narrowing_scenario_loads():
    scenario = load_scenario(DEFAULT_SCENARIO.parent / "narrowing.yaml", env={})
    assert scenario.setup.requested.names == ('transfer', 'view_balance')
    assert scenario.setup.assumptions == {("E", Status.VALID)}
    assert scenario.setup.recovery_steps == 3


def test_seed_precedence():
    assert resolve_seed(7, 42, {SEED_ENV: "9"}) == (7, "flag")
    assert resolve_seed(None, 42, {SEED_ENV: "9"}) == (42, "config")
    assert resolve_seed(None, None, {SEED_ENV: "9"}) == (9, "env")
    assert resolve_seed(None, None, {}) == (42, "default")
    with pytest.raises(ConfigError):
        resolve_seed(None, None, {SEED_ENV: "many"})


def test_flag_overrides_config_seed():
    assert load_scenario(DEFAULT_SCENARIO, seed=123, env={}).seed == 123


def test_unknown_key_is_rejected(tmp_path):
    with pytest.raises(ConfigError, match="schema"):
        load_scenario(scenario_file(tmp_path, colour="blue"))


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_scenario(tmp_path / "absent.yaml")


def test_malformed_yaml(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("universe: [I, B\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="Malformed"):
        load_scenario(path)


def test_semantic_errors(tmp_path):
    with pytest.raises(ConfigError, match="requested"):
        load_scenario(scenario_file(tmp_path, requested="wire_out"))
    with pytest.raises(ConfigError):
        load_scenario(scenario_file(tmp_path, visible=["I", "Q"]))
    with pytest.raises(ConfigError, match="Oracle"):
        load_scenario(scenario_file(tmp_path, oracle={'extra_visible': ["E"], 'lag': 2}))
    with pytest.raises(ConfigError, match="assumptions"):
        load_scenario(scenario_file(tmp_path, assumptions=["I"]))
    with pytest.raises(ConfigError):
        load_scenario(scenario_file(tmp_path, sweep={'grid': [0.5, 0.4]}))


def test_mix_must_sum_to_one(tmp_path):
    drift = {'mix': {'observable': 0.5, 'delayed': 0.5, 'hidden': 0.5, 'ambiguous': 0.0}}
    with pytest.raises(ConfigError, match="mix"):
        load_scenario(scenario_file(tmp_path, drift=drift))


def test_seed_from_environment_when_config_has_none(tmp_path):
    drift = {'p_drift': 0.5, 'coverage': 0.2}
    scenario = load_scenario(scenario_file(tmp_path, drift=drift), env={SEED_ENV: "77"})
    assert (scenario.seed, scenario.seed_source) == (77, "env")


def test_instances_load():
    gap = load_instance(DEFAULT_SCENARIO.parent.parent / "instances" / "transfer_gap.yaml")
    assert gap.gap_sensitive
    free = load_instance(DEFAULT_SCENARIO.parent.parent / "instances" / "gap_free.yaml")
    assert not free.gap_sensitive


def test_instance_schema_errors(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("universe: [a, b]\nvisible: [a]\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="requirements"):
        load_instance(path)
    path.write_text("universe: [a, b]\nvisible: [c]\nrequirements: [a]\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_instance(path)
