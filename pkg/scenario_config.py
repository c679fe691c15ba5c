"""
Scenario and instance files: YAML, checked against the published JSON
schemas, then checked for meaning (registered components, consistent drift
targets, oracle channel, coverage grid).
"""
import json
import logging
import os
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Optional

import yaml
from jsonschema import Draft202012Validator

from authority_gate import ActionClass
from baseline_models import OracleChannel
from counterexample_lab import FiniteInstance
from drift_engine import DEFAULT_MIX, DEFAULT_TARGETS, KIND_ORDER, DriftConfig, DriftKind, check_oracle_channel
from simulator import ALL_MODELS, DEFAULT_GRID, Model, SimulationSetup, check_grid
from state_model import Status, Universe, UniverseError

logger = logging.getLogger(__name__)

HERE = Path(__file__).resolve().parent
SCENARIO_SCHEMA = HERE / "scenario_schema.json"
INSTANCE_SCHEMA = HERE / "instance_schema.json"
DEFAULT_SCENARIO = HERE / "scenarios" / "default.yaml"

SEED_ENV = "RAMGATE_SEED"
DEFAULT_SEED = 42
DEFAULT_STEPS = 100_000


class ConfigError(ValueError):
    """Scenario or instance file missing, unreadable, or invalid."""


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    drift: DriftConfig
    setup: SimulationSetup
    action_classes: Mapping
    requested_name: str
    models: tuple = ALL_MODELS
    steps: int = DEFAULT_STEPS
    grid: tuple = DEFAULT_GRID
    sweep_steps: int = DEFAULT_STEPS
    workers: int = 1
    out_dir: str = "results"
    seed_source: str = "default"

    @property
    def seed(self) -> int:
        return self.drift.seed

    def with_out_dir(self, out_dir: str) -> 'ScenarioConfig':
        return replace(self, out_dir=out_dir)

    def summary(self) -> dict:
        return {
            'name': self.name,
            'universe': list(self.setup.universe),
            'requested': self.requested_name,
            'privileges': {p.name: sorted(p.requires) for p in self.setup.requested.privileges},
            'visible': sorted(self.setup.visible),
            'oracle': {'extra_visible': sorted(self.setup.oracle.extra_visible),
                       'lag': self.setup.oracle.propagation_lag},
            'p_drift': self.drift.p_drift,
            'mix': dict(zip((k.value for k in KIND_ORDER), self.drift.mix)),
            'coverage': self.drift.coverage,
            'seed': self.seed,
            'seed_source': self.seed_source,
            'episode_length': self.setup.episode_length,
            'recovery_steps': self.setup.recovery_steps,
            'steps': self.steps,
        }


@lru_cache(maxsize=None)
def _validator(schema_path: str) -> Draft202012Validator:
    with open(schema_path, "r", encoding="utf-8") as f:
        schema = json.load(f)
    Draft202012Validator.check_schema(schema)
    return Draft202012Validator(schema)


def read_yaml(path) -> dict:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"File not found: {path}") from None
    except OSError as e:
        raise ConfigError(f"Cannot read {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Malformed YAML in {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def validate_schema(data: dict, schema_path: Path, label: str):
    errors = sorted(_validator(str(schema_path)).iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        where = "/".join(str(p) for p in first.absolute_path) or "<root>"
        raise ConfigError(f"{label}: schema violation at {where}: {first.message}")


def resolve_seed(flag: Optional[int], configured: Optional[int], env: Optional[Mapping] = None):
    """
    Seed precedence: command-line flag, then the scenario's drift.seed, then
    the RAMGATE_SEED environment variable, then 42.

    Returns:
        tuple: (seed, source)
    """
    if flag is not None:
        return int(flag), "flag"
    if configured is not None:
        return int(configured), "config"
    env = os.environ if env is None else env
    raw = env.get(SEED_ENV)
    if raw not in (None, ""):
        try:
            return int(raw), "env"
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None
    return DEFAULT_SEED, "default"


def _build(data: dict, label: str, seed_flag: Optional[int], env: Optional[Mapping]) -> ScenarioConfig:
    # 1. Universe and action classes
    universe = Universe(tuple(data['universe']))
    action_classes = {name: ActionClass.of(reqs) for name, reqs in data['action_classes'].items()}
    requested_name = data['requested']
    if requested_name not in action_classes:
        raise ConfigError(f"{label}: requested class '{requested_name}' is not declared "
                          f"(have {sorted(action_classes)})")
    for cls in action_classes.values():
        universe.check(cls.components)

    # 2. Drift
    drift = data['drift']
    mix = drift.get('mix')
    mix = tuple(mix[k.value] for k in KIND_ORDER) if mix else DEFAULT_MIX
    targets = drift.get('targets')
    targets = tuple((k, tuple(targets[k.value])) for k in KIND_ORDER) if targets else DEFAULT_TARGETS
    for _, comps in targets:
        universe.check(comps)
    seed, source = resolve_seed(seed_flag, drift.get('seed'), env)
    config = DriftConfig(p_drift=drift.get('p_drift', 0.5), mix=mix, seed=seed,
                         coverage=drift.get('coverage', 1.0), targets=targets)

    # 3. Channels
    oracle_data = data.get('oracle', {})
    oracle = OracleChannel(frozenset(oracle_data.get('extra_visible', ["R"])), oracle_data.get('lag', 2))
    check_oracle_channel(oracle.extra_visible, config)

    # Assumptions only make sense where no channel can ever prove the opposite
    assumptions = frozenset(data.get('assumptions', ()))
    unprovable = set(config.targets_for(DriftKind.HIDDEN)) | set(config.targets_for(DriftKind.AMBIGUOUS))
    universe.check(assumptions)
    if not assumptions <= unprovable:
        raise ConfigError(f"{label}: assumptions may only cover hidden or ambiguous drift targets, "
                          f"got {sorted(assumptions - unprovable)}")

    setup = SimulationSetup(
        universe=universe,
        requested=action_classes[requested_name],
        visible=frozenset(data['visible']),
        oracle=oracle,
        episode_length=data.get('episode', {}).get('length', 4),
        recovery_steps=drift.get('recovery_steps'),
        assumptions=frozenset((c, Status.VALID) for c in assumptions),
    )

    # 4. Run shape
    sweep = data.get('sweep', {})
    steps = data.get('steps', DEFAULT_STEPS)
    return ScenarioConfig(
        name=data.get('name', label),
        drift=config,
        setup=setup,
        action_classes=action_classes,
        requested_name=requested_name,
        models=tuple(Model(m) for m in data.get('models', [m.value for m in ALL_MODELS])),
        steps=steps,
        grid=check_grid(sweep.get('grid', DEFAULT_GRID)),
        sweep_steps=sweep.get('steps', steps),
        workers=data.get('workers', 1),
        out_dir=data.get('output', {}).get('dir', "results"),
        seed_source=source,
    )


def load_scenario(path=DEFAULT_SCENARIO, seed: Optional[int] = None,
                  env: Optional[Mapping] = None) -> ScenarioConfig:
    """
    Load and validate a scenario file.

    Args:
        path: YAML scenario
        seed: Command-line override; wins over every other seed source
        env: Environment mapping for RAMGATE_SEED (defaults to os.environ)

    Raises:
        ConfigError: on any problem with the file
    """
    label = str(path)
    data = read_yaml(path)
    validate_schema(data, SCENARIO_SCHEMA, label)
    try:
        scenario = _build(data, label, seed, env)
    except ConfigError:
        raise
    except (UniverseError, ValueError) as e:
        raise ConfigError(f"{label}: {e}") from e
    logger.info("Loaded scenario '%s' (seed %d from %s)", scenario.name, scenario.seed, scenario.seed_source)
    return scenario


def load_instance(path) -> FiniteInstance:
    label = str(path)
    data = read_yaml(path)
    validate_schema(data, INSTANCE_SCHEMA, label)
    data.setdefault('name', Path(path).stem)
    try:
        return FiniteInstance.from_dict(data)
    except (UniverseError, ValueError) as e:
        raise ConfigError(f"{label}: {e}") from e
