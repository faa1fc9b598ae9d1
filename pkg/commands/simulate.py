# commands/simulate.py

from pathlib import Path

from models.schemas import RunConfig
from models.simulator_schemas import ScenarioConfig
from services.simulator_service import generate_scenario, load_scenario_config

DEFAULT_OUT = Path("simulated")


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="Write a synthetic scan-rescan dataset")
    parser.add_argument("--scenario", type=Path, default=None, help="scenario JSON (defaults if omitted)")
    parser.add_argument("--subjects", type=int, default=None)
    parser.add_argument("--samples", type=int, default=None, help="samples per scan for every method")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=Path, default=None, help=f"output directory (default {DEFAULT_OUT})")
    parser.add_argument("--threads", type=int, default=None)


def scenario_from(cfg: RunConfig) -> ScenarioConfig:
    """Scenario file (or defaults) with the command-line overrides applied"""
    scenario = load_scenario_config(cfg.scenario) if cfg.scenario else ScenarioConfig()
    updates = {}
    if cfg.subjects is not None:
        updates["n_subjects"] = cfg.subjects
    if cfg.samples is not None:
        updates["samples_per_scan"] = cfg.samples
    if cfg.seed is not None:
        updates["seed"] = cfg.seed
    if not updates:
        return scenario
    return ScenarioConfig.model_validate({**scenario.model_dump(), **updates})


def run(cfg: RunConfig) -> int:
    try:
        scenario = scenario_from(cfg)
        out_dir = cfg.out or scenario.output_dir or DEFAULT_OUT
        manifest_path = generate_scenario(scenario, Path(out_dir), threads=cfg.threads)
    except Exception as e:
        print(f"❌ Error simulating scenario: {e}")
        raise
    print(manifest_path)
    return 0
