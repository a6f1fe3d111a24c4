"""Experiment configuration, batch evolution runs, and result artifacts.

A single JSON config describes a batch: one evolution run per (stiffness
regime, seed) pair. Each run writes a history CSV and a champion JSON plus
a completion marker, so an interrupted batch resumes where it stopped. A
summary table mirroring the per-run results is written once at the end.
Everything is a pure function of the config bytes and seeds.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .control import ControlGene
from .evolution import EvolutionConfig, EvolutionHistory, evaluate_fitness, run_evolution
from .gait import GaitResult, classify_gait
from .genome import DecodedRobot, Genome, decode
from .geometry import DEFAULT_STRUT_LENGTH, assemble, build_canonical_module
from .physics import (
    MaterialParams,
    SimParams,
    SimulationDiverged,
    Trajectory,
    run,
    settle,
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment config; message carries location hints."""


class SimSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")
    timestep: float = 2.5e-4
    gravity: float = 9.81
    ground_normal_stiffness: float = 5000.0
    ground_normal_damping: float = 8.0
    friction_coefficient: float = 0.6
    constraint_iterations: int = 4
    settle_duration: float = 2.0
    ambient_damping_rate: float = 2.0
    settle_damping_rate: float = 25.0
    divergence_speed_limit: float = 25.0

    def to_params(self) -> SimParams:
        return SimParams(**self.model_dump())


class MaterialSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")
    low_youngs_modulus: float = 20e6
    cable_cross_section: float = 1e-6
    cable_damping_ratio: float = 0.1
    cable_prestress: float = 0.05

    def to_params(self, regime: str) -> MaterialParams:
        ratio = 4.0 if regime.upper() == "HIGH" else 1.0
        return MaterialParams(
            youngs_modulus=self.low_youngs_modulus * ratio,
            cable_cross_section=self.cable_cross_section,
            cable_damping_ratio=self.cable_damping_ratio,
            cable_prestress=self.cable_prestress,
        )


class EvolutionSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")
    population_size: int = 50
    generations: int = 200
    replacement_fraction: float = 0.5
    crossover_rate: float = 0.9
    mutation_rate_per_bit: float = 0.01
    sim_duration: float = 10.0
    fitness_scaling: str = "none"
    sigma_scaling_multiplier: float = 2.0


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    schema_version: int = SCHEMA_VERSION
    output_directory: str = "results"
    run_count: int = 5
    seed_list: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    stiffness_regimes: list[str] = Field(default_factory=lambda: ["HIGH", "LOW"])
    workers: int = 1
    strut_length: float = DEFAULT_STRUT_LENGTH
    sim: SimSettings = Field(default_factory=SimSettings)
    material: MaterialSettings = Field(default_factory=MaterialSettings)
    evolution: EvolutionSettings = Field(default_factory=EvolutionSettings)

    def model_post_init(self, _ctx) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")
        if self.run_count < 0:
            raise ValueError("run_count must be >= 0")
        if len(self.seed_list) < self.run_count:
            raise ValueError("seed_list must provide at least run_count seeds")
        for regime in self.stiffness_regimes:
            if regime.upper() not in ("LOW", "HIGH"):
                raise ValueError(f"unknown stiffness regime {regime!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def evolution_config(self, regime: str, seed: int) -> EvolutionConfig:
        ev = self.evolution
        return EvolutionConfig(
            population_size=ev.population_size,
            generations=ev.generations,
            replacement_fraction=ev.replacement_fraction,
            crossover_rate=ev.crossover_rate,
            mutation_rate_per_bit=ev.mutation_rate_per_bit,
            sim_duration=ev.sim_duration,
            stiffness_regime=regime.upper(),
            master_seed=seed,
            fitness_scaling=ev.fitness_scaling,
            sigma_scaling_multiplier=ev.sigma_scaling_multiplier,
            strut_length=self.strut_length,
            sim_params=self.sim.to_params(),
            material=self.material.to_params(regime),
        )

    def runs(self) -> list[tuple[str, int]]:
        return [
            (regime.upper(), seed)
            for regime in self.stiffness_regimes
            for seed in self.seed_list[: self.run_count]
        ]


def _line_hint(raw: str, key: str) -> str:
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if f'"{key}"' in line:
            return f" (line {lineno})"
    return ""


def parse_config(raw: str) -> ExperimentConfig:
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})") from exc
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        parts = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            key = str(err["loc"][-1]) if err["loc"] else ""
            parts.append(f"{loc}: {err['msg']}{_line_hint(raw, key)}")
        raise ConfigError("invalid config: " + "; ".join(parts)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(raw)


def dump_config(config: ExperimentConfig) -> str:
    return json.dumps(config.model_dump(), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


def run_label(regime: str, seed: int) -> str:
    return f"{regime.upper()}_s{seed}"


def history_csv_text(history: EvolutionHistory) -> str:
    lines = ["generation,best_fitness,mean_fitness,std_fitness,best_module_count"]
    for r in history.records:
        lines.append(
            f"{r.generation},{r.best_fitness!r},{r.mean_fitness!r},{r.std_fitness!r},{r.best_module_count}"
        )
    return "\n".join(lines) + "\n"


def champion_dict(
    genome: Genome,
    fitness: float,
    regime: str,
    seed: int,
    gait: Optional[GaitResult],
) -> dict:
    decoded = decode(genome)
    return {
        "schema_version": SCHEMA_VERSION,
        "stiffness_regime": regime.upper(),
        "seed": seed,
        "fitness": fitness,
        "module_count": decoded.module_count,
        "gait": gait.label if gait is not None else None,
        "genome_hex": genome.to_hex(),
        "morphology": [
            {
                "module": p.module_index,
                "parent": p.parent_index,
                "parent_face": p.parent_face,
                "orientation": p.orientation,
                "actuation_face": p.actuation_face,
            }
            for p in decoded.placements
        ],
        "control": [
            {"frequency": g.frequency, "amplitude": g.amplitude, "phase": g.phase}
            for g in decoded.control
        ],
    }


def load_champion(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if "genome_hex" not in data:
        raise ConfigError(f"{path} is not a champion artifact (missing genome_hex)")
    return data


def simulate_genome(
    genome: Genome, config: EvolutionConfig
) -> tuple[float, Trajectory, DecodedRobot]:
    """Settle + scored run; raises SimulationDiverged on blow-up."""
    decoded = decode(genome)
    robot = assemble(decoded.placements, build_canonical_module(config.strut_length),
                     config.material_params())
    rest = settle(robot, config.sim_params)
    trajectory = run(robot, rest, decoded.control, config.sim_duration, config.sim_params)
    return trajectory.net_displacement(), trajectory, decoded


def _classify_champion(genome: Genome, config: EvolutionConfig) -> Optional[GaitResult]:
    try:
        _, trajectory, decoded = simulate_genome(genome, config)
        return classify_gait(trajectory, decoded)
    except SimulationDiverged:
        return None


def perform_run(config: ExperimentConfig, regime: str, seed: int, out_dir: Path) -> dict:
    """One evolution run: history CSV, champion JSON, done marker."""
    label = run_label(regime, seed)
    history_path = out_dir / f"history_{label}.csv"
    champion_path = out_dir / f"champion_{label}.json"
    marker_path = out_dir / f"{label}.done"
    if marker_path.exists() and history_path.exists() and champion_path.exists():
        return json.loads(marker_path.read_text())

    ev_config = config.evolution_config(regime, seed)
    history = run_evolution(ev_config)
    best = history.best
    gait = _classify_champion(best.genome, ev_config)
    history_path.write_text(history_csv_text(history))
    champ = champion_dict(best.genome, best.fitness, regime, seed, gait)
    champion_path.write_text(json.dumps(champ, indent=2) + "\n")
    row = {
        "regime": regime.upper(),
        "seed": seed,
        "best_fitness": best.fitness,
        "best_module_count": best.module_count,
        "gait": champ["gait"],
    }
    marker_path.write_text(json.dumps(row) + "\n")
    return row


def _perform_run_remote(config_json: str, regime: str, seed: int, out_dir: str) -> dict:
    config = ExperimentConfig.model_validate_json(config_json)
    return perform_run(config, regime, seed, Path(out_dir))


def summary_csv_text(rows: list[dict]) -> str:
    lines = ["run,regime,seed,best_fitness,best_module_count,gait"]
    for i, row in enumerate(rows, start=1):
        lines.append(
            f"{i},{row['regime']},{row['seed']},{row['best_fitness']!r},"
            f"{row['best_module_count']},{row['gait']}"
        )
    return "\n".join(lines) + "\n"


def summary_table_text(rows: list[dict]) -> str:
    """Aligned table: one column per run, metric rows."""
    headers = ["Evolution", "Stiffness", "Best Individual's number of modules",
               "Best Individual's Fitness", "Best Individual's Strategy"]
    columns = [
        [str(i + 1), row["regime"].capitalize(), str(row["best_module_count"]),
         f"{row['best_fitness']:.3f}", str(row["gait"])]
        for i, row in enumerate(rows)
    ]
    widths = [max(len(h) for h in headers)] + [
        max(len(cell) for cell in col) for col in columns
    ]
    lines = []
    for metric_idx, header in enumerate(headers):
        cells = [header.ljust(widths[0])]
        cells += [columns[c][metric_idx].rjust(widths[c + 1]) for c in range(len(columns))]
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> list[dict]:
    """Run the whole batch (resuming finished runs) and write the summary."""
    out_dir = Path(config.output_directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = config.runs()
    n_workers = workers if workers is not None else config.workers
    rows: list[Optional[dict]] = [None] * len(runs)
    pending = [
        (i, regime, seed)
        for i, (regime, seed) in enumerate(runs)
    ]
    if n_workers > 1 and len(pending) > 1:
        config_json = config.model_dump_json()
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = [
                (i, pool.submit(_perform_run_remote, config_json, regime, seed, str(out_dir)))
                for i, regime, seed in pending
            ]
            for i, fut in futures:
                rows[i] = fut.result()
    else:
        for i, regime, seed in pending:
            rows[i] = perform_run(config, regime, seed, out_dir)
    done = [row for row in rows if row is not None]
    (out_dir / "summary.csv").write_text(summary_csv_text(done))
    (out_dir / "summary.txt").write_text(summary_table_text(done))
    return done


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------


def replay(
    champion: dict, config: ExperimentConfig, out_path: Optional[Path] = None
) -> tuple[float, Optional[GaitResult], list[str]]:
    """Re-simulate a stored champion under the config's physics.

    Returns (fitness, gait, warnings). The trajectory CSV is written to
    ``out_path`` when given. A regime mismatch between artifact and config
    warns and proceeds with the config's regime.
    """
    warnings: list[str] = []
    regimes = [r.upper() for r in config.stiffness_regimes]
    regime = str(champion.get("stiffness_regime", "LOW")).upper()
    if regime not in regimes:
        warnings.append(
            f"champion regime {regime} not in config regimes {regimes}; using {regimes[0]}"
        )
        regime = regimes[0]
    genome = Genome.from_hex(champion["genome_hex"])
    ev_config = config.evolution_config(regime, int(champion.get("seed", 0)))
    try:
        fitness, trajectory, decoded = simulate_genome(genome, ev_config)
    except SimulationDiverged as exc:
        warnings.append(f"simulation diverged at t={exc.time:.3f} s; fitness 0")
        return 0.0, None, warnings
    gait = classify_gait(trajectory, decoded)
    if out_path is not None:
        trajectory.to_csv(out_path)
    return fitness, gait, warnings
