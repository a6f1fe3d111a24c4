"""Steady-state genetic algorithm over robot genomes.

One generation produces ``population_size * replacement_fraction`` offspring
by roulette selection of parent pairs, one-point crossover, and per-bit
mutation, then merges parents and offspring and drops the worst back down
to the population size (ties keep older individuals). All random draws for
a generation happen before any offspring is evaluated, in a fixed order, so
results do not depend on evaluation order or parallelism.

Roulette weights are the raw fitness values by default. The optional sigma
truncation scaling (weight = f - (mean - c * std), clamped at zero) mirrors
the classical GA-library scaling schemes and keeps selection pressure alive
when fitness values crowd together; see the OneMax harness in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .genome import Genome, decode, module_count_of, random_genome
from .geometry import build_canonical_module, assemble, DEFAULT_STRUT_LENGTH
from .physics import MaterialParams, SimParams, SimulationDiverged, run, settle

FitnessFn = Callable[[Genome], float]


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 50
    generations: int = 200
    replacement_fraction: float = 0.5
    crossover_rate: float = 0.9
    mutation_rate_per_bit: float = 0.01
    sim_duration: float = 10.0  # s, scored window
    stiffness_regime: str = "LOW"
    master_seed: int = 0
    fitness_scaling: str = "none"  # "none" (raw roulette) or "sigma"
    sigma_scaling_multiplier: float = 2.0
    strut_length: float = DEFAULT_STRUT_LENGTH
    sim_params: SimParams = field(default_factory=SimParams)
    material: Optional[MaterialParams] = None  # defaults to the regime's params

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if not (0.0 < self.replacement_fraction <= 1.0):
            raise ValueError("replacement_fraction must be in (0, 1]")
        if not (0.0 <= self.crossover_rate <= 1.0):
            raise ValueError("crossover_rate must be in [0, 1]")
        if not (0.0 <= self.mutation_rate_per_bit <= 1.0):
            raise ValueError("mutation_rate_per_bit must be in [0, 1]")
        if self.stiffness_regime.upper() not in ("LOW", "HIGH"):
            raise ValueError("stiffness_regime must be LOW or HIGH")
        if self.fitness_scaling not in ("none", "sigma"):
            raise ValueError("fitness_scaling must be 'none' or 'sigma'")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")

    def material_params(self) -> MaterialParams:
        if self.material is not None:
            return self.material
        return MaterialParams.for_regime(self.stiffness_regime)


@dataclass(frozen=True)
class Individual:
    genome: Genome
    fitness: float
    birth: int  # creation order; merge ties keep the smaller value
    module_count: int

    def __post_init__(self):
        if not (self.fitness >= 0.0 and math.isfinite(self.fitness)):
            raise ValueError("fitness must be finite and >= 0")


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_fitness: float
    mean_fitness: float
    std_fitness: float
    best_genome_hex: str
    best_module_count: int


@dataclass
class EvolutionHistory:
    records: list[GenerationRecord]
    best: Individual

    def best_fitness_series(self) -> list[float]:
        return [r.best_fitness for r in self.records]


_TEMPLATE_CACHE: dict[float, object] = {}


def _template(strut_length: float):
    tpl = _TEMPLATE_CACHE.get(strut_length)
    if tpl is None:
        tpl = build_canonical_module(strut_length)
        _TEMPLATE_CACHE[strut_length] = tpl
    return tpl


def evaluate_fitness(genome: Genome, config: EvolutionConfig) -> float:
    """Horizontal COM distance covered in the scored window; 0 on divergence."""
    decoded = decode(genome)
    robot = assemble(decoded.placements, _template(config.strut_length), config.material_params())
    try:
        rest = settle(robot, config.sim_params)
        trajectory = run(robot, rest, decoded.control, config.sim_duration, config.sim_params)
    except SimulationDiverged:
        return 0.0
    return trajectory.net_displacement()


def _selection_weights(fitnesses: np.ndarray, config: EvolutionConfig) -> np.ndarray:
    if config.fitness_scaling == "sigma":
        floor = fitnesses.mean() - config.sigma_scaling_multiplier * fitnesses.std()
        return np.maximum(fitnesses - floor, 0.0)
    return fitnesses


def _make_individual(genome: Genome, fitness: float, birth: int) -> Individual:
    return Individual(genome, fitness, birth, module_count_of(genome))


def _evaluate_all(
    genomes: Sequence[Genome], fitness_fn: FitnessFn, cache: Optional[dict]
) -> list[float]:
    out = []
    for g in genomes:
        key = g.key()
        if cache is not None and key in cache:
            out.append(cache[key])
            continue
        f = float(fitness_fn(g))
        if cache is not None:
            cache[key] = f
        out.append(f)
    return out


def ga_generation(
    population: list[Individual],
    config: EvolutionConfig,
    rng: np.random.Generator,
    fitness_fn: FitnessFn,
    cache: Optional[dict] = None,
) -> list[Individual]:
    """One steady-state replacement wave. Input population must be evaluated."""
    n = len(population)
    n_off = max(1, int(round(config.population_size * config.replacement_fraction)))
    fits = np.array([ind.fitness for ind in population], dtype=float)
    weights = _selection_weights(fits, config)
    total = float(weights.sum())
    cum = np.cumsum(weights)

    def pick() -> int:
        if total <= 0.0:
            return int(rng.integers(0, n))
        return min(int(np.searchsorted(cum, rng.random() * total, side="right")), n - 1)

    # variation: all RNG is consumed here, before any evaluation
    offspring_genomes: list[Genome] = []
    while len(offspring_genomes) < n_off:
        a = population[pick()].genome
        b = population[pick()].genome
        if rng.random() < config.crossover_rate:
            cut = int(rng.integers(1, len(a.bits)))
            c1 = Genome(np.concatenate([a.bits[:cut], b.bits[cut:]]))
            c2 = Genome(np.concatenate([b.bits[:cut], a.bits[cut:]]))
        else:
            c1, c2 = a, b
        for child in (c1, c2):
            mask = rng.random(len(child.bits)) < config.mutation_rate_per_bit
            mutated = Genome(child.bits ^ mask.astype(np.uint8))
            if len(offspring_genomes) < n_off:
                offspring_genomes.append(mutated)

    off_fits = _evaluate_all(offspring_genomes, fitness_fn, cache)
    next_birth = max(ind.birth for ind in population) + 1
    offspring = [
        _make_individual(g, f, next_birth + i)
        for i, (g, f) in enumerate(zip(offspring_genomes, off_fits))
    ]
    merged = sorted(population + offspring, key=lambda ind: (-ind.fitness, ind.birth))
    return merged[: config.population_size]


def _record(generation: int, population: list[Individual]) -> GenerationRecord:
    fits = np.array([ind.fitness for ind in population])
    best = min(population, key=lambda ind: (-ind.fitness, ind.birth))
    return GenerationRecord(
        generation=generation,
        best_fitness=float(fits.max()),
        mean_fitness=float(fits.mean()),
        std_fitness=float(fits.std()),
        best_genome_hex=best.genome.to_hex(),
        best_module_count=best.module_count,
    )


def run_evolution(
    config: EvolutionConfig,
    fitness_fn: Optional[FitnessFn] = None,
    on_generation: Optional[Callable[[GenerationRecord], None]] = None,
) -> EvolutionHistory:
    """Evolve from scratch; deterministic in (config, fitness_fn)."""
    if fitness_fn is None:
        fitness_fn = lambda g: evaluate_fitness(g, config)  # noqa: E731
    rng = np.random.default_rng(config.master_seed)
    cache: dict = {}
    genomes = [random_genome(rng) for _ in range(config.population_size)]
    fits = _evaluate_all(genomes, fitness_fn, cache)
    population = [_make_individual(g, f, i) for i, (g, f) in enumerate(zip(genomes, fits))]
    records = [_record(0, population)]
    if on_generation is not None:
        on_generation(records[0])
    for gen in range(1, config.generations + 1):
        population = ga_generation(population, config, rng, fitness_fn, cache)
        records.append(_record(gen, population))
        if on_generation is not None:
            on_generation(records[-1])
    best = min(population, key=lambda ind: (-ind.fitness, ind.birth))
    return EvolutionHistory(records, best)
