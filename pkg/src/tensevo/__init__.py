"""Modular icosahedron-tensegrity robots: physics, genomes, and co-evolution."""

__version__ = "0.1.0"

from .control import ActuationGroup, ControlGene, rest_length_at, sawtooth
from .genome import Genome, crossover, decode, mutate, random_genome
from .geometry import Face, ModulePlacement, ModuleTemplate, assemble, build_canonical_module
from .physics import (
    BodyState,
    CableSpec,
    MaterialParams,
    SimParams,
    SimulationDiverged,
    Trajectory,
    run,
    settle,
    step,
)

__all__ = [
    "ActuationGroup",
    "BodyState",
    "CableSpec",
    "ControlGene",
    "Face",
    "Genome",
    "MaterialParams",
    "ModulePlacement",
    "ModuleTemplate",
    "SimParams",
    "SimulationDiverged",
    "Trajectory",
    "assemble",
    "build_canonical_module",
    "crossover",
    "decode",
    "mutate",
    "random_genome",
    "rest_length_at",
    "run",
    "sawtooth",
    "settle",
    "step",
]
