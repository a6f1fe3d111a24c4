"""Request/response models for the HTTP service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field

from ..experiment import EvolutionSettings, MaterialSettings, SimSettings


class HealthResponse(BaseModel):
    status: str
    version: str


class GenomeRequest(BaseModel):
    genome_hex: str


class RandomGenomeRequest(BaseModel):
    seed: int = 0


class GenomeResponse(BaseModel):
    genome_hex: str


class ModuleSpec(BaseModel):
    module: int
    parent: Optional[int]
    parent_face: int
    orientation: int
    actuation_face: int


class ControlSpec(BaseModel):
    frequency: float
    amplitude: float
    phase: float


class DecodeResponse(BaseModel):
    module_count: int
    morphology: list[ModuleSpec]
    control: list[ControlSpec]


class ReplayRequest(BaseModel):
    genome_hex: str
    stiffness_regime: str = "LOW"
    sim_duration: float = 10.0
    strut_length: float = 0.2
    sim: SimSettings = Field(default_factory=SimSettings)
    material: MaterialSettings = Field(default_factory=MaterialSettings)


class ReplayResponse(BaseModel):
    fitness: float
    gait: Optional[str]
    module_count: int
    airborne_fraction: Optional[float]
    diverged: bool


class EvolveJobRequest(BaseModel):
    stiffness_regime: str = "LOW"
    seed: int = 0
    strut_length: float = 0.2
    evolution: EvolutionSettings = Field(default_factory=EvolutionSettings)
    sim: SimSettings = Field(default_factory=SimSettings)
    material: MaterialSettings = Field(default_factory=MaterialSettings)


class JobCreated(BaseModel):
    job_id: str


class GenerationStats(BaseModel):
    generation: int
    best_fitness: float
    mean_fitness: float
    std_fitness: float
    best_module_count: int


class JobStatus(BaseModel):
    job_id: str
    state: str  # queued | running | done | failed
    generations_done: int
    generations_total: int
    latest: Optional[GenerationStats]
    champion: Optional[dict]
    error: Optional[str]
