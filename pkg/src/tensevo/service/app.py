"""FastAPI service wrapping the core package.

Quick inspection endpoints run synchronously; evolution runs are submitted
as background jobs and polled by id. The simulation kernels release the GIL,
so a running job does not block the event loop.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from typing import Optional

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..evolution import EvolutionConfig, GenerationRecord, run_evolution
from ..experiment import ExperimentConfig, champion_dict, simulate_genome
from ..gait import classify_gait
from ..genome import Genome, decode, random_genome
from ..geometry import build_canonical_module, template_as_dict
from ..physics import SimulationDiverged
from . import schemas


@dataclass
class _Job:
    request: schemas.EvolveJobRequest
    state: str = "queued"
    generations_done: int = 0
    latest: Optional[GenerationRecord] = None
    champion: Optional[dict] = None
    error: Optional[str] = None
    lock: threading.Lock = field(default_factory=threading.Lock)


def _evolution_config(req) -> EvolutionConfig:
    ev = req.evolution if hasattr(req, "evolution") else None
    kwargs = dict(
        stiffness_regime=req.stiffness_regime.upper(),
        strut_length=req.strut_length,
        sim_params=req.sim.to_params(),
        material=req.material.to_params(req.stiffness_regime),
    )
    if ev is not None:
        kwargs.update(
            population_size=ev.population_size,
            generations=ev.generations,
            replacement_fraction=ev.replacement_fraction,
            crossover_rate=ev.crossover_rate,
            mutation_rate_per_bit=ev.mutation_rate_per_bit,
            sim_duration=ev.sim_duration,
            fitness_scaling=ev.fitness_scaling,
            sigma_scaling_multiplier=ev.sigma_scaling_multiplier,
            master_seed=req.seed,
        )
    else:
        kwargs.update(sim_duration=req.sim_duration)
    return EvolutionConfig(**kwargs)


def create_app() -> FastAPI:
    app = FastAPI(title="tensevo", version=__version__)
    jobs: dict[str, _Job] = {}

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/module-template")
    def module_template(strut_length: float = 0.2):
        try:
            return template_as_dict(build_canonical_module(strut_length))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/genome/random", response_model=schemas.GenomeResponse)
    def genome_random(req: schemas.RandomGenomeRequest):
        return schemas.GenomeResponse(genome_hex=random_genome(req.seed).to_hex())

    @app.post("/genome/decode", response_model=schemas.DecodeResponse)
    def genome_decode(req: schemas.GenomeRequest):
        try:
            decoded = decode(Genome.from_hex(req.genome_hex))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return schemas.DecodeResponse(
            module_count=decoded.module_count,
            morphology=[
                schemas.ModuleSpec(
                    module=p.module_index,
                    parent=p.parent_index,
                    parent_face=p.parent_face,
                    orientation=p.orientation,
                    actuation_face=p.actuation_face,
                )
                for p in decoded.placements
            ],
            control=[
                schemas.ControlSpec(frequency=g.frequency, amplitude=g.amplitude, phase=g.phase)
                for g in decoded.control
            ],
        )

    @app.post("/replay", response_model=schemas.ReplayResponse)
    def replay_genome(req: schemas.ReplayRequest):
        try:
            genome = Genome.from_hex(req.genome_hex)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        config = _evolution_config(req)
        try:
            fitness, trajectory, decoded = simulate_genome(genome, config)
        except SimulationDiverged:
            return schemas.ReplayResponse(
                fitness=0.0, gait=None, module_count=decode(genome).module_count,
                airborne_fraction=None, diverged=True,
            )
        gait = classify_gait(trajectory, decoded)
        return schemas.ReplayResponse(
            fitness=fitness,
            gait=gait.label,
            module_count=decoded.module_count,
            airborne_fraction=gait.airborne_fraction,
            diverged=False,
        )

    def _job_worker(job_id: str):
        job = jobs[job_id]
        config = _evolution_config(job.request)
        with job.lock:
            job.state = "running"

        def on_generation(record: GenerationRecord):
            with job.lock:
                job.generations_done = record.generation
                job.latest = record

        try:
            history = run_evolution(config, on_generation=on_generation)
            best = history.best
            champ = champion_dict(best.genome, best.fitness, config.stiffness_regime,
                                  config.master_seed, None)
            with job.lock:
                job.champion = champ
                job.state = "done"
        except Exception as exc:  # surface worker failures through the API
            with job.lock:
                job.state = "failed"
                job.error = str(exc)

    @app.post("/evolve/jobs", response_model=schemas.JobCreated, status_code=202)
    def submit_job(req: schemas.EvolveJobRequest):
        if req.stiffness_regime.upper() not in ("LOW", "HIGH"):
            raise HTTPException(status_code=422, detail="stiffness_regime must be LOW or HIGH")
        job_id = uuid.uuid4().hex
        jobs[job_id] = _Job(request=req)
        threading.Thread(target=_job_worker, args=(job_id,), daemon=True).start()
        return schemas.JobCreated(job_id=job_id)

    @app.get("/evolve/jobs/{job_id}", response_model=schemas.JobStatus)
    def job_status(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job id")
        with job.lock:
            latest = None
            if job.latest is not None:
                latest = schemas.GenerationStats(
                    generation=job.latest.generation,
                    best_fitness=job.latest.best_fitness,
                    mean_fitness=job.latest.mean_fitness,
                    std_fitness=job.latest.std_fitness,
                    best_module_count=job.latest.best_module_count,
                )
            return schemas.JobStatus(
                job_id=job_id,
                state=job.state,
                generations_done=job.generations_done,
                generations_total=job.request.evolution.generations,
                latest=latest,
                champion=job.champion,
                error=job.error,
            )

    return app


app = create_app()
