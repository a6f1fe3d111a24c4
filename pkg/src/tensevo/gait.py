"""Locomotion strategy labeling from trajectories.

A champion is labeled by three trajectory statistics: the fraction of
samples with no ground contact, the net body rotation about the horizontal
axis transverse to travel, and the rank correlation between each module's
position along the body tree and its actuation phase (a peristaltic wave
shows up as a strong monotone phase gradient).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation
from scipy.stats import spearmanr

from .genome import DecodedRobot
from .physics import Trajectory

STATIC_DISPLACEMENT = 0.02  # m
HOP_AIRBORNE_FRACTION = 0.15
CATERPILLAR_MAX_AIRBORNE = 0.05
CATERPILLAR_PHASE_CORRELATION = 0.7
CATERPILLAR_MIN_MODULES = 4
ROLL_ANGLE = math.pi  # rad
MIN_TRAJECTORY_DURATION = 2.0  # s


class ClassificationUnavailable(RuntimeError):
    """Trajectory too short to classify."""


class GaitClass(enum.Enum):
    STATIC = "Static"
    HOP = "Hop"
    ROLL = "Rol"
    CATERPILLAR = "CAT"
    MIXED = "Mixed"


@dataclass(frozen=True)
class GaitResult:
    gait: GaitClass
    label: str  # display label; "Hop/Rol" when both hop and roll fire
    displacement: float
    airborne_fraction: float
    roll_angle: float
    phase_wave: float


def _chain_depths(decoded: DecodedRobot) -> np.ndarray:
    depths = np.zeros(decoded.module_count)
    for p in decoded.placements:
        if p.parent_index is not None:
            depths[p.module_index] = depths[p.parent_index] + 1
    return depths


def _phase_wave(decoded: DecodedRobot) -> float:
    depths = _chain_depths(decoded)
    phases = np.array([g.phase for g in decoded.control])
    if np.all(depths == depths[0]) or np.all(phases == phases[0]):
        return 0.0
    rho = spearmanr(depths, phases).statistic
    return 0.0 if math.isnan(rho) else float(rho)


def _roll_angle(trajectory: Trajectory) -> float:
    """Net body rotation about the horizontal axis transverse to travel.

    The incremental body rotation between samples is the least-squares rigid
    rotation of the COM-centered node cloud; its rotation-vector component
    along the transverse axis is accumulated over the run.
    """
    travel = trajectory.com[-1, :2] - trajectory.com[0, :2]
    norm = float(np.hypot(travel[0], travel[1]))
    if norm < 1e-12:
        return 0.0
    axis = np.array([-travel[1] / norm, travel[0] / norm, 0.0])
    centered = trajectory.positions - trajectory.com[:, None, :]
    total = 0.0
    for k in range(len(trajectory.times) - 1):
        p, q = centered[k], centered[k + 1]
        h = p.T @ q
        u, _, vt = np.linalg.svd(h)
        d = np.sign(np.linalg.det(vt.T @ u.T))
        rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
        total += float(Rotation.from_matrix(rot).as_rotvec() @ axis)
    return total


def classify_gait(trajectory: Trajectory, decoded: DecodedRobot) -> GaitResult:
    """Label a completed run as Static, Hop, Rol, CAT, or Mixed ("Hop/Rol")."""
    if trajectory.duration < MIN_TRAJECTORY_DURATION:
        raise ClassificationUnavailable(
            f"trajectory covers {trajectory.duration:.2f} s; need >= {MIN_TRAJECTORY_DURATION} s"
        )
    displacement = trajectory.net_displacement()
    airborne = float((trajectory.contacts.sum(axis=1) == 0).mean())
    if displacement < STATIC_DISPLACEMENT:
        return GaitResult(GaitClass.STATIC, "Static", displacement, airborne, 0.0, 0.0)
    roll = _roll_angle(trajectory)
    wave = _phase_wave(decoded)
    hops = airborne > HOP_AIRBORNE_FRACTION
    rolls = abs(roll) > ROLL_ANGLE
    if hops and rolls:
        return GaitResult(GaitClass.MIXED, "Hop/Rol", displacement, airborne, roll, wave)
    if hops:
        return GaitResult(GaitClass.HOP, "Hop", displacement, airborne, roll, wave)
    if rolls:
        return GaitResult(GaitClass.ROLL, "Rol", displacement, airborne, roll, wave)
    if (
        airborne <= CATERPILLAR_MAX_AIRBORNE
        and abs(wave) > CATERPILLAR_PHASE_CORRELATION
        and decoded.module_count >= CATERPILLAR_MIN_MODULES
    ):
        return GaitResult(GaitClass.CATERPILLAR, "CAT", displacement, airborne, roll, wave)
    return GaitResult(GaitClass.MIXED, "Mixed", displacement, airborne, roll, wave)
