"""Open-loop sawtooth actuation: per-module signal genes mapped to cable rest lengths.

Each module owns one actuation group: three cables joining a connective face
to its opposite face through the module center. A servo-like sawtooth winds
the rest length down over one period and releases it instantly, so the
module stores elastic energy slowly and snaps back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

MAX_CONTRACTION = 0.35  # fraction of the face-pair natural length
# Stall force of the tendon winch. The servo tracks its commanded rest length
# only while the structure resists with less than this tension; a stiffer
# module therefore reaches a smaller fraction of the commanded contraction.
SERVO_FORCE_LIMIT = 5.0  # N


@dataclass(frozen=True)
class ControlGene:
    """Sawtooth parameters for one module, all normalized to [0, 1]."""

    frequency: float  # Hz, 0..1
    amplitude: float  # 0..1
    phase: float  # fraction of one period, 0..1 (exclusive)

    def __post_init__(self):
        if not (0.0 <= self.frequency <= 1.0):
            raise ValueError(f"frequency {self.frequency} outside [0, 1]")
        if not (0.0 <= self.amplitude <= 1.0):
            raise ValueError(f"amplitude {self.amplitude} outside [0, 1]")
        if not (0.0 <= self.phase < 1.0):
            raise ValueError(f"phase {self.phase} outside [0, 1)")


@dataclass(frozen=True)
class ActuationGroup:
    """The three center-crossing cables a module contracts as one unit."""

    cable_ids: tuple[int, int, int]
    natural_length: float  # vertex-to-opposite-vertex distance, meters
    max_contraction: float = MAX_CONTRACTION

    def __post_init__(self):
        if len(self.cable_ids) != 3:
            raise ValueError("actuation group needs exactly 3 cables")
        if not (0.0 < self.max_contraction < 1.0):
            raise ValueError("max_contraction must be in (0, 1)")


def sawtooth(t: float, gene: ControlGene) -> float:
    """Signal value in [0, 1): fractional part of frequency*t + phase.

    Ramps 0 -> 1 over one period, then resets instantaneously.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    s, _ = math.modf(gene.frequency * t + gene.phase)
    return s


def rest_length_at(t: float, gene: ControlGene, group: ActuationGroup) -> float:
    """Commanded rest length of every cable in the group at time t."""
    s = sawtooth(t, gene)
    return group.natural_length * (1.0 - group.max_contraction * gene.amplitude * s)
