"""Fixed-length binary genome: direct encoding of body tree and control genes.

Layout (327 bits, MSB-first within each field):

    bits 0..2    header: module count = 2 + value
    9 slots of 36 bits each, slot i at offset 3 + 36*i:
        parent_raw      4 bits   parent = parent_raw mod i (slot 0: ignored)
        face_raw        3 bits   requested parent face
        orientation_raw 2 bits   orientation = value mod 3
        actuation_raw   3 bits   actuation face
        frequency_raw   8 bits   frequency = value / 255  (Hz)
        amplitude_raw   8 bits   amplitude = value / 255
        phase_raw       8 bits   phase = value / 256

Decoding is total: an occupied parent face is repaired by probing the next
faces cyclically, and if a parent has no free face the parent index itself
is advanced cyclically. Slots beyond the module count are inert junk DNA.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .control import ControlGene
from .geometry import CHILD_ATTACH_FACE, ModulePlacement

GENOME_LENGTH = 327
HEADER_BITS = 3
SLOT_BITS = 36
MAX_MODULES = 9
MIN_MODULES = 2

_FIELD_WIDTHS = (4, 3, 2, 3, 8, 8, 8)  # parent, face, orientation, actuation, f, A, phase


@dataclass(frozen=True)
class Genome:
    """Immutable 327-bit string."""

    bits: np.ndarray  # (327,) uint8 of 0/1

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.shape != (GENOME_LENGTH,):
            raise ValueError(f"genome must have exactly {GENOME_LENGTH} bits")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("genome bits must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def __eq__(self, other) -> bool:
        return isinstance(other, Genome) and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self) -> int:
        return hash(self.key())

    def key(self) -> bytes:
        """Compact hashable identity, used for fitness caching."""
        return np.packbits(self.bits).tobytes()

    def to_hex(self) -> str:
        return np.packbits(self.bits).tobytes().hex()

    @classmethod
    def from_hex(cls, text: str) -> "Genome":
        raw = bytes.fromhex(text)
        expected = (GENOME_LENGTH + 7) // 8
        if len(raw) != expected:
            raise ValueError(f"expected {expected} bytes, got {len(raw)}")
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:GENOME_LENGTH]
        return cls(bits)


@dataclass(frozen=True)
class DecodedRobot:
    placements: tuple[ModulePlacement, ...]
    control: tuple[ControlGene, ...]

    @property
    def module_count(self) -> int:
        return len(self.placements)


_POWERS = {w: (1 << np.arange(w - 1, -1, -1)).astype(np.int64) for w in set(_FIELD_WIDTHS) | {HEADER_BITS}}


def _field(bits: np.ndarray, offset: int, width: int) -> int:
    return int(bits[offset:offset + width] @ _POWERS[width])


def module_count_of(genome: Genome) -> int:
    """Module count from the header alone; repair never changes it."""
    return MIN_MODULES + (_field(genome.bits, 0, HEADER_BITS) % 8)


def _slot_fields(bits: np.ndarray, slot: int) -> tuple[int, ...]:
    offset = HEADER_BITS + SLOT_BITS * slot
    out = []
    for width in _FIELD_WIDTHS:
        out.append(_field(bits, offset, width))
        offset += width
    return tuple(out)


def decode(genome: Genome) -> DecodedRobot:
    """Decode bits into a valid module tree plus control genes (total function)."""
    bits = genome.bits
    count = MIN_MODULES + (_field(bits, 0, HEADER_BITS) % 8)
    occupied: list[set[int]] = [set()]
    placements = [ModulePlacement(0, None, 0, 0, _slot_fields(bits, 0)[3])]
    controls = []
    for slot in range(count):
        parent_raw, face_raw, orient_raw, act_raw, f_raw, a_raw, p_raw = _slot_fields(bits, slot)
        controls.append(ControlGene(f_raw / 255.0, a_raw / 255.0, p_raw / 256.0))
        if slot == 0:
            continue
        parent = parent_raw % slot
        face = face_raw
        # repair: probe faces cyclically; if the parent is full, advance the parent
        while True:
            for probe in range(8):
                candidate = (face + probe) % 8
                if candidate not in occupied[parent]:
                    face = candidate
                    break
            else:
                parent = (parent + 1) % slot
                continue
            break
        occupied[parent].add(face)
        occupied.append({CHILD_ATTACH_FACE})
        placements.append(ModulePlacement(slot, parent, face, orient_raw % 3, act_raw))
    return DecodedRobot(tuple(placements), tuple(controls))


def encode(
    module_count: int,
    slots: list[dict],
) -> Genome:
    """Build a genome from explicit field values (inverse of decode for in-range inputs).

    Each slot dict may set parent, face, orientation, actuation, frequency_raw,
    amplitude_raw, phase_raw; missing slots and fields are zero.
    """
    if not (MIN_MODULES <= module_count <= MAX_MODULES):
        raise ValueError("module_count must be in 2..9")
    bits = np.zeros(GENOME_LENGTH, dtype=np.uint8)

    def put(offset: int, width: int, value: int):
        if not (0 <= value < (1 << width)):
            raise ValueError(f"value {value} does not fit in {width} bits")
        for i in range(width):
            bits[offset + width - 1 - i] = (value >> i) & 1

    put(0, HEADER_BITS, module_count - MIN_MODULES)
    names = ("parent", "face", "orientation", "actuation",
             "frequency_raw", "amplitude_raw", "phase_raw")
    for slot, spec in enumerate(slots):
        offset = HEADER_BITS + SLOT_BITS * slot
        for name, width in zip(names, _FIELD_WIDTHS):
            put(offset, width, int(spec.get(name, 0)))
            offset += width
    return Genome(bits)


RngLike = Union[int, np.random.Generator]


def _as_rng(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def random_genome(rng: RngLike) -> Genome:
    """Fair-coin genome; deterministic per seed or generator state."""
    return Genome(_as_rng(rng).integers(0, 2, GENOME_LENGTH, dtype=np.uint8))


def mutate(genome: Genome, per_bit_rate: float, rng: RngLike) -> Genome:
    """Flip each bit independently with the given probability."""
    if not (0.0 <= per_bit_rate <= 1.0):
        raise ValueError("per_bit_rate must be in [0, 1]")
    mask = _as_rng(rng).random(GENOME_LENGTH) < per_bit_rate
    return Genome(genome.bits ^ mask.astype(np.uint8))


def crossover(a: Genome, b: Genome, rng: RngLike) -> tuple[Genome, Genome]:
    """One-point crossover: children swap suffixes at a uniform cut in [1, 326]."""
    cut = int(_as_rng(rng).integers(1, GENOME_LENGTH))
    child1 = np.concatenate([a.bits[:cut], b.bits[cut:]])
    child2 = np.concatenate([b.bits[:cut], a.bits[cut:]])
    return Genome(child1), Genome(child2)
