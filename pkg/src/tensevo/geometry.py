"""Icosahedron tensegrity module geometry and multi-module assembly.

The canonical module uses the regular-icosahedron vertex set: cyclic
permutations of (0, +-1, +-phi), scaled so each strut has the requested
length. Struts join the two vertices that differ only in the sign of the
phi coordinate, giving three parallel pairs aligned with the coordinate
axes. Cables are the 30 icosahedron edges minus the 6 edges that join the
two struts of a parallel pair. The 8 cable-bounded triangles are the
connective faces; their outward normals are the (+-1, +-1, +-1)/sqrt(3)
directions.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .control import SERVO_FORCE_LIMIT, ActuationGroup
from .physics import ACTUATION_STIFFNESS_RATIO, CableSpec, MaterialParams

PHI = (1.0 + math.sqrt(5.0)) / 2.0

NODE_MASS = 0.005  # kg per node; 0.06 kg per module
DEFAULT_STRUT_LENGTH = 0.20  # m
GROUND_CLEARANCE = 0.002  # m, initial gap under the lowest node

# Unscaled vertices, cyclic permutations of (0, +-1, +-phi). Order is fixed:
# consecutive pairs share a strut.
_RAW_NODES = np.array(
    [
        [0.0, 1.0, PHI],
        [0.0, 1.0, -PHI],
        [0.0, -1.0, PHI],
        [0.0, -1.0, -PHI],
        [1.0, PHI, 0.0],
        [1.0, -PHI, 0.0],
        [-1.0, PHI, 0.0],
        [-1.0, -PHI, 0.0],
        [PHI, 0.0, 1.0],
        [-PHI, 0.0, 1.0],
        [PHI, 0.0, -1.0],
        [-PHI, 0.0, -1.0],
    ]
)

STRUTS = ((0, 1), (2, 3), (4, 5), (6, 7), (8, 9), (10, 11))
_STRUT_AXIS = (2, 2, 1, 1, 0, 0)  # coordinate axis each strut is aligned with

# Node index of the diametrically opposite vertex (coords negated).
ANTIPODE = (3, 2, 1, 0, 7, 6, 5, 4, 11, 10, 9, 8)

# Children always attach through this face; normal (-1,-1,-1)/sqrt(3).
CHILD_ATTACH_FACE = 0


@dataclass(frozen=True)
class Face:
    """One connective triangle: vertex ids CCW viewed from outside."""

    vertex_ids: tuple[int, int, int]
    normal: np.ndarray  # unit outward normal
    vertices: np.ndarray  # (3, 3) coordinates matching vertex_ids

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def edge_length(self) -> float:
        return float(np.linalg.norm(self.vertices[1] - self.vertices[0]))


@dataclass(frozen=True)
class ModuleTemplate:
    nodes: np.ndarray  # (12, 3)
    struts: tuple[tuple[int, int], ...]  # 6 pairs
    cables: tuple[tuple[int, int], ...]  # 24 pairs
    faces: tuple[Face, ...]  # 8, indexed by face id
    strut_length: float

    def face(self, face_id: int) -> Face:
        return self.faces[face_id]


@dataclass(frozen=True)
class Transform:
    """Proper rigid transform x -> R x + t."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    @classmethod
    def identity(cls) -> "Transform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    def compose(self, other: "Transform") -> "Transform":
        """self after other: (self.compose(other)).apply(x) == self.apply(other.apply(x))."""
        return Transform(self.rotation @ other.rotation,
                         self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Transform":
        rt = self.rotation.T
        return Transform(rt, -rt @ self.translation)


@dataclass(frozen=True)
class ModulePlacement:
    """Where one module sits in the tree and how it is actuated."""

    module_index: int
    parent_index: Optional[int]  # None for the root
    parent_face: int  # 0..7, face of the parent used for the connection
    orientation: int  # 0..2, three-fold twist of the mated faces
    actuation_face: int  # 0..7, direction the module contracts along
    transform: Optional[Transform] = None  # filled during assembly

    def __post_init__(self):
        if self.module_index < 0:
            raise ValueError("module_index must be >= 0")
        if self.parent_index is None:
            if self.module_index != 0:
                raise ValueError("only module 0 may be the root")
        elif not (0 <= self.parent_index < self.module_index):
            raise ValueError("parent_index must be < module_index")
        if not (0 <= self.parent_face <= 7):
            raise ValueError("parent_face must be in 0..7")
        if self.orientation not in (0, 1, 2):
            raise ValueError("orientation must be in {0, 1, 2}")
        if not (0 <= self.actuation_face <= 7):
            raise ValueError("actuation_face must be in 0..7")


@dataclass(frozen=True)
class AssembledRobot:
    """Flattened multi-module structure ready for simulation."""

    node_positions: np.ndarray  # (12*N, 3)
    node_mass: float
    struts: tuple[tuple[int, int], ...]
    strut_lengths: np.ndarray
    welds: tuple[tuple[int, int], ...]
    cables: tuple[CableSpec, ...]
    actuation_groups: tuple[ActuationGroup, ...]
    placements: tuple[ModulePlacement, ...]
    module_count: int
    template: ModuleTemplate
    material: MaterialParams


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def enumerate_faces(nodes: np.ndarray, cables: Sequence[tuple[int, int]]) -> tuple[Face, ...]:
    """Find the 8 cable-bounded triangles by exhaustive triple search.

    Returns faces indexed by octant id: bit 2/1/0 set when the outward
    normal has positive x/y/z component.
    """
    cable_set = {tuple(sorted(c)) for c in cables}
    found: dict[int, Face] = {}
    for i in range(12):
        for j in range(i + 1, 12):
            if (i, j) not in cable_set:
                continue
            for k in range(j + 1, 12):
                if (i, k) not in cable_set or (j, k) not in cable_set:
                    continue
                tri = (i, j, k)
                pts = nodes[list(tri)]
                normal = np.cross(pts[1] - pts[0], pts[2] - pts[0])
                normal = normal / np.linalg.norm(normal)
                centroid = pts.mean(axis=0)
                if float(normal @ centroid) < 0.0:
                    normal = -normal
                    tri = (i, k, j)
                    pts = nodes[list(tri)]
                fid = (normal[0] > 0) << 2 | (normal[1] > 0) << 1 | (normal[2] > 0)
                if fid in found:
                    raise ValueError("duplicate face normal octant; template invalid")
                found[int(fid)] = Face(tri, _freeze(normal), _freeze(pts.copy()))
    if len(found) != 8:
        raise ValueError(f"expected 8 faces, found {len(found)}")
    return tuple(found[i] for i in range(8))


def opposite_face(face_id: int) -> int:
    """Face whose normal is the negation: all three sign bits flip."""
    return 7 - face_id


def build_canonical_module(strut_length: float = DEFAULT_STRUT_LENGTH) -> ModuleTemplate:
    """Canonical 12-node, 6-strut, 24-cable icosahedron tensegrity module."""
    if strut_length <= 0:
        raise ValueError("strut_length must be positive")
    scale = strut_length / (2.0 * PHI)
    nodes = _freeze(_RAW_NODES * scale)
    cables = []
    for i in range(12):
        for j in range(i + 1, 12):
            d2 = float(((_RAW_NODES[i] - _RAW_NODES[j]) ** 2).sum())
            if abs(d2 - 4.0) > 1e-9:
                continue
            if _STRUT_AXIS[i // 2] == _STRUT_AXIS[j // 2]:
                continue  # edge joining a parallel strut pair: removed
            cables.append((i, j))
    faces = enumerate_faces(nodes, cables)
    return ModuleTemplate(nodes, STRUTS, tuple(cables), faces, float(strut_length))


def mate_transform(parent_face: Face, child_face: Face, orientation: int) -> Transform:
    """Rigid transform placing a child module face-to-face on a parent face.

    The child face normal maps to the negation of the parent face normal,
    the centroids coincide, and child vertex j lands on parent vertex
    (orientation - j) mod 3; three orientations give the three distinct
    proper-rotation matings.
    """
    if orientation not in (0, 1, 2):
        raise ValueError("orientation must be in {0, 1, 2}")
    if abs(parent_face.edge_length() - child_face.edge_length()) > 1e-9 * parent_face.edge_length():
        raise ValueError("mismatched module scales")
    oc = child_face.centroid()
    a1 = child_face.vertices[0] - oc
    a1 = a1 / np.linalg.norm(a1)
    a3 = child_face.normal
    a2 = np.cross(a3, a1)
    op = parent_face.centroid()
    b1 = parent_face.vertices[orientation] - op
    b1 = b1 / np.linalg.norm(b1)
    b3 = -parent_face.normal
    b2 = np.cross(b3, b1)
    rotation = np.column_stack((b1, b2, b3)) @ np.column_stack((a1, a2, a3)).T
    translation = op - rotation @ oc
    return Transform(_freeze(rotation), _freeze(translation))


def mate_vertex_pairs(parent_face: Face, child_face: Face, orientation: int) -> tuple[tuple[int, int], ...]:
    """Coincident (parent_vertex_id, child_vertex_id) pairs after mating."""
    return tuple(
        (parent_face.vertex_ids[(orientation - j) % 3], child_face.vertex_ids[j])
        for j in range(3)
    )


def module_transforms(placements: Sequence[ModulePlacement], template: ModuleTemplate) -> list[Transform]:
    """World transform of each module, walking the tree from the root."""
    transforms: list[Transform] = []
    child_face = template.face(CHILD_ATTACH_FACE)
    for p in placements:
        if p.parent_index is None:
            transforms.append(Transform.identity())
        else:
            local = mate_transform(template.face(p.parent_face), child_face, p.orientation)
            transforms.append(transforms[p.parent_index].compose(local))
    return transforms


def _check_tree(placements: Sequence[ModulePlacement]) -> None:
    if not placements:
        raise ValueError("need at least one placement")
    occupied: list[set[int]] = []
    for i, p in enumerate(placements):
        if p.module_index != i:
            raise ValueError("placements must be listed in module-index order")
        if i == 0:
            if p.parent_index is not None:
                raise ValueError("module 0 must be the root")
            occupied.append(set())
            continue
        if p.parent_index is None:
            raise ValueError("only module 0 may be the root")
        occupied.append({CHILD_ATTACH_FACE})
        if p.parent_face in occupied[p.parent_index]:
            raise ValueError(
                f"invalid-spec: face {p.parent_face} of module {p.parent_index} already occupied"
            )
        occupied[p.parent_index].add(p.parent_face)


def assemble(
    placements: Sequence[ModulePlacement],
    template: ModuleTemplate,
    material: MaterialParams,
) -> AssembledRobot:
    """Flatten a tree of module placements into one simulable structure.

    Passive cables are pre-tensioned by shortening their rest lengths by the
    material prestress fraction; actuation cables start exactly at their
    natural length. The whole robot is translated so its lowest node sits a
    small clearance above the ground plane.
    """
    _check_tree(placements)
    n_modules = len(placements)
    transforms = module_transforms(placements, template)
    positions = np.vstack([tr.apply(template.nodes) for tr in transforms])

    struts: list[tuple[int, int]] = []
    for m in range(n_modules):
        base = 12 * m
        struts.extend((base + a, base + b) for a, b in template.struts)
    strut_lengths = np.full(len(struts), template.strut_length)

    welds: list[tuple[int, int]] = []
    child_face = template.face(CHILD_ATTACH_FACE)
    for p in placements:
        if p.parent_index is None:
            continue
        pbase = 12 * p.parent_index
        cbase = 12 * p.module_index
        for pv, cv in mate_vertex_pairs(template.face(p.parent_face), child_face, p.orientation):
            welds.append((pbase + pv, cbase + cv))

    # passive cables: identical canonical length, shortened by the prestress
    canon_len = float(np.linalg.norm(template.nodes[template.cables[0][0]]
                                     - template.nodes[template.cables[0][1]]))
    ea = material.youngs_modulus * material.cable_cross_section
    rest_passive = canon_len * (1.0 - material.cable_prestress)
    k_passive = ea / rest_passive
    reduced_mass = NODE_MASS / 2.0
    c_passive = 2.0 * material.cable_damping_ratio * math.sqrt(k_passive * reduced_mass)
    cables: list[CableSpec] = []
    for m in range(n_modules):
        base = 12 * m
        for a, b in template.cables:
            cables.append(CableSpec((base + a, base + b), rest_passive, k_passive, c_passive))

    # actuation cables: three vertex-to-antipode cables per module
    natural = float(np.linalg.norm(template.nodes[0] - template.nodes[ANTIPODE[0]]))
    k_act = ACTUATION_STIFFNESS_RATIO * k_passive
    c_act = 2.0 * material.cable_damping_ratio * math.sqrt(k_act * reduced_mass)
    groups: list[ActuationGroup] = []
    for p in placements:
        base = 12 * p.module_index
        ids = []
        for v in template.face(p.actuation_face).vertex_ids:
            ids.append(len(cables))
            cables.append(CableSpec((base + v, base + ANTIPODE[v]), natural, k_act, c_act,
                                    actuated=True, max_tension=SERVO_FORCE_LIMIT))
        groups.append(ActuationGroup(tuple(ids), natural))

    positions[:, 2] += GROUND_CLEARANCE - positions[:, 2].min()

    placed = tuple(
        dataclasses.replace(p, transform=tr) for p, tr in zip(placements, transforms)
    )
    return AssembledRobot(
        node_positions=_freeze(positions),
        node_mass=NODE_MASS,
        struts=tuple(struts),
        strut_lengths=_freeze(strut_lengths),
        welds=tuple(welds),
        cables=tuple(cables),
        actuation_groups=tuple(groups),
        placements=placed,
        module_count=n_modules,
        template=template,
        material=material,
    )


def template_as_dict(template: ModuleTemplate) -> dict:
    """JSON-ready dump of the canonical module for inspection tools."""
    return {
        "strut_length": template.strut_length,
        "nodes": [[float(v) for v in row] for row in template.nodes],
        "struts": [list(s) for s in template.struts],
        "cables": [list(c) for c in template.cables],
        "faces": [
            {
                "id": i,
                "vertex_ids": list(f.vertex_ids),
                "outward_normal": [float(v) for v in f.normal],
            }
            for i, f in enumerate(template.faces)
        ],
    }
