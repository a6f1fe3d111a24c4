"""Point-mass spring-rod dynamics for assembled tensegrity robots.

Nodes are point masses. Cables are tension-only spring-dampers whose rest
lengths may follow a sawtooth schedule. Struts and welds are hard distance
constraints enforced by position projection after a semi-implicit Euler
force step. Ground is the plane z = 0 with a penalty normal force and
regularized Coulomb friction. Everything is fixed-order float64 arithmetic,
so identical inputs give bit-identical outputs on one platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from numba import njit

if TYPE_CHECKING:
    from .control import ControlGene
    from .geometry import AssembledRobot

LOW_YOUNGS_MODULUS = 20e6  # Pa
HIGH_STIFFNESS_RATIO = 4.0
SAMPLE_INTERVAL = 0.01  # s, trajectory sampling period
FRICTION_BAND = 1e-3  # m/s, linear viscous regularization below this speed
ACTUATION_STIFFNESS_RATIO = 10.0  # actuation cable k relative to passive k


class SimulationDiverged(RuntimeError):
    """Raised when a non-finite state is detected; carries the offending time."""

    def __init__(self, time: float):
        super().__init__(f"simulation diverged at t={time:.6f} s")
        self.time = time


@dataclass(frozen=True)
class MaterialParams:
    """Cable material for one stiffness regime."""

    youngs_modulus: float  # Pa
    cable_cross_section: float = 1e-6  # m^2
    cable_damping_ratio: float = 0.1
    cable_prestress: float = 0.05  # rest length shortening fraction of passive cables

    def __post_init__(self):
        if not (10e6 <= self.youngs_modulus <= 100e6):
            raise ValueError(
                f"youngs_modulus {self.youngs_modulus:g} Pa outside elastic domain [10e6, 100e6]"
            )
        if self.cable_cross_section <= 0:
            raise ValueError("cable_cross_section must be positive")
        if not (0.0 <= self.cable_prestress < 1.0):
            raise ValueError("cable_prestress must be in [0, 1)")

    @classmethod
    def for_regime(cls, regime: str, **kwargs) -> "MaterialParams":
        """LOW -> 20 MPa, HIGH -> 4 x LOW."""
        regime = regime.upper()
        if regime == "LOW":
            return cls(youngs_modulus=LOW_YOUNGS_MODULUS, **kwargs)
        if regime == "HIGH":
            return cls(youngs_modulus=LOW_YOUNGS_MODULUS * HIGH_STIFFNESS_RATIO, **kwargs)
        raise ValueError(f"unknown stiffness regime {regime!r}")


@dataclass(frozen=True)
class CableSpec:
    """One tension-only cable between two nodes.

    ``max_tension`` models the stall force of the winch driving an actuation
    cable; passive cables leave it infinite.
    """

    endpoints: tuple[int, int]
    rest_length: float  # m
    stiffness: float  # N/m
    damping: float  # N*s/m
    actuated: bool = False
    max_tension: float = math.inf  # N

    def __post_init__(self):
        if self.rest_length <= 0:
            raise ValueError("rest_length must be positive")
        if self.stiffness <= 0:
            raise ValueError("stiffness must be positive")
        if self.max_tension <= 0:
            raise ValueError("max_tension must be positive")


@dataclass(frozen=True)
class SimParams:
    timestep: float = 2.5e-4  # s
    gravity: float = 9.81  # m/s^2, downward
    ground_normal_stiffness: float = 5000.0  # N/m
    ground_normal_damping: float = 8.0  # N*s/m, near-critical for one node
    friction_coefficient: float = 0.6
    constraint_iterations: int = 4
    settle_duration: float = 2.0  # s
    # Tensegrity mechanism modes preserve member lengths to first order, so
    # cable dampers barely touch them; this drag stands in for material and
    # air losses. It acts on node velocity relative to the robot mean, which
    # keeps total linear momentum exactly conserved.
    ambient_damping_rate: float = 2.0  # 1/s
    # During the unscored settle phase the drag acts on absolute velocities
    # so knife-edge rocking dies out within the settle window.
    settle_damping_rate: float = 25.0  # 1/s
    # States faster than this are unphysical for desk-scale modules and are
    # treated as divergence (the caller scores them zero).
    divergence_speed_limit: float = 25.0  # m/s

    def __post_init__(self):
        if self.timestep <= 0:
            raise ValueError("timestep must be positive")
        if self.friction_coefficient < 0:
            raise ValueError("friction_coefficient must be >= 0")
        if self.constraint_iterations < 1:
            raise ValueError("constraint_iterations must be >= 1")
        if self.ambient_damping_rate < 0 or self.settle_damping_rate < 0:
            raise ValueError("damping rates must be >= 0")
        if self.divergence_speed_limit <= 0:
            raise ValueError("divergence_speed_limit must be positive")


@dataclass
class BodyState:
    """Node positions and velocities at one instant."""

    positions: np.ndarray  # (n, 3)
    velocities: np.ndarray  # (n, 3)
    time: float = 0.0

    def copy(self) -> "BodyState":
        return BodyState(self.positions.copy(), self.velocities.copy(), self.time)


@dataclass
class Trajectory:
    """Uniformly sampled run record: positions, contact flags, center of mass."""

    times: np.ndarray  # (T,)
    positions: np.ndarray  # (T, n, 3)
    contacts: np.ndarray  # (T, n) bool
    com: np.ndarray  # (T, 3)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def net_displacement(self) -> float:
        """Horizontal (x, y) distance between first and last center of mass."""
        d = self.com[-1, :2] - self.com[0, :2]
        return float(math.hypot(d[0], d[1]))

    def to_csv(self, path) -> None:
        n = self.positions.shape[1]
        header = "t,com_x,com_y,com_z,contact_count," + ",".join(
            f"n{i}{ax}" for i in range(n) for ax in ("x", "y", "z")
        )
        with open(path, "w", newline="") as fh:
            fh.write(header + "\n")
            for k in range(len(self.times)):
                row = [repr(float(self.times[k]))]
                row += [repr(float(v)) for v in self.com[k]]
                row.append(str(int(self.contacts[k].sum())))
                row += [repr(float(v)) for v in self.positions[k].reshape(-1)]
                fh.write(",".join(row) + "\n")


# ---------------------------------------------------------------------------
# single-element force laws (also the reference the kernels must agree with)
# ---------------------------------------------------------------------------


def cable_force(state: BodyState, cable: CableSpec) -> tuple[np.ndarray, np.ndarray]:
    """Force exerted by one cable on its two endpoints (tension-only).

    Returns (force_on_a, force_on_b); the two always sum to zero.
    """
    ia, ib = cable.endpoints
    d = state.positions[ib] - state.positions[ia]
    length = float(np.sqrt(d @ d))
    zero = np.zeros(3)
    if length <= 1e-12 or length <= cable.rest_length:
        return zero, zero.copy()
    unit = d / length
    ldot = float((state.velocities[ib] - state.velocities[ia]) @ unit)
    tension = cable.stiffness * (length - cable.rest_length) + cable.damping * ldot
    if tension <= 0.0:
        return zero, zero.copy()
    if tension > cable.max_tension:
        tension = cable.max_tension
    f = tension * unit
    return f, -f


def ground_contact_force(
    position: np.ndarray,
    velocity: np.ndarray,
    params: SimParams,
    node_mass: float = 0.005,
) -> np.ndarray:
    """Effective ground force on one node: penalty normal plus Coulomb friction.

    Matches the stepping kernel: the normal damper is integrated implicitly
    over one timestep (so it can never pump energy or pull the node down),
    and the friction impulse is capped at the amount that stops tangential
    slip within the step. Zero above ground.
    """
    z = float(position[2])
    if z >= 0.0:
        return np.zeros(3)
    h = params.timestep
    vz = float(velocity[2])
    denom = (1.0 + h * h * params.ground_normal_stiffness / node_mass
             + h * params.ground_normal_damping / node_mass)
    vz_imp = (vz + h * params.ground_normal_stiffness * (-z) / node_mass) / denom
    fn = (vz_imp - vz) * node_mass / h
    if fn <= 0.0:
        return np.zeros(3)
    force = np.array([0.0, 0.0, fn])
    vt = math.hypot(float(velocity[0]), float(velocity[1]))
    if vt > 1e-12:
        mag = params.friction_coefficient * fn
        if vt < FRICTION_BAND:
            mag *= vt / FRICTION_BAND
        mag = min(mag, vt * node_mass / h)
        force[0] -= mag * float(velocity[0]) / vt
        force[1] -= mag * float(velocity[1]) / vt
    return force


# ---------------------------------------------------------------------------
# jitted stepping core
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _advance(pos, vel, t, nsteps, node_mass, dt, gravity,
             strut_a, strut_b, strut_len, weld_a, weld_b,
             cab_a, cab_b, cab_rest0, cab_span, cab_freq, cab_phase, cab_k, cab_c, cab_fmax,
             gk, gc, mu, iters, drag_rate, drag_absolute):  # pragma: no cover - exercised via wrappers
    n = pos.shape[0]
    forces = np.empty((n, 3))
    pred = np.empty((n, 3))
    inv_m = 1.0 / node_mass
    for _ in range(nsteps):
        # forces at current state
        for i in range(n):
            forces[i, 0] = 0.0
            forces[i, 1] = 0.0
            forces[i, 2] = -node_mass * gravity
        for c in range(cab_a.shape[0]):
            ia = cab_a[c]
            ib = cab_b[c]
            dx = pos[ib, 0] - pos[ia, 0]
            dy = pos[ib, 1] - pos[ia, 1]
            dz = pos[ib, 2] - pos[ia, 2]
            length = math.sqrt(dx * dx + dy * dy + dz * dz)
            if length <= 1e-12:
                continue
            x = cab_freq[c] * t + cab_phase[c]
            rest = cab_rest0[c] - cab_span[c] * (x - math.floor(x))
            if length <= rest:
                continue
            rvx = vel[ib, 0] - vel[ia, 0]
            rvy = vel[ib, 1] - vel[ia, 1]
            rvz = vel[ib, 2] - vel[ia, 2]
            ldot = (dx * rvx + dy * rvy + dz * rvz) / length
            tension = cab_k[c] * (length - rest) + cab_c[c] * ldot
            if tension <= 0.0:
                continue
            if tension > cab_fmax[c]:
                tension = cab_fmax[c]
            s = tension / length
            fx = s * dx
            fy = s * dy
            fz = s * dz
            forces[ia, 0] += fx
            forces[ia, 1] += fy
            forces[ia, 2] += fz
            forces[ib, 0] -= fx
            forces[ib, 1] -= fy
            forces[ib, 2] -= fz
        if drag_rate > 0.0:
            rx = 0.0
            ry = 0.0
            rz = 0.0
            if not drag_absolute:
                for i in range(n):
                    rx += vel[i, 0]
                    ry += vel[i, 1]
                    rz += vel[i, 2]
                rx /= n
                ry /= n
                rz /= n
            cdrag = drag_rate * node_mass
            for i in range(n):
                forces[i, 0] -= cdrag * (vel[i, 0] - rx)
                forces[i, 1] -= cdrag * (vel[i, 1] - ry)
                forces[i, 2] -= cdrag * (vel[i, 2] - rz)
        # semi-implicit Euler velocity stage (smooth forces)
        for i in range(n):
            vel[i, 0] += dt * forces[i, 0] * inv_m
            vel[i, 1] += dt * forces[i, 1] * inv_m
            vel[i, 2] += dt * forces[i, 2] * inv_m
        # ground contact at velocity level. The spring-damper normal force is
        # integrated implicitly (backward Euler on the contact coordinate), so
        # it is unconditionally dissipative at any timestep; the friction
        # impulse is capped so it never reverses slip within a step.
        for i in range(n):
            z = pos[i, 2]
            if z < 0.0:
                vz = vel[i, 2]
                denom = 1.0 + dt * dt * gk * inv_m + dt * gc * inv_m
                vz_imp = (vz + dt * gk * (-z) * inv_m) / denom
                fn = (vz_imp - vz) * node_mass / dt
                if fn < 0.0:
                    fn = 0.0
                vel[i, 2] = vz + dt * fn * inv_m
                if fn > 0.0:
                    vx = vel[i, 0]
                    vy = vel[i, 1]
                    vt = math.sqrt(vx * vx + vy * vy)
                    if vt > 1e-12:
                        mag = mu * fn
                        if vt < FRICTION_BAND:
                            mag *= vt / FRICTION_BAND
                        dv = dt * mag * inv_m
                        if dv > vt:
                            dv = vt
                        vel[i, 0] -= dv * vx / vt
                        vel[i, 1] -= dv * vy / vt
        # position stage
        for i in range(n):
            pos[i, 0] += dt * vel[i, 0]
            pos[i, 1] += dt * vel[i, 1]
            pos[i, 2] += dt * vel[i, 2]
            pred[i, 0] = pos[i, 0]
            pred[i, 1] = pos[i, 1]
            pred[i, 2] = pos[i, 2]
        # position projection; struts last so rod lengths end exact
        for _ in range(iters):
            for w in range(weld_a.shape[0]):
                ia = weld_a[w]
                ib = weld_b[w]
                mx = 0.5 * (pos[ia, 0] + pos[ib, 0])
                my = 0.5 * (pos[ia, 1] + pos[ib, 1])
                mz = 0.5 * (pos[ia, 2] + pos[ib, 2])
                pos[ia, 0] = mx
                pos[ia, 1] = my
                pos[ia, 2] = mz
                pos[ib, 0] = mx
                pos[ib, 1] = my
                pos[ib, 2] = mz
            for k in range(strut_a.shape[0]):
                ia = strut_a[k]
                ib = strut_b[k]
                dx = pos[ib, 0] - pos[ia, 0]
                dy = pos[ib, 1] - pos[ia, 1]
                dz = pos[ib, 2] - pos[ia, 2]
                length = math.sqrt(dx * dx + dy * dy + dz * dz)
                if length <= 1e-12:
                    continue
                corr = 0.5 * (length - strut_len[k]) / length
                pos[ia, 0] += corr * dx
                pos[ia, 1] += corr * dy
                pos[ia, 2] += corr * dz
                pos[ib, 0] -= corr * dx
                pos[ib, 1] -= corr * dy
                pos[ib, 2] -= corr * dz
        # velocity correction consistent with the projection
        for i in range(n):
            vel[i, 0] += (pos[i, 0] - pred[i, 0]) / dt
            vel[i, 1] += (pos[i, 1] - pred[i, 1]) / dt
            vel[i, 2] += (pos[i, 2] - pred[i, 2]) / dt
        t += dt
    return t


@dataclass
class _Packed:
    """Flat arrays the kernel consumes, built once per robot+controls."""

    strut_a: np.ndarray
    strut_b: np.ndarray
    strut_len: np.ndarray
    weld_a: np.ndarray
    weld_b: np.ndarray
    cab_a: np.ndarray
    cab_b: np.ndarray
    cab_rest0: np.ndarray
    cab_span: np.ndarray
    cab_freq: np.ndarray
    cab_phase: np.ndarray
    cab_k: np.ndarray
    cab_c: np.ndarray
    cab_fmax: np.ndarray


def _pack(robot: "AssembledRobot", controls: Optional[Sequence["ControlGene"]]) -> _Packed:
    struts = np.asarray(robot.struts, dtype=np.int64).reshape(-1, 2)
    welds = (
        np.asarray(robot.welds, dtype=np.int64).reshape(-1, 2)
        if len(robot.welds)
        else np.zeros((0, 2), dtype=np.int64)
    )
    ncab = len(robot.cables)
    cab_a = np.empty(ncab, dtype=np.int64)
    cab_b = np.empty(ncab, dtype=np.int64)
    rest0 = np.empty(ncab)
    span = np.zeros(ncab)
    freq = np.zeros(ncab)
    phase = np.zeros(ncab)
    k = np.empty(ncab)
    c = np.empty(ncab)
    fmax = np.empty(ncab)
    for i, cab in enumerate(robot.cables):
        cab_a[i], cab_b[i] = cab.endpoints
        rest0[i] = cab.rest_length
        k[i] = cab.stiffness
        c[i] = cab.damping
        fmax[i] = cab.max_tension
    if controls is not None:
        if len(controls) != len(robot.actuation_groups):
            raise ValueError("need exactly one control gene per module")
        for group, gene in zip(robot.actuation_groups, controls):
            for cid in group.cable_ids:
                span[cid] = group.natural_length * group.max_contraction * gene.amplitude
                freq[cid] = gene.frequency
                phase[cid] = gene.phase
    return _Packed(
        struts[:, 0].copy(), struts[:, 1].copy(),
        np.asarray(robot.strut_lengths, dtype=np.float64),
        welds[:, 0].copy(), welds[:, 1].copy(),
        cab_a, cab_b, rest0, span, freq, phase, k, c, fmax,
    )


def _advance_packed(pos, vel, t, nsteps, packed: _Packed, node_mass, params: SimParams,
                    settling: bool = False):
    drag = params.settle_damping_rate if settling else params.ambient_damping_rate
    return _advance(
        pos, vel, t, nsteps, node_mass, params.timestep, params.gravity,
        packed.strut_a, packed.strut_b, packed.strut_len,
        packed.weld_a, packed.weld_b,
        packed.cab_a, packed.cab_b, packed.cab_rest0, packed.cab_span,
        packed.cab_freq, packed.cab_phase, packed.cab_k, packed.cab_c, packed.cab_fmax,
        params.ground_normal_stiffness, params.ground_normal_damping,
        params.friction_coefficient, params.constraint_iterations,
        drag, settling,
    )


def _contact_flags(pos, vel, params: SimParams, node_mass: float) -> np.ndarray:
    h = params.timestep
    denom = (1.0 + h * h * params.ground_normal_stiffness / node_mass
             + h * params.ground_normal_damping / node_mass)
    vz_imp = (vel[:, 2] + h * params.ground_normal_stiffness * (-pos[:, 2]) / node_mass) / denom
    return (pos[:, 2] < 0.0) & (vz_imp > vel[:, 2])


def _state_ok(pos, vel, params: SimParams) -> bool:
    if not (np.isfinite(pos).all() and np.isfinite(vel).all()):
        return False
    return float(np.abs(vel).max(initial=0.0)) <= params.divergence_speed_limit


def step(
    state: BodyState,
    robot: "AssembledRobot",
    controls: Optional[Sequence["ControlGene"]],
    params: SimParams,
) -> BodyState:
    """Advance one timestep. Pure: the input state is left untouched.

    The control schedule is evaluated at ``state.time``; pass ``controls=None``
    to hold every actuation cable at its natural rest length.
    """
    packed = _pack(robot, controls)
    out = state.copy()
    t = _advance_packed(out.positions, out.velocities, state.time, 1, packed, robot.node_mass, params)
    if not _state_ok(out.positions, out.velocities, params):
        raise SimulationDiverged(t)
    out.time = t
    return out


def settle(robot: "AssembledRobot", params: SimParams) -> BodyState:
    """Let the robot come to rest under gravity with actuation held at rest."""
    packed = _pack(robot, None)
    state = BodyState(robot.node_positions.copy(), np.zeros_like(robot.node_positions), 0.0)
    chunk = max(1, int(round(SAMPLE_INTERVAL / params.timestep)))
    total = int(round(params.settle_duration / params.timestep))
    done = 0
    while done < total:
        n = min(chunk, total - done)
        state.time = _advance_packed(
            state.positions, state.velocities, state.time, n, packed, robot.node_mass, params,
            settling=True,
        )
        done += n
        if not _state_ok(state.positions, state.velocities, params):
            raise SimulationDiverged(state.time)
    return state


def run(
    robot: "AssembledRobot",
    initial: BodyState,
    controls: Optional[Sequence["ControlGene"]],
    duration: float,
    params: SimParams,
) -> Trajectory:
    """Simulate for ``duration`` seconds, sampling every 0.01 s.

    The control schedule clock starts at zero at the beginning of this run,
    regardless of ``initial.time``. Trajectory times likewise run 0..duration.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    packed = _pack(robot, controls)
    pos = initial.positions.copy()
    vel = initial.velocities.copy()
    n = pos.shape[0]
    per = max(1, int(round(SAMPLE_INTERVAL / params.timestep)))
    nsamples = int(round(duration / SAMPLE_INTERVAL)) + 1
    times = np.empty(nsamples)
    positions = np.empty((nsamples, n, 3))
    contacts = np.zeros((nsamples, n), dtype=bool)
    com = np.empty((nsamples, 3))
    t = 0.0
    for s in range(nsamples):
        if s > 0:
            t = _advance_packed(pos, vel, t, per, packed, robot.node_mass, params)
            if not _state_ok(pos, vel, params):
                raise SimulationDiverged(t)
        times[s] = t
        positions[s] = pos
        contacts[s] = _contact_flags(pos, vel, params, robot.node_mass)
        com[s] = pos.mean(axis=0)
    return Trajectory(times, positions, contacts, com)


def mechanical_energy(
    state: BodyState,
    robot: "AssembledRobot",
    controls: Optional[Sequence["ControlGene"]],
    params: SimParams,
    control_time: Optional[float] = None,
) -> float:
    """Kinetic + gravitational + cable elastic + ground penalty elastic energy."""
    from .control import rest_length_at

    m = robot.node_mass
    kinetic = 0.5 * m * float((state.velocities**2).sum())
    gravitational = m * params.gravity * float(state.positions[:, 2].sum())
    t = state.time if control_time is None else control_time
    rests = {}
    if controls is not None:
        for group, gene in zip(robot.actuation_groups, controls):
            r = rest_length_at(t, gene, group)
            for cid in group.cable_ids:
                rests[cid] = r
    elastic = 0.0
    for i, cab in enumerate(robot.cables):
        ia, ib = cab.endpoints
        d = state.positions[ib] - state.positions[ia]
        length = float(np.sqrt(d @ d))
        rest = rests.get(i, cab.rest_length)
        if length > rest:
            ext = length - rest
            cap_ext = cab.max_tension / cab.stiffness  # extension where the cap engages
            if ext <= cap_ext:
                elastic += 0.5 * cab.stiffness * ext**2
            else:
                elastic += 0.5 * cab.stiffness * cap_ext**2 + cab.max_tension * (ext - cap_ext)
    depth = np.minimum(state.positions[:, 2], 0.0)
    ground = 0.5 * params.ground_normal_stiffness * float((depth**2).sum())
    return kinetic + gravitational + elastic + ground
