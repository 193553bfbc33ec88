"""2D mass-spring-damper voxel dynamics on a heightmap.

Integration is semi-implicit Euler with a fixed number of substeps per
control step. After each substep, edge and diagonal lengths are projected
into the allowed band and masses below the ground are pushed out along the
local surface normal with Coulomb friction on the tangential velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numba
import numpy as np

from .morphology import Morphology
from .terrain import Terrain

_SINGLE_VOXEL_MODE_PER_SQRT_K = 0.22507908  # lowest elastic mode of a unit voxel, Hz at k = m = 1
_TARGET_HZ = 5.0
_DAMPING_RATIO = 0.3
_DEFAULT_K = (_TARGET_HZ / _SINGLE_VOXEL_MODE_PER_SQRT_K) ** 2  # ~493.5 N/m
_DEFAULT_C = 2 * _DAMPING_RATIO * _DEFAULT_K / (2 * math.pi * _TARGET_HZ)  # ~9.42 N s/m


class SimulationDiverged(RuntimeError):
    def __init__(self, step_index: int):
        super().__init__(f"simulation diverged at step {step_index}")
        self.step_index = step_index


@dataclass(frozen=True)
class PhysicsParams:
    dt: float = 1.0 / 60.0
    substeps_per_control_step: int = 10
    spring_stiffness: float = _DEFAULT_K
    spring_damping: float = _DEFAULT_C
    mass_per_node: float = 1.0
    max_actuation_ratio: float = 0.2
    side_length_clamp: tuple[float, float] = (0.7, 1.3)
    gravity: float = 9.81
    friction_coefficient: float = 0.8
    constraint_iterations: int = 100
    penetration_tolerance: float = 1e-6

    def __post_init__(self):
        lo, hi = self.side_length_clamp
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.substeps_per_control_step < 1:
            raise ValueError("substeps_per_control_step must be >= 1")
        if not 0 < self.max_actuation_ratio < min(1 - lo, hi - 1):
            raise ValueError("max_actuation_ratio must lie inside the side-length clamp band")


@dataclass(frozen=True)
class SimState:
    mass_positions: np.ndarray
    mass_velocities: np.ndarray
    held_actuation: np.ndarray
    step_index: int = 0
    dt: float = 1.0 / 60.0
    clamp_count: int = 0  # actuation requests that had to be clamped into [-1, 1]

    @property
    def time(self) -> float:
        return self.step_index * self.dt

    def center_of_mass(self) -> np.ndarray:
        return self.mass_positions.mean(axis=0)

    def kinetic_energy(self, mass_per_node: float) -> float:
        return 0.5 * mass_per_node * float(np.sum(self.mass_velocities**2))


def initial_state(morphology: Morphology, params: PhysicsParams, offset=(0.0, 0.0)) -> SimState:
    pos = morphology.rest_positions + np.asarray(offset, dtype=float)
    return SimState(
        mass_positions=pos,
        mass_velocities=np.zeros_like(pos),
        held_actuation=np.zeros(morphology.n_voxels),
        step_index=0,
        dt=params.dt,
    )


def apply_actuation(state: SimState, voxel_index: int, a: float) -> SimState:
    clamped = min(1.0, max(-1.0, float(a)))
    act = state.held_actuation.copy()
    act[voxel_index] = clamped
    return replace(state, held_actuation=act, clamp_count=state.clamp_count + (clamped != a))


def apply_actuations(state: SimState, values: np.ndarray) -> SimState:
    values = np.asarray(values, dtype=float)
    clamped = np.clip(values, -1.0, 1.0)
    n_clamped = int(np.count_nonzero(clamped != values))
    return replace(state, held_actuation=clamped, clamp_count=state.clamp_count + n_clamped)


def rest_lengths(morphology: Morphology, actuation: np.ndarray, params: PhysicsParams) -> np.ndarray:
    """Rest length of every spring for the given per-voxel actuation.

    Edges follow ``L (1 - r a)``; diagonals stay at sqrt(2) times the edge.
    """
    edge = morphology.side * (1.0 - params.max_actuation_ratio * actuation[morphology.spring_voxel])
    return np.where(morphology.spring_is_diagonal, math.sqrt(2.0) * edge, edge)


@numba.njit(cache=True)
def _height_and_slope(xs, ys, x):
    n = xs.shape[0]
    if x <= xs[0]:
        return ys[0], 0.0
    if x >= xs[n - 1]:
        return ys[n - 1], 0.0
    j = np.searchsorted(xs, x, side="right") - 1
    slope = (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j])
    return ys[j] + slope * (x - xs[j]), slope


@numba.njit(cache=True)
def _advance(pos, vel, n_steps, substeps, h, mass, k, c, gravity, mu,
             sa, sb, rest, lo_len, hi_len, n_iter, txs, tys):
    """Advance ``n_steps`` control steps in place; return the failing step or -1."""
    n_masses = pos.shape[0]
    n_springs = sa.shape[0]
    force = np.zeros_like(pos)
    inv_m = 1.0 / mass
    for step in range(n_steps):
        for _ in range(substeps):
            for m in range(n_masses):
                force[m, 0] = 0.0
                force[m, 1] = -gravity * mass
            for s in range(n_springs):
                i = sa[s]
                j = sb[s]
                dx = pos[j, 0] - pos[i, 0]
                dy = pos[j, 1] - pos[i, 1]
                length = math.sqrt(dx * dx + dy * dy)
                if length < 1e-12:
                    continue
                ux = dx / length
                uy = dy / length
                rel = (vel[j, 0] - vel[i, 0]) * ux + (vel[j, 1] - vel[i, 1]) * uy
                f = k * (length - rest[s]) + c * rel
                force[i, 0] += f * ux
                force[i, 1] += f * uy
                force[j, 0] -= f * ux
                force[j, 1] -= f * uy
            for m in range(n_masses):
                vel[m, 0] += h * force[m, 0] * inv_m
                vel[m, 1] += h * force[m, 1] * inv_m
                pos[m, 0] += h * vel[m, 0]
                pos[m, 1] += h * vel[m, 1]
            # length band: equal masses, so each endpoint takes half the correction
            for _it in range(n_iter):
                worst = 0.0
                for s in range(n_springs):
                    i = sa[s]
                    j = sb[s]
                    dx = pos[j, 0] - pos[i, 0]
                    dy = pos[j, 1] - pos[i, 1]
                    length = math.sqrt(dx * dx + dy * dy)
                    if length < 1e-12:
                        continue
                    if length < lo_len[s]:
                        target = lo_len[s]
                    elif length > hi_len[s]:
                        target = hi_len[s]
                    else:
                        continue
                    worst = max(worst, abs(length - target))
                    ux = dx / length
                    uy = dy / length
                    corr = 0.5 * (length - target)
                    pos[i, 0] += corr * ux
                    pos[i, 1] += corr * uy
                    pos[j, 0] -= corr * ux
                    pos[j, 1] -= corr * uy
                    rel = (vel[j, 0] - vel[i, 0]) * ux + (vel[j, 1] - vel[i, 1]) * uy
                    if (target == lo_len[s] and rel < 0.0) or (target == hi_len[s] and rel > 0.0):
                        vel[i, 0] += 0.5 * rel * ux
                        vel[i, 1] += 0.5 * rel * uy
                        vel[j, 0] -= 0.5 * rel * ux
                        vel[j, 1] -= 0.5 * rel * uy
                if worst < 1e-12:
                    break
            for m in range(n_masses):
                ground, slope = _height_and_slope(txs, tys, pos[m, 0])
                if pos[m, 1] >= ground:
                    continue
                norm = math.sqrt(1.0 + slope * slope)
                nx = -slope / norm
                ny = 1.0 / norm
                depth = (ground - pos[m, 1]) * ny
                pos[m, 0] += depth * nx
                pos[m, 1] += depth * ny
                ground, slope = _height_and_slope(txs, tys, pos[m, 0])
                if pos[m, 1] < ground:
                    pos[m, 1] = ground
                vn = vel[m, 0] * nx + vel[m, 1] * ny
                if vn < 0.0:
                    vel[m, 0] -= vn * nx
                    vel[m, 1] -= vn * ny
                    tx = vel[m, 0]
                    ty = vel[m, 1]
                    vt = math.sqrt(tx * tx + ty * ty)
                    if vt > 0.0:
                        scale = max(0.0, 1.0 - mu * (-vn) / vt)
                        vel[m, 0] = tx * scale
                        vel[m, 1] = ty * scale
        for m in range(n_masses):
            if not (math.isfinite(pos[m, 0]) and math.isfinite(pos[m, 1])):
                return step
    return -1


def advance(state: SimState, morphology: Morphology, terrain: Terrain, params: PhysicsParams,
            n_steps: int = 1) -> SimState:
    """Advance ``n_steps`` control steps holding the current actuation."""
    pos = np.array(state.mass_positions, dtype=np.float64)
    vel = np.array(state.mass_velocities, dtype=np.float64)
    if n_steps > 0:
        rest = rest_lengths(morphology, state.held_actuation, params)
        nominal = np.where(morphology.spring_is_diagonal, math.sqrt(2.0), 1.0) * morphology.side
        lo, hi = params.side_length_clamp
        failed = _advance(
            pos, vel, int(n_steps), int(params.substeps_per_control_step),
            params.dt / params.substeps_per_control_step, params.mass_per_node,
            params.spring_stiffness, params.spring_damping, params.gravity,
            params.friction_coefficient, morphology.spring_a, morphology.spring_b,
            rest, lo * nominal, hi * nominal, int(params.constraint_iterations),
            terrain.xs, terrain.ys,
        )
        if failed >= 0:
            raise SimulationDiverged(state.step_index + failed)
    return replace(state, mass_positions=pos, mass_velocities=vel, step_index=state.step_index + n_steps)


def physics_step(state: SimState, morphology: Morphology, terrain: Terrain, params: PhysicsParams) -> SimState:
    return advance(state, morphology, terrain, params, 1)


def edge_lengths(state: SimState, morphology: Morphology) -> np.ndarray:
    e = morphology.edge_springs
    d = state.mass_positions[morphology.spring_b[e]] - state.mass_positions[morphology.spring_a[e]]
    return np.hypot(d[:, 0], d[:, 1])
