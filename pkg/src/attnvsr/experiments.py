"""Locomotion task and the experiment protocols built on it."""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .controllers import (
    CodecError,
    Controller,
    ControllerSpec,
    attention_size,
    decode,
    decode_slow_attention_genes,
    param_count,
)
from .evolution import EVOLUTION_SEED_BIT, EvolutionConfig, Individual, RunRecord, evolve
from .morphology import (
    Morphology,
    SensorRanges,
    add_noise,
    morphology_from_mask,
    read_all_raw_sensors,
    soft_normalize,
    voxel_areas,
)
from .physics import PhysicsParams, SimState, SimulationDiverged, advance, apply_actuations, initial_state
from .terrain import Terrain, generate_terrain

log = logging.getLogger(__name__)

_NOISE_STREAM = 0x5E  # keeps the sensor-noise stream apart from terrain generation

# Held-out terrain seeds for re-assessment; evolution seeds always have bit 63 set.
DEFAULT_REASSESS_SEEDS = (101, 202, 303, 404, 505, 606, 707, 808, 909, 1010)


@dataclass(frozen=True)
class TaskConfig:
    t_final: float = 30.0
    terrain_span: float = 1000.0
    bump_height: float = 1.0
    bump_distance: float = 10.0
    start_plateau: float | None = None  # None: just long enough for the robot plus PLATEAU_MARGIN
    spawn_x: float = 1.0
    spawn_clearance: float = 0.01
    settle_time: float = 1.0
    sensor_noise: float = 0.01
    sensor_ranges: SensorRanges = SensorRanges()

    def __post_init__(self):
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")


PLATEAU_MARGIN = 1.0


def start_plateau(morphology: Morphology, task: TaskConfig) -> float:
    """Flat run-up length; by default the hills begin 1 m ahead of the robot's front."""
    if task.start_plateau is not None:
        return task.start_plateau
    return task.spawn_x + morphology.shape.width * morphology.side + PLATEAU_MARGIN


def make_terrain(seed: int, task: TaskConfig, plateau: float) -> Terrain:
    return generate_terrain(seed, task.terrain_span, task.bump_height, task.bump_distance, plateau)


def spawn(morphology: Morphology, task: TaskConfig, physics: PhysicsParams) -> SimState:
    width = morphology.shape.width * morphology.side
    plateau = start_plateau(morphology, task)
    if task.spawn_x < 0 or task.spawn_x + width > plateau:
        raise ValueError(f"robot of width {width} m does not fit on the {plateau} m plateau at x={task.spawn_x}")
    return initial_state(morphology, physics, offset=(task.spawn_x, task.spawn_clearance))


@dataclass
class EpisodeResult:
    velocity: float
    diverged: bool = False
    trajectory: list[dict] = field(default_factory=list)
    attention_frames: list[dict] = field(default_factory=list)
    attention_by_tick: list[tuple[float, np.ndarray]] = field(default_factory=list)


def run_episode(
    genotype,
    spec: ControllerSpec,
    shape: str,
    terrain_seed: int,
    task: TaskConfig,
    physics: PhysicsParams = PhysicsParams(),
    *,
    frozen_attention: np.ndarray | None = None,
    record_trajectory: bool = False,
    record_attention: bool = False,
) -> EpisodeResult:
    """Settle the robot, then run the controller for ``t_final`` seconds.

    The velocity is the net center-of-mass x displacement over ``t_final``.
    """
    morphology = morphology_from_mask(shape)
    g = decode(genotype, spec, morphology.n_voxels)
    terrain = make_terrain(terrain_seed, task, start_plateau(morphology, task))
    noise_rng = np.random.default_rng(np.random.SeedSequence([int(terrain_seed) & (2**64 - 1), _NOISE_STREAM]))
    controller = Controller(g, neighbors=morphology.neighbors, frozen_attention=frozen_attention)

    state = spawn(morphology, task, physics)
    result = EpisodeResult(velocity=0.0)
    try:
        state = advance(state, morphology, terrain, physics, int(round(task.settle_time / physics.dt)))
        state = replace(state, step_index=0)
        x0 = state.center_of_mass()[0]
        n_steps = int(round(task.t_final / physics.dt))
        while state.step_index < n_steps:
            if state.step_index % spec.k_act == 0:
                raw = read_all_raw_sensors(state, morphology, terrain)
                S = add_noise(soft_normalize(raw, task.sensor_ranges), noise_rng, task.sensor_noise)
                actuation = controller.tick(S)
                state = apply_actuations(state, actuation)
                if record_attention and controller.last_attention is not None:
                    A = controller.last_attention.copy()
                    result.attention_by_tick.append((state.time, A))
                    for i in range(morphology.n_voxels):
                        result.attention_frames.append(
                            {"time": state.time, "voxel": i, "A": A[i].ravel(), "s": S[i], "a": actuation[i]})
            if record_trajectory:
                result.trajectory.append(_trajectory_row(state, morphology))
            block = min(spec.k_act - state.step_index % spec.k_act, n_steps - state.step_index)
            if record_trajectory:
                block = 1  # one row per control step; bit-identical to stepping in blocks
            state = advance(state, morphology, terrain, physics, block)
        if record_trajectory:
            result.trajectory.append(_trajectory_row(state, morphology))
    except SimulationDiverged as exc:
        log.warning("terrain seed %d: %s; fitness set to 0", terrain_seed, exc)
        result.diverged = True
        return result
    result.velocity = float((state.center_of_mass()[0] - x0) / task.t_final)
    return result


def _trajectory_row(state: SimState, morphology: Morphology) -> dict:
    com = state.center_of_mass()
    return {
        "step": state.step_index,
        "time": state.time,
        "com_x": float(com[0]),
        "com_y": float(com[1]),
        "area": voxel_areas(state.mass_positions, morphology) / morphology.side**2,
        "actuation": state.held_actuation.copy(),
    }


def average_velocity(x_start: float, x_end: float, t_final: float) -> float:
    return (x_end - x_start) / t_final


def locomotion_fitness(genotype, spec: ControllerSpec, shape: str, terrain_seed: int, task: TaskConfig,
                       physics: PhysicsParams = PhysicsParams()) -> float:
    """Average x velocity of the center of mass; 0 if the simulation blows up."""
    n = morphology_from_mask(shape).n_voxels
    if len(genotype) != param_count(spec, n):
        raise CodecError(f"genotype length mismatch: expected {param_count(spec, n)}, found {len(genotype)}")
    return run_episode(genotype, spec, shape, terrain_seed, task, physics).velocity


@dataclass(frozen=True)
class LocomotionFitness:
    """Picklable ``fitness_fn(genotype, terrain_seed)`` for the GA."""

    spec: ControllerSpec
    shape: str
    task: TaskConfig
    physics: PhysicsParams = PhysicsParams()

    def __call__(self, genotype, terrain_seed: int) -> float:
        return locomotion_fitness(genotype, self.spec, self.shape, terrain_seed, self.task, self.physics)


# -- protocols ---------------------------------------------------------------


def check_reassess_seeds(seeds) -> None:
    for s in seeds:
        if int(s) < 0 or int(s) & EVOLUTION_SEED_BIT:
            raise ValueError(f"re-assessment seed {s} collides with the evolution seed space")


def reassess(genotype, spec: ControllerSpec, shape: str, seeds, task: TaskConfig,
             physics: PhysicsParams = PhysicsParams()) -> list[float]:
    check_reassess_seeds(seeds)
    out = []
    for seed in seeds:
        try:
            out.append(locomotion_fitness(genotype, spec, shape, seed, task, physics))
        except Exception as exc:  # noqa: BLE001
            log.warning("re-assessment on seed %d failed (%s); scored 0", seed, exc)
            out.append(0.0)
    return out


def ablate_frozen_attention(genotype, shape: str, snapshot_terrain_seed: int, eval_terrain_seed: int,
                            task: TaskConfig, physics: PhysicsParams = PhysicsParams(),
                            spec: ControllerSpec = ControllerSpec("Attention")) -> list[tuple[float, float]]:
    """Velocity with every voxel's attention pinned to its value at each whole second."""
    if spec.family != "Attention":
        raise ValueError("frozen-attention ablation needs a plain Attention controller")
    ref = run_episode(genotype, spec, shape, snapshot_terrain_seed, task, physics, record_attention=True)
    if ref.diverged:
        raise SimulationDiverged(-1)
    by_time = {round(t, 9): A for t, A in ref.attention_by_tick}
    series = []
    for second in range(int(math.floor(task.t_final))):
        A = by_time.get(round(float(second), 9))
        if A is None:  # whole second between ticks: use the matrix in force at that time
            A = [a for t, a in ref.attention_by_tick if t <= second][-1]
        frozen = run_episode(genotype, spec, shape, eval_terrain_seed, task, physics, frozen_attention=A)
        series.append((float(second), frozen.velocity))
    return series


def attention_hash(genotype, spec: ControllerSpec) -> str:
    seg = np.ascontiguousarray(np.asarray(genotype, dtype=float)[: attention_size(spec)])
    return hashlib.sha256(seg.tobytes()).hexdigest()[:16]


def fine_tune(theta_star, spec: ControllerSpec, new_shape: str, config: EvolutionConfig, task: TaskConfig,
              physics: PhysicsParams = PhysicsParams(), jobs: int = 1, callbacks=()) -> tuple[Individual, RunRecord]:
    """Re-optimize only the downstream weights on a new shape, attention frozen.

    The seed individual keeps its downstream weights when the voxel count is
    unchanged, and gets fresh uniform ones otherwise.
    """
    if spec.family != "Attention":
        raise ValueError("fine-tuning needs a plain Attention controller")
    theta_star = np.asarray(theta_star, dtype=float)
    n_attn = attention_size(spec)
    attn = theta_star[:n_attn]
    n_new = morphology_from_mask(new_shape).n_voxels
    p = param_count(spec, n_new)
    rng = np.random.default_rng(np.random.SeedSequence([int(config.master_seed) & (2**64 - 1), 0xF1]))
    f_len = p - n_attn
    if len(theta_star) == p:
        first = theta_star.copy()
    else:
        first = np.concatenate([attn, rng.uniform(-1.0, 1.0, f_len)])
    population = [first] + [np.concatenate([attn, rng.uniform(-1.0, 1.0, f_len)]) for _ in range(config.n_pop - 1)]
    fitness = LocomotionFitness(spec, new_shape, task, physics)
    return evolve(config, p, fitness, callbacks, initial_population=population,
                  variable=slice(n_attn, None), jobs=jobs)


def meta_evolve_slow_attention(shape: str, config: EvolutionConfig, task: TaskConfig,
                               physics: PhysicsParams = PhysicsParams(), spec: ControllerSpec | None = None,
                               jobs: int = 1, callbacks=()) -> tuple[Individual, RunRecord, list[dict]]:
    """Evolve a slow-attention controller and log the best (alpha, eta) per generation."""
    spec = spec or ControllerSpec("SlowAttention")
    if spec.family != "SlowAttention":
        raise ValueError("meta-evolution needs a SlowAttention controller")
    n = morphology_from_mask(shape).n_voxels
    trail: list[dict] = []

    def log_alpha_eta(generation, population, record):
        g = decode(population[0].genotype, spec, n)
        alpha, eta = decode_slow_attention_genes(g.gene_alpha, g.gene_eta)
        trail.append({"generation": generation, "n_evals": record.n_evals, "alpha": alpha, "eta": eta})

    best, record = evolve(config, param_count(spec, n), LocomotionFitness(spec, shape, task, physics),
                          [log_alpha_eta, *callbacks], jobs=jobs)
    return best, record, trail


def run_evolution(spec: ControllerSpec, shape: str, config: EvolutionConfig, task: TaskConfig,
                  physics: PhysicsParams = PhysicsParams(), jobs: int = 1,
                  callbacks: tuple[Callable, ...] = ()) -> tuple[Individual, RunRecord]:
    n = morphology_from_mask(shape).n_voxels
    return evolve(config, param_count(spec, n), LocomotionFitness(spec, shape, task, physics), callbacks, jobs=jobs)
