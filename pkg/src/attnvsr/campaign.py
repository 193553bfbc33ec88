"""Desk-scale experiment campaign: short evolutions of every condition plus the follow-up protocols.

Results are written in the same ``<root>/<condition>/<seed>/`` layout the CLI
uses, so ``attnvsr plotdata --runs <root>`` works on them. A run directory
that already holds a finished record is loaded instead of recomputed; every
run is deterministic, so reloading gives the same numbers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .controllers import ControllerSpec, param_count
from .evolution import EvolutionConfig
from .experiments import (
    DEFAULT_REASSESS_SEEDS,
    TaskConfig,
    ablate_frozen_attention,
    fine_tune,
    meta_evolve_slow_attention,
    reassess,
    run_episode,
    run_evolution,
)
from .morphology import morphology_from_mask
from .physics import PhysicsParams
from .plotdata import build_plot_bundle

log = logging.getLogger(__name__)

BIPED = "1111-1111-1001"
BIPED_LARGE = "111111-111111-100011-100011"


@dataclass(frozen=True)
class DeskScale:
    shape: str = BIPED
    large_shape: str = BIPED_LARGE
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    families: tuple[str, ...] = ("Attention", "MLP", "MLPComm")
    n_pop: int = 100
    n_evals: int = 2000
    t_final: float = 10.0
    ablation_t_final: float = 30.0
    ablation_snapshot_seed: int = 4242
    ablation_eval_seed: int = 2424
    finetune_n_evals: int = 1000
    reassess_seeds: tuple[int, ...] = DEFAULT_REASSESS_SEEDS
    physics: PhysicsParams = field(default_factory=PhysicsParams)
    jobs: int = 1

    def evolution(self, seed: int, n_evals: int | None = None) -> EvolutionConfig:
        return EvolutionConfig(n_pop=self.n_pop, n_evals=n_evals or self.n_evals, master_seed=seed)

    @property
    def task(self) -> TaskConfig:
        return TaskConfig(t_final=self.t_final)


@dataclass
class RunSummary:
    genotype: np.ndarray
    best_fitness: float
    run_dir: Path


def _finished(run_dir: Path) -> bool:
    return (run_dir / "best_genotype.txt").exists() and (run_dir / "summary.csv").exists()


def _load(run_dir: Path) -> RunSummary:
    theta, _ = io.read_genotype(run_dir / "best_genotype.txt")
    last = io.read_csv(run_dir / "summary.csv")[-1]
    return RunSummary(theta, float(last["best_fitness"]), run_dir)


def _save(run_dir: Path, best, record, spec: ControllerSpec, shape: str, extra=None) -> RunSummary:
    io.write_run_record(run_dir, record, extra)
    n = morphology_from_mask(shape).n_voxels
    io.write_genotype(run_dir / "best_genotype.txt", best.genotype, spec, n)
    return RunSummary(np.asarray(best.genotype, dtype=float), float(best.fitness), run_dir)


def evolve_condition(root: Path, desk: DeskScale, family: str, seed: int) -> RunSummary:
    run_dir = Path(root) / family / str(seed)
    if _finished(run_dir):
        return _load(run_dir)
    spec = ControllerSpec(family)
    log.info("evolving %s seed %d", family, seed)
    best, record = run_evolution(spec, desk.shape, desk.evolution(seed), desk.task, desk.physics, jobs=desk.jobs)
    return _save(run_dir, best, record, spec, desk.shape)


def reassess_run(run: RunSummary, desk: DeskScale, spec: ControllerSpec, shape: str) -> list[float]:
    path = run.run_dir / "reassess.csv"
    if path.exists():
        return [float(r["velocity"]) for r in io.read_csv(path)]
    values = reassess(run.genotype, spec, shape, desk.reassess_seeds, desk.task, desk.physics)
    io.write_csv(path, ["index", "terrain_seed", "velocity"],
                 ([k, s, v] for k, (s, v) in enumerate(zip(desk.reassess_seeds, values))))
    return values


def zero_baseline(desk: DeskScale, family: str = "Attention") -> list[float]:
    """Velocities of the all-zero genotype on the held-out terrains."""
    spec = ControllerSpec(family)
    theta = np.zeros(param_count(spec, morphology_from_mask(desk.shape).n_voxels))
    return reassess(theta, spec, desk.shape, desk.reassess_seeds, desk.task, desk.physics)


def ablation_run(run: RunSummary, desk: DeskScale) -> tuple[list[float], float]:
    """Frozen-snapshot velocities and the unfrozen velocity on the evaluation terrain."""
    path = run.run_dir / "ablation.csv"
    if path.exists():
        rows = io.read_csv(path)
        return [float(r["velocity"]) for r in rows], float(rows[0]["unfrozen_velocity"])
    task = TaskConfig(t_final=desk.ablation_t_final)
    spec = ControllerSpec("Attention")
    series = ablate_frozen_attention(run.genotype, desk.shape, desk.ablation_snapshot_seed,
                                     desk.ablation_eval_seed, task, desk.physics, spec)
    unfrozen = run_episode(run.genotype, spec, desk.shape, desk.ablation_eval_seed, task, desk.physics).velocity
    io.write_csv(path, ["snapshot_time", "velocity", "unfrozen_velocity"], ([t, v, unfrozen] for t, v in series))
    return [v for _, v in series], unfrozen


def finetune_run(root: Path, desk: DeskScale, source: RunSummary, seed: int) -> RunSummary:
    run_dir = Path(root) / "finetune" / str(seed)
    if _finished(run_dir):
        return _load(run_dir)
    spec = ControllerSpec("Attention")
    best, record = fine_tune(source.genotype, spec, desk.large_shape, desk.evolution(seed, desk.finetune_n_evals),
                             desk.task, desk.physics, jobs=desk.jobs)
    return _save(run_dir, best, record, spec, desk.large_shape)


def scratch_large_run(root: Path, desk: DeskScale, seed: int) -> RunSummary:
    run_dir = Path(root) / "scratch-large" / str(seed)
    if _finished(run_dir):
        return _load(run_dir)
    spec = ControllerSpec("Attention")
    best, record = run_evolution(spec, desk.large_shape, desk.evolution(seed, desk.finetune_n_evals),
                                 desk.task, desk.physics, jobs=desk.jobs)
    return _save(run_dir, best, record, spec, desk.large_shape)


def meta_run(root: Path, desk: DeskScale, seed: int) -> tuple[RunSummary, dict]:
    """Slow-attention run and its final ``(alpha, eta)`` row."""
    run_dir = Path(root) / "SlowAttention" / str(seed)
    trail_path = run_dir / "alpha_eta.csv"
    if _finished(run_dir) and trail_path.exists():
        last = io.read_csv(trail_path)[-1]
        return _load(run_dir), {"alpha": float(last["alpha"]), "eta": float(last["eta"])}
    spec = ControllerSpec("SlowAttention")
    best, record, trail = meta_evolve_slow_attention(desk.shape, desk.evolution(seed), desk.task, desk.physics,
                                                     spec=spec, jobs=desk.jobs)
    run = _save(run_dir, best, record, spec, desk.shape)
    io.write_dict_rows(trail_path, ["generation", "n_evals", "alpha", "eta"], trail)
    return run, trail[-1]


@dataclass
class CampaignResults:
    root: Path
    runs: dict[str, list[RunSummary]] = field(default_factory=dict)
    reassessed: dict[str, list[list[float]]] = field(default_factory=dict)
    baseline: list[float] = field(default_factory=list)
    ablation: list[tuple[list[float], float]] = field(default_factory=list)
    finetune: list[RunSummary] = field(default_factory=list)
    scratch: list[RunSummary] = field(default_factory=list)
    alpha_eta: list[dict] = field(default_factory=list)


def run_campaign(root: Path, desk: DeskScale = DeskScale(), progress=print) -> CampaignResults:
    root = Path(root)
    res = CampaignResults(root)
    for family in desk.families:
        res.runs[family] = []
        res.reassessed[family] = []
        for seed in desk.seeds:
            run = evolve_condition(root, desk, family, seed)
            res.runs[family].append(run)
            res.reassessed[family].append(reassess_run(run, desk, ControllerSpec(family), desk.shape))
            progress(f"{family:>13s} seed {seed}: best {run.best_fitness:+.4f}  "
                     f"held-out mean {np.mean(res.reassessed[family][-1]):+.4f}")
    res.baseline = zero_baseline(desk)
    for seed, run in zip(desk.seeds, res.runs.get("Attention", [])):
        res.ablation.append(ablation_run(run, desk))
        frozen, unfrozen = res.ablation[-1]
        progress(f"     ablation seed {seed}: frozen median {np.median(frozen):+.4f}  unfrozen {unfrozen:+.4f}")
    for seed, run in zip(desk.seeds, res.runs.get("Attention", [])):
        res.finetune.append(finetune_run(root, desk, run, seed))
        res.scratch.append(scratch_large_run(root, desk, seed))
        progress(f"     transfer seed {seed}: fine-tune {res.finetune[-1].best_fitness:+.4f}  "
                 f"scratch {res.scratch[-1].best_fitness:+.4f}")
    for seed in desk.seeds:
        _, row = meta_run(root, desk, seed)
        res.alpha_eta.append(row)
        progress(f"   slow attention seed {seed}: alpha {row['alpha']:.4f}  eta {row['eta']:.4f}")
    build_plot_bundle(root, root / "plots")
    return res
