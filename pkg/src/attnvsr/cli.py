"""Command-line entry points.

    attnvsr evolve    --plan P --out DIR [--seed S] [--jobs N] [--n-evals E] [--t-final T]
    attnvsr reassess  --plan P --genotype G --out DIR
    attnvsr ablate    --plan P --genotype G --out DIR
    attnvsr finetune  --plan P --genotype G --out DIR
    attnvsr meta      --plan P --out DIR
    attnvsr plotdata  --runs DIR --out DIR

Run outputs land in ``<out>/<plan name>/<seed>/``.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import PlanError, load_plan, with_overrides
from .controllers import ControllerSpec, decode, param_count
from .experiments import (
    ablate_frozen_attention,
    attention_hash,
    fine_tune,
    meta_evolve_slow_attention,
    reassess,
    run_episode,
    run_evolution,
)
from .morphology import morphology_from_mask
from .plotdata import build_plot_bundle

log = logging.getLogger("attnvsr")


class CliError(RuntimeError):
    pass


def _progress(generation, population, record):
    g = record.generations[-1]
    print(f"gen {generation:4d}  evals {g['n_evals']:6d}  best {g['best_fitness']:.6f}  "
          f"median {g['median_fitness']:.6f}", flush=True)


def _run_dir(out: Path, plan) -> Path:
    d = Path(out) / plan.name / str(plan.evolution.master_seed)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_genotype(path, spec: ControllerSpec, shape: str) -> np.ndarray:
    try:
        theta, meta = io.read_genotype(path)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read genotype {path}: {exc}") from exc
    n = morphology_from_mask(shape).n_voxels
    expected = param_count(spec, n)
    if len(theta) != expected:
        raise CliError(f"genotype {path} has length {len(theta)}, plan expects {expected} "
                       f"({spec.family}, n={n})")
    return theta


def _export_replay(run_dir: Path, theta, plan, shape: str, spec: ControllerSpec):
    ep = run_episode(theta, spec, shape, plan.reassess_seeds[0], plan.task, plan.physics,
                     record_trajectory=True, record_attention=spec.uses_attention)
    n = morphology_from_mask(shape).n_voxels
    io.write_trajectory(run_dir / "trajectory.csv", ep.trajectory, n)
    if spec.uses_attention:
        io.write_attention_frames(run_dir / "attention_frames.csv", ep.attention_frames)


def cmd_evolve(args) -> int:
    plan = _plan(args)
    run_dir = _run_dir(args.out, plan)
    best, record = run_evolution(plan.controller, plan.shape, plan.evolution, plan.task, plan.physics,
                                 jobs=args.jobs, callbacks=(_progress,))
    io.write_run_record(run_dir, record)
    n = morphology_from_mask(plan.shape).n_voxels
    io.write_genotype(run_dir / "best_genotype.txt", best.genotype, plan.controller, n)
    if args.export:
        _export_replay(run_dir, best.genotype, plan, plan.shape, plan.controller)
    print(f"best fitness {best.fitness:.6f} -> {run_dir}")
    return 0


def cmd_reassess(args) -> int:
    plan = _plan(args)
    theta = _load_genotype(args.genotype, plan.controller, plan.shape)
    run_dir = _run_dir(args.out, plan)
    values = reassess(theta, plan.controller, plan.shape, plan.reassess_seeds, plan.task, plan.physics)
    io.write_csv(run_dir / "reassess.csv", ["index", "terrain_seed", "velocity"],
                 ([k, s, v] for k, (s, v) in enumerate(zip(plan.reassess_seeds, values))))
    if args.export:
        _export_replay(run_dir, theta, plan, plan.shape, plan.controller)
    print(f"re-assessment mean {np.mean(values):.6f} over {len(values)} terrains -> {run_dir}")
    return 0


def cmd_ablate(args) -> int:
    plan = _plan(args)
    if plan.controller.family != "Attention":
        raise CliError(f"ablate needs an Attention controller, plan has {plan.controller.family}")
    theta = _load_genotype(args.genotype, plan.controller, plan.shape)
    run_dir = _run_dir(args.out, plan)
    series = ablate_frozen_attention(theta, plan.shape, plan.ablation_snapshot_seed, plan.ablation_eval_seed,
                                     plan.task, plan.physics, plan.controller)
    unfrozen = run_episode(theta, plan.controller, plan.shape, plan.ablation_eval_seed, plan.task,
                           plan.physics).velocity
    io.write_csv(run_dir / "ablation.csv", ["snapshot_time", "velocity", "unfrozen_velocity"],
                 ([t, v, unfrozen] for t, v in series))
    print(f"frozen median {np.median([v for _, v in series]):.6f} vs unfrozen {unfrozen:.6f} -> {run_dir}")
    return 0


def cmd_finetune(args) -> int:
    plan = _plan(args)
    if plan.target_shape is None:
        raise CliError("finetune needs [experiment] target_shape in the plan")
    theta = _load_genotype(args.genotype, plan.controller, plan.shape)
    evo = plan.evolution
    if args.n_evals is None:
        evo = dataclasses.replace(evo, n_evals=plan.finetune_n_evals)
    run_dir = _run_dir(args.out, plan)
    hashes = []

    def track(generation, population, record):
        seen = {attention_hash(ind.genotype, plan.controller) for ind in population}
        hashes.append(seen.pop() if len(seen) == 1 else "MISMATCH")

    best, record = fine_tune(theta, plan.controller, plan.target_shape, evo, plan.task, plan.physics,
                             jobs=args.jobs, callbacks=(track, _progress))
    io.write_run_record(run_dir, record, {"attn_hash": hashes})
    n = morphology_from_mask(plan.target_shape).n_voxels
    io.write_genotype(run_dir / "best_genotype.txt", best.genotype, plan.controller, n)
    print(f"fine-tuned best fitness {best.fitness:.6f} -> {run_dir}")
    return 0


def cmd_meta(args) -> int:
    plan = _plan(args)
    spec = plan.controller
    if spec.family != "SlowAttention":
        spec = dataclasses.replace(spec, family="SlowAttention")
    run_dir = _run_dir(args.out, plan)
    best, record, trail = meta_evolve_slow_attention(plan.shape, plan.evolution, plan.task, plan.physics,
                                                     spec=spec, jobs=args.jobs, callbacks=(_progress,))
    io.write_run_record(run_dir, record)
    io.write_dict_rows(run_dir / "alpha_eta.csv", ["generation", "n_evals", "alpha", "eta"], trail)
    n = morphology_from_mask(plan.shape).n_voxels
    io.write_genotype(run_dir / "best_genotype.txt", best.genotype, spec, n)
    g = decode(best.genotype, spec, n)
    print(f"best fitness {best.fitness:.6f}, genes alpha={g.gene_alpha:.4f} eta={g.gene_eta:.4f} -> {run_dir}")
    return 0


def cmd_plotdata(args) -> int:
    written = build_plot_bundle(Path(args.runs), Path(args.out))
    for path in written:
        print(path)
    return 0


def _plan(args):
    plan = load_plan(args.plan)
    return with_overrides(plan, seed=args.seed, n_evals=args.n_evals, t_final=args.t_final)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attnvsr", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, genotype=False):
        p.add_argument("--plan", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--n-evals", type=int)
        p.add_argument("--t-final", type=float)
        if genotype:
            p.add_argument("--genotype", required=True)
        return p

    common(sub.add_parser("evolve")).add_argument("--export", action="store_true",
                                                  help="also write trajectory/attention frames of the best")
    common(sub.add_parser("reassess"), genotype=True).add_argument("--export", action="store_true")
    common(sub.add_parser("ablate"), genotype=True)
    common(sub.add_parser("finetune"), genotype=True)
    meta = common(sub.add_parser("meta"))
    meta.add_argument("--genotype", help="unused; accepted for symmetry with the other commands")
    plot = sub.add_parser("plotdata")
    plot.add_argument("--runs", required=True)
    plot.add_argument("--out", required=True)
    return parser


COMMANDS = {
    "evolve": cmd_evolve, "reassess": cmd_reassess, "ablate": cmd_ablate,
    "finetune": cmd_finetune, "meta": cmd_meta, "plotdata": cmd_plotdata,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (PlanError, CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
