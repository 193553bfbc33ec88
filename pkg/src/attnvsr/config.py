"""Experiment plan files (TOML) and their resolved form."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import tomli

from .controllers import ControllerSpec
from .evolution import EvolutionConfig
from .experiments import DEFAULT_REASSESS_SEEDS, TaskConfig, check_reassess_seeds
from .morphology import SensorRanges, parse_shape
from .physics import PhysicsParams


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    name: str
    shape: str
    task: TaskConfig = TaskConfig()
    physics: PhysicsParams = PhysicsParams()
    controller: ControllerSpec = ControllerSpec()
    evolution: EvolutionConfig = EvolutionConfig()
    runs: int = 5
    reassess_seeds: tuple[int, ...] = DEFAULT_REASSESS_SEEDS
    ablation_snapshot_seed: int = 4242
    ablation_eval_seed: int = 2424
    target_shape: str | None = None
    finetune_n_evals: int = 10000

    @property
    def seeds(self) -> list[int]:
        return [self.evolution.master_seed + k for k in range(self.runs)]


# key -> (target, field, converter); target is the section dataclass or "plan"
_TASK_KEYS = {
    "t_final": float, "terrain_span": float, "bump_height": float, "bump_distance": float,
    "start_plateau": float, "spawn_x": float, "spawn_clearance": float, "settle_time": float,
    "sensor_noise": float, "velocity_range": None, "area_range": None,
}
_PHYSICS_KEYS = {
    "dt": float, "substeps_per_control_step": int, "spring_stiffness": float, "spring_damping": float,
    "mass_per_node": float, "max_actuation_ratio": float, "side_length_clamp": None, "gravity": float,
    "friction_coefficient": float, "constraint_iterations": int, "penetration_tolerance": float,
}
_CONTROLLER_KEYS = {"family": str, "d": int, "k_act": int, "comm_channels": int}
_EVOLUTION_KEYS = {
    "n_pop": int, "n_tour": int, "sigma_mut": float, "sigma_mut_crossover": float, "p_mut": float,
    "n_evals": int, "seed": int,
}
_EXPERIMENT_KEYS = {
    "name": str, "shape": str, "runs": int, "reassess_seeds": None, "ablation_snapshot_seed": int,
    "ablation_eval_seed": int, "target_shape": str, "finetune_n_evals": int,
}
_SECTIONS = {
    "task": _TASK_KEYS, "physics": _PHYSICS_KEYS, "controller": _CONTROLLER_KEYS,
    "evolution": _EVOLUTION_KEYS, "experiment": _EXPERIMENT_KEYS,
}


def _line_of(text: str, section: str, key: str | None = None) -> int:
    """Best-effort line number of ``[section]`` or of ``key`` inside it."""
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line.strip("[] ")
            if key is None and current == section:
                return lineno
        elif current == section and key is not None and line.split("=", 1)[0].strip() == key:
            return lineno
    return 0


def _pair(value, where):
    if not (isinstance(value, list) and len(value) == 2):
        raise PlanError(f"{where}: expected a two-element list")
    return (float(value[0]), float(value[1]))


def load_plan(path: str | Path) -> ExperimentPlan:
    path = Path(path)
    text = path.read_text()
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise PlanError(f"{path}: {exc}") from exc
    return plan_from_dict(doc, path=path, text=text)


def plan_from_dict(doc: dict, path: Path | str = "<plan>", text: str = "") -> ExperimentPlan:
    def where(section, key=None):
        line = _line_of(text, section, key)
        loc = f"{path}:{line}" if line else str(path)
        return f"{loc}: [{section}]" + (f" key '{key}'" if key else "")

    for section, body in doc.items():
        if section not in _SECTIONS:
            raise PlanError(f"{path}:{_line_of(text, section)}: unknown section [{section}]")
        if not isinstance(body, dict):
            raise PlanError(f"{path}: '{section}' must be a section")
        for key in body:
            if key not in _SECTIONS[section]:
                raise PlanError(f"{where(section, key)}: unknown key")

    def values(section):
        out = {}
        for key, value in doc.get(section, {}).items():
            conv = _SECTIONS[section][key]
            try:
                out[key] = conv(value) if conv is not None else value
            except (TypeError, ValueError) as exc:
                raise PlanError(f"{where(section, key)}: {exc}") from exc
        return out

    exp = values("experiment")
    if "shape" not in exp:
        raise PlanError(f"{path}: [experiment] missing required key 'shape'")

    try:
        task_kw = values("task")
        ranges = SensorRanges()
        if "velocity_range" in task_kw:
            ranges = dataclasses.replace(ranges, velocity=_pair(task_kw.pop("velocity_range"), where("task", "velocity_range")))
        if "area_range" in task_kw:
            ranges = dataclasses.replace(ranges, area=_pair(task_kw.pop("area_range"), where("task", "area_range")))
        task = TaskConfig(sensor_ranges=ranges, **task_kw)

        phys_kw = values("physics")
        if "side_length_clamp" in phys_kw:
            phys_kw["side_length_clamp"] = _pair(phys_kw["side_length_clamp"], where("physics", "side_length_clamp"))
        physics = PhysicsParams(**phys_kw)

        controller = ControllerSpec(**values("controller"))

        evo_kw = values("evolution")
        if "seed" in evo_kw:
            evo_kw["master_seed"] = evo_kw.pop("seed")
        evolution = EvolutionConfig(**evo_kw)

        for key in ("shape", "target_shape"):
            if key in exp:
                parse_shape(exp[key])
        if "reassess_seeds" in exp:
            seeds = exp["reassess_seeds"]
            if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
                raise PlanError(f"{where('experiment', 'reassess_seeds')}: expected a list of integers")
            exp["reassess_seeds"] = tuple(seeds)
        name = exp.pop("name", Path(str(path)).stem)
        plan = ExperimentPlan(name=name, task=task, physics=physics, controller=controller,
                              evolution=evolution, **exp)
        check_reassess_seeds(plan.reassess_seeds)
    except PlanError:
        raise
    except ValueError as exc:
        raise PlanError(f"{path}: {exc}") from exc
    return plan


def with_overrides(plan: ExperimentPlan, *, seed: int | None = None, n_evals: int | None = None,
                   t_final: float | None = None) -> ExperimentPlan:
    evo = plan.evolution
    if seed is not None:
        evo = dataclasses.replace(evo, master_seed=seed)
    if n_evals is not None:
        evo = dataclasses.replace(evo, n_evals=n_evals)
    task = plan.task if t_final is None else dataclasses.replace(plan.task, t_final=t_final)
    return dataclasses.replace(plan, evolution=evo, task=task)
