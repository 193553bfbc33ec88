"""mu + lambda genetic algorithm over flat real-valued genotypes.

Every generation breeds ``n_pop`` offspring, evaluates them, re-evaluates
all surviving parents on fresh terrain seeds, merges both groups and keeps
the best ``n_pop``. Fitness is maximized.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

# Evolution terrain seeds always have the top bit set; held-out seeds must not.
EVOLUTION_SEED_BIT = 1 << 63


@dataclass(frozen=True)
class EvolutionConfig:
    n_pop: int = 100
    n_tour: int = 5
    sigma_mut: float = 0.35
    sigma_mut_crossover: float = 0.1
    p_mut: float = 0.2
    n_evals: int = 30000
    master_seed: int = 0

    def __post_init__(self):
        if self.n_pop < 2 or self.n_pop % 2:
            raise ValueError("n_pop must be an even number >= 2")
        if not 0 <= self.p_mut <= 1:
            raise ValueError("p_mut must lie in [0, 1]")
        if self.sigma_mut < 0 or self.sigma_mut_crossover < 0:
            raise ValueError("mutation scales must be non-negative")
        if self.n_tour < 1 or self.n_evals < self.n_pop:
            raise ValueError("n_tour must be >= 1 and n_evals >= n_pop")


@dataclass
class Individual:
    genotype: np.ndarray
    genotype_id: int
    birth_eval_index: int
    fitness: float | None = None


@dataclass
class RunRecord:
    evals: list[dict] = field(default_factory=list)
    generations: list[dict] = field(default_factory=list)
    best: Individual | None = None

    @property
    def n_evals(self) -> int:
        return len(self.evals)


def terrain_seed_for(master_seed: int, generation: int, slot: int) -> int:
    """Evaluation seed derived from the run seed and the evaluation position only."""
    ss = np.random.SeedSequence([int(master_seed) & (2**64 - 1), generation, slot])
    return int(ss.generate_state(1, dtype=np.uint64)[0]) | EVOLUTION_SEED_BIT


def init_population(p: int, config: EvolutionConfig, rng: np.random.Generator) -> list[np.ndarray]:
    if p < 1:
        raise ValueError("genotype length must be >= 1")
    return [rng.uniform(-1.0, 1.0, p) for _ in range(config.n_pop)]


def tournament_select(population: Sequence[Individual], n_tour: int, rng: np.random.Generator) -> Individual:
    """Best of ``n_tour`` uniform draws with replacement; ties go to the lower index."""
    if not population:
        raise ValueError("empty population")
    picks = rng.integers(0, len(population), n_tour)
    best = None
    for idx in picks:
        ind = population[idx]
        if ind.fitness is None:
            raise RuntimeError(f"tournament met unevaluated individual {ind.genotype_id}")
        if best is None or ind.fitness > population[best].fitness or (
            ind.fitness == population[best].fitness and idx < best
        ):
            best = int(idx)
    return population[best]


def gaussian_mutation(theta: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    return theta + sigma * rng.standard_normal(theta.shape)


def geometric_crossover(theta1: np.ndarray, theta2: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Extended geometric crossover: per-component blend with coefficients on [-0.5, 1.5]."""
    if theta1.shape != theta2.shape:
        raise ValueError(f"parent length mismatch: {theta1.shape} vs {theta2.shape}")
    alpha = rng.uniform(-0.5, 1.5, theta1.shape)
    return theta1 + alpha * (theta2 - theta1) + sigma * rng.standard_normal(theta1.shape)


def make_offspring(population: Sequence[Individual], config: EvolutionConfig, rng: np.random.Generator,
                   variable: slice = slice(None)) -> tuple[np.ndarray, str]:
    """One child and the operator that produced it (``"mutation"`` or ``"crossover"``)."""
    if rng.random() < config.p_mut:
        parent = tournament_select(population, config.n_tour, rng)
        child = parent.genotype.copy()
        child[variable] = gaussian_mutation(parent.genotype[variable], config.sigma_mut, rng)
        return child, "mutation"
    p1 = tournament_select(population, config.n_tour, rng)
    p2 = tournament_select(population, config.n_tour, rng)
    child = p1.genotype.copy()
    child[variable] = geometric_crossover(p1.genotype[variable], p2.genotype[variable], config.sigma_mut_crossover, rng)
    return child, "crossover"


def _safe_call(args):
    fn, genotype, seed = args
    try:
        value = float(fn(genotype, seed))
    except Exception as exc:  # noqa: BLE001 - a broken genotype must not kill the run
        return 0.0, f"{type(exc).__name__}: {exc}"
    if not np.isfinite(value):
        return 0.0, f"non-finite fitness {value}"
    return value, None


class Evaluator:
    """Evaluates fitness calls in order, optionally across worker processes."""

    def __init__(self, fitness_fn: Callable[[np.ndarray, int], float], jobs: int = 1):
        self.fitness_fn = fitness_fn
        self.jobs = max(1, int(jobs))
        self._pool = ProcessPoolExecutor(self.jobs) if self.jobs > 1 else None

    def __call__(self, genotypes: Sequence[np.ndarray], seeds: Sequence[int]) -> list[float]:
        tasks = [(self.fitness_fn, g, s) for g, s in zip(genotypes, seeds)]
        if self._pool is None:
            results = [_safe_call(t) for t in tasks]
        else:
            chunk = max(1, len(tasks) // (4 * self.jobs))
            results = list(self._pool.map(_safe_call, tasks, chunksize=chunk))
        out = []
        for (value, err), seed in zip(results, seeds):
            if err is not None:
                log.warning("fitness evaluation failed on terrain seed %d (%s); scored 0", seed, err)
            out.append(value)
        return out

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _rank_key(ind: Individual):
    return (-ind.fitness, ind.birth_eval_index, ind.genotype_id)


def evolve(
    config: EvolutionConfig,
    genotype_length: int,
    fitness_fn: Callable[[np.ndarray, int], float],
    callbacks: Sequence[Callable[[int, list[Individual], RunRecord], None]] = (),
    *,
    initial_population: Sequence[np.ndarray] | None = None,
    variable: slice = slice(None),
    jobs: int = 1,
) -> tuple[Individual, RunRecord]:
    """Run the GA until exactly ``config.n_evals`` fitness calls have been made.

    ``variable`` restricts mutation and crossover to a slice of the
    genotype; components outside it are copied from the first parent.
    Callbacks run after each survival step as ``cb(generation, population, record)``.

    The last generation is truncated to hit the budget exactly: with ``r``
    evaluations left and ``r < 2 n_pop`` it re-evaluates every parent and
    breeds ``r - n_pop`` offspring, or, when ``r <= n_pop``, breeds ``r``
    offspring and keeps the parents' previous scores.
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(config.master_seed) & (2**64 - 1)))
    record = RunRecord()
    if initial_population is None:
        genotypes = init_population(genotype_length, config, rng)
    else:
        genotypes = [np.array(g, dtype=float) for g in initial_population]
        if len(genotypes) != config.n_pop or any(len(g) != genotype_length for g in genotypes):
            raise ValueError("initial population does not match n_pop / genotype length")

    next_id = 0

    def newborn(genotypes):
        nonlocal next_id
        base = record.n_evals
        out = [Individual(genotype=g, genotype_id=next_id + k, birth_eval_index=base + k) for k, g in enumerate(genotypes)]
        next_id += len(out)
        return out

    with Evaluator(fitness_fn, jobs) as evaluate:

        def score(generation, individuals, kind, slot_offset=0):
            slots = range(slot_offset, slot_offset + len(individuals))
            seeds = [terrain_seed_for(config.master_seed, generation, s) for s in slots]
            values = evaluate([ind.genotype for ind in individuals], seeds)
            for ind, value, seed, slot in zip(individuals, values, seeds, slots):
                ind.fitness = value
                record.evals.append({
                    "eval_index": record.n_evals, "generation": generation, "slot": slot,
                    "kind": kind, "genotype_id": ind.genotype_id, "fitness": value, "terrain_seed": seed,
                })

        population = newborn(genotypes)
        score(0, population, "init")
        population.sort(key=_rank_key)
        _summarize(record, 0, population)
        for cb in callbacks:
            cb(0, population, record)

        generation = 0
        while record.n_evals < config.n_evals:
            generation += 1
            remaining = config.n_evals - record.n_evals
            if remaining >= 2 * config.n_pop:
                n_off, reevaluate = config.n_pop, True
            elif remaining > config.n_pop:
                n_off, reevaluate = remaining - config.n_pop, True
            else:
                n_off, reevaluate = remaining, False

            offspring = [make_offspring(population, config, rng, variable)[0] for _ in range(n_off)]
            children = newborn(offspring)
            score(generation, children, "offspring")
            if reevaluate:
                score(generation, population, "reeval", slot_offset=config.n_pop)
            merged = population + children
            merged.sort(key=_rank_key)
            population = merged[: config.n_pop]
            _summarize(record, generation, population)
            for cb in callbacks:
                cb(generation, population, record)

    record.best = population[0]
    return population[0], record


def _summarize(record: RunRecord, generation: int, population: list[Individual]):
    fits = np.array([ind.fitness for ind in population], dtype=float)
    record.generations.append({
        "generation": generation,
        "n_evals": record.n_evals,
        "best_fitness": float(population[0].fitness),
        "median_fitness": float(np.median(fits)),
        "best_genotype_id": population[0].genotype_id,
    })
