import numpy as np
import pytest

from attnvsr.controllers import CodecError, ControllerSpec, attention_size, param_count
from attnvsr.evolution import EVOLUTION_SEED_BIT, EvolutionConfig
from attnvsr.experiments import (
    DEFAULT_REASSESS_SEEDS,
    TaskConfig,
    ablate_frozen_attention,
    attention_hash,
    average_velocity,
    fine_tune,
    locomotion_fitness,
    meta_evolve_slow_attention,
    reassess,
    run_episode,
    spawn,
    start_plateau,
)
from attnvsr.morphology import morphology_from_mask
from attnvsr.physics import PhysicsParams
from conftest import BIPED, BIPED_LARGE

SHORT = TaskConfig(t_final=3.0)
ATT = ControllerSpec("Attention")


def _genotype(spec=ATT, shape=BIPED, seed=0):
    n = morphology_from_mask(shape).n_voxels
    return np.random.default_rng(seed).uniform(-1, 1, param_count(spec, n))


def test_average_velocity_synthetic():
    assert average_velocity(1.0, 31.0, 30.0) == 1.0


@pytest.mark.parametrize("family", ["Attention", "MLP", "MLPComm", "SlowAttention"])
def test_zero_genotype_barely_moves(family):
    spec = ControllerSpec(family)
    g = np.zeros(param_count(spec, 10))
    assert abs(locomotion_fitness(g, spec, BIPED, 5, TaskConfig(t_final=10))) < 0.05


def test_episode_is_deterministic():
    g = _genotype()
    a = locomotion_fitness(g, ATT, BIPED, 11, SHORT)
    assert a == locomotion_fitness(g, ATT, BIPED, 11, SHORT)
    assert a != locomotion_fitness(g, ATT, BIPED, 12, SHORT)


def test_length_mismatch_rejected():
    with pytest.raises(CodecError, match="expected 73, found 72"):
        locomotion_fitness(np.zeros(72), ATT, BIPED, 1, SHORT)


def test_spawn_must_fit_plateau():
    m = morphology_from_mask(BIPED)
    with pytest.raises(ValueError):
        spawn(m, TaskConfig(start_plateau=4.0), PhysicsParams())
    s = spawn(m, TaskConfig(), PhysicsParams())
    assert s.mass_positions[:, 0].min() == 1.0
    assert s.mass_positions[:, 1].min() == pytest.approx(0.01)


def test_default_plateau_ends_just_past_the_robot():
    assert start_plateau(morphology_from_mask(BIPED), TaskConfig()) == 6.0
    assert start_plateau(morphology_from_mask(BIPED_LARGE), TaskConfig()) == 8.0
    assert start_plateau(morphology_from_mask(BIPED), TaskConfig(start_plateau=12.5)) == 12.5


def test_trajectory_and_attention_recording():
    res = run_episode(_genotype(), ATT, BIPED, 3, SHORT, record_trajectory=True, record_attention=True)
    assert len(res.attention_by_tick) == 3 * 60 // 20
    assert len(res.attention_frames) == 10 * len(res.attention_by_tick)
    assert res.trajectory[0]["step"] == 0 and res.trajectory[-1]["step"] == 180
    assert res.velocity == pytest.approx((res.trajectory[-1]["com_x"] - res.trajectory[0]["com_x"]) / 3.0)


def test_diverged_episode_scores_zero(monkeypatch):
    from attnvsr import experiments
    from attnvsr.physics import SimulationDiverged

    def explode(*args, **kwargs):
        raise SimulationDiverged(3)

    monkeypatch.setattr(experiments, "advance", explode)
    res = run_episode(_genotype(), ATT, BIPED, 1, SHORT)
    assert res.diverged and res.velocity == 0.0


def test_reassess_order_and_consistency():
    g = _genotype()
    seeds = DEFAULT_REASSESS_SEEDS[:3]
    out = reassess(g, ATT, BIPED, seeds, SHORT)
    assert len(out) == 3
    assert out[1] == locomotion_fitness(g, ATT, BIPED, seeds[1], SHORT)
    assert reassess(g, ATT, BIPED, [seeds[1]], SHORT) == [out[1]]


def test_reassess_rejects_evolution_seeds():
    with pytest.raises(ValueError):
        reassess(_genotype(), ATT, BIPED, [EVOLUTION_SEED_BIT | 5], SHORT)


def test_default_reassess_seeds_are_held_out():
    assert len(DEFAULT_REASSESS_SEEDS) == 10
    assert not any(s & EVOLUTION_SEED_BIT for s in DEFAULT_REASSESS_SEEDS)


def test_ablation_series_length_and_constant_attention():
    task = TaskConfig(t_final=4.0)
    g = _genotype()
    g[:16] = 0.0  # w_q = w_k = 0: attention no longer depends on the input
    series = ablate_frozen_attention(g, BIPED, 7, 8, task)
    assert [t for t, _ in series] == [0.0, 1.0, 2.0, 3.0]
    unfrozen = locomotion_fitness(g, ATT, BIPED, 8, task)
    for _, v in series:
        assert v == pytest.approx(unfrozen, abs=1e-12)


def test_ablation_is_deterministic():
    task = TaskConfig(t_final=2.0)
    g = _genotype(seed=4)
    assert ablate_frozen_attention(g, BIPED, 1, 2, task) == ablate_frozen_attention(g, BIPED, 1, 2, task)


def test_ablation_rejects_other_families():
    with pytest.raises(ValueError):
        ablate_frozen_attention(np.zeros(41), BIPED, 1, 2, SHORT, spec=ControllerSpec("MLP"))


def test_fine_tune_keeps_attention_frozen():
    theta = _genotype()
    cfg = EvolutionConfig(n_pop=4, n_evals=12, master_seed=2)
    task = TaskConfig(t_final=1.0)
    n_attn = attention_size(ATT)
    seen = []

    def check(generation, population, record):
        for ind in population:
            seen.append(ind.genotype_id)
            assert np.array_equal(ind.genotype[:n_attn], theta[:n_attn])

    best, record = fine_tune(theta, ATT, BIPED_LARGE, cfg, task, callbacks=[check])
    assert len(best.genotype) == param_count(ATT, 18)
    assert attention_hash(best.genotype, ATT) == attention_hash(theta, ATT)
    assert record.n_evals == 12 and seen


def test_fine_tune_same_shape_seeds_with_theta_star():
    theta = _genotype(seed=6)
    cfg = EvolutionConfig(n_pop=4, n_evals=4, master_seed=0)
    task = TaskConfig(t_final=1.0)
    _, record = fine_tune(theta, ATT, BIPED, cfg, task)
    first = record.evals[0]
    assert first["genotype_id"] == 0
    assert first["fitness"] == locomotion_fitness(theta, ATT, BIPED, first["terrain_seed"], task)


def test_fine_tune_rejects_other_families():
    with pytest.raises(ValueError):
        fine_tune(np.zeros(41), ControllerSpec("MLP"), BIPED, EvolutionConfig(n_pop=2, n_evals=2), SHORT)


def test_unit_alpha_slow_attention_equals_attention():
    theta = _genotype(seed=8)
    slow = np.concatenate([theta, [1.0, 0.0]])
    task = TaskConfig(t_final=5.0)
    for seed in (1, 2):
        a = run_episode(theta, ATT, BIPED, seed, task, record_trajectory=True)
        b = run_episode(slow, ControllerSpec("SlowAttention"), BIPED, seed, task, record_trajectory=True)
        assert a.velocity == b.velocity
        assert [r["com_x"] for r in a.trajectory] == [r["com_x"] for r in b.trajectory]


def test_meta_evolution_logs_alpha_eta():
    cfg = EvolutionConfig(n_pop=4, n_evals=12)
    best, record, trail = meta_evolve_slow_attention(BIPED, cfg, TaskConfig(t_final=1.0))
    assert [row["generation"] for row in trail] == [0, 1]
    assert all(0 <= row["alpha"] <= 1 and 0 <= row["eta"] <= 1 for row in trail)
    assert len(best.genotype) == 75
