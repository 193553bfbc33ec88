"""Acceptance suite: one test and one printed PASS/FAIL line per criterion.

The desk-scale campaign behind criteria 5-8 takes roughly a quarter of an
hour on one core. Set ATTNVSR_DESK_DIR to keep (and reuse) its run
directories between sessions, and ATTNVSR_JOBS to evaluate in parallel.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from attnvsr.campaign import DeskScale, run_campaign
from attnvsr.cli import main as cli_main
from attnvsr.controllers import (
    AttentionParams,
    ControllerSpec,
    attention_forward,
    attention_forward_encoded,
    attention_matrix,
    decode,
    mlp_comm_forward,
    mlp_forward,
    param_count,
)
from attnvsr.evolution import EvolutionConfig, Individual, evolve, gaussian_mutation, geometric_crossover, make_offspring
from attnvsr.experiments import TaskConfig, run_episode
from attnvsr.morphology import morphology_from_mask, one_hot_encode
from attnvsr.stats import mann_whitney_u
from conftest import ACCEPTANCE_LINES, BIPED, COMB

PLANS = Path(__file__).resolve().parent.parent / "plans"


def record(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


@pytest.fixture(scope="session")
def campaign(tmp_path_factory):
    root = os.environ.get("ATTNVSR_DESK_DIR")
    root = Path(root) if root else tmp_path_factory.mktemp("desk")
    desk = DeskScale(jobs=int(os.environ.get("ATTNVSR_JOBS", "1")))
    return desk, run_campaign(root, desk, progress=lambda msg: None)


def test_criterion_01_parameter_counts():
    n_biped = morphology_from_mask(BIPED).n_voxels
    n_comb = morphology_from_mask(COMB).n_voxels
    got = {
        "Attention/biped": param_count(ControllerSpec("Attention"), n_biped),
        "Attention/comb": param_count(ControllerSpec("Attention"), n_comb),
        "MLP/biped": param_count(ControllerSpec("MLP"), n_biped),
        "MLP/comb": param_count(ControllerSpec("MLP"), n_comb),
        "MLPComm/biped": param_count(ControllerSpec("MLPComm"), n_biped),
    }
    want = {"Attention/biped": 73, "Attention/comb": 77, "MLP/biped": 41, "MLP/comb": 45, "MLPComm/biped": 405}
    assert record(1, got == want, f"parameter counts {got}")


def test_criterion_02_forward_oracles():
    rng = np.random.default_rng(2024)
    worst = 0.0
    in_range = True
    start = time.time()
    for _ in range(1000):
        n = int(rng.integers(1, 20))
        i = int(rng.integers(0, n))
        s = rng.uniform(-0.2, 1.2, 4)

        p = rng.normal(scale=2.0, size=(4, 8))
        X = one_hot_encode(s, i, n)
        A = attention_matrix(X, AttentionParams(*p), i)
        worst = max(worst, np.max(np.abs(A - np.array(oracles.attention_matrix(X.tolist(), *p.tolist(), i)))))
        in_range &= bool(np.all(np.abs(A) <= 1))

        theta = rng.normal(size=param_count(ControllerSpec(), n))
        a = attention_forward(s, i, n, theta, ControllerSpec())
        worst = max(worst, abs(a - oracles.attention_forward(s, i, n, theta)))
        in_range &= -1 <= a <= 1

        theta = rng.normal(size=4 * n + 1)
        a = mlp_forward(s, i, n, theta)
        worst = max(worst, abs(a - oracles.mlp_forward(s, i, n, theta)))
        in_range &= -1 <= a <= 1

        theta = rng.normal(size=40 * n + 5)
        incoming = rng.uniform(-1, 1, 4)
        a, out = mlp_comm_forward(s, incoming, i, n, theta)
        ra, rout = oracles.mlp_comm_forward(s, incoming, i, n, theta)
        worst = max(worst, abs(a - ra), np.max(np.abs(out - np.array(rout))))
        in_range &= -1 <= a <= 1 and bool(np.all(np.abs(out) <= 1))
    elapsed = time.time() - start
    ok = worst <= 1e-12 and in_range and elapsed < 10
    assert record(2, ok, f"max |diff| vs naive loops {worst:.2e} over 4x1000 cases, ranges ok={in_range}, {elapsed:.1f} s")


def test_criterion_03_locality():
    rng = np.random.default_rng(7)
    spec = ControllerSpec()
    changed = 0
    for _ in range(1000):
        n = int(rng.integers(2, 20))
        i = int(rng.integers(0, n))
        g = decode(rng.normal(scale=2.0, size=param_count(spec, n)), spec, n)
        s = rng.uniform(0, 1, 4)
        X = one_hot_encode(s, i, n)
        Xp = rng.normal(scale=100.0, size=X.shape)
        Xp[:, i] = s
        same_A = np.array_equal(attention_matrix(X, g.attn, i), attention_matrix(Xp, g.attn, i))
        same_a = attention_forward_encoded(X, i, g) == attention_forward_encoded(Xp, i, g)
        changed += not (same_A and same_a)
    assert record(3, changed == 0, f"{changed}/1000 inputs changed A or actuation when columns j != i were perturbed")


def _sphere(genotype, seed):
    return -float(np.sum(genotype * genotype))


def test_criterion_04_ga_operators_and_sphere():
    rng = np.random.default_rng(11)
    trials = 10**5
    var = float(np.var(gaussian_mutation(np.zeros(trials), 0.35, rng)))
    var_ok = abs(var / 0.1225 - 1) <= 0.05

    t1, t2 = np.array([1.0, 2.0, -3.0]), np.array([2.0, 4.0, -5.0])
    mid = t1 + 0.5 * (t2 - t1)
    mean = np.mean([geometric_crossover(t1, t2, 0.1, rng) for _ in range(trials)], axis=0)
    mid_ok = bool(np.all(np.abs(mean - mid) <= 0.02 * np.abs(mid)))

    cfg = EvolutionConfig()
    pop = [Individual(np.array([float(k)]), k, k, float(k)) for k in range(10)]
    frac = sum(make_offspring(pop, cfg, rng)[1] == "mutation" for _ in range(trials)) / trials
    mix_ok = abs(frac - cfg.p_mut) <= 0.02 * cfg.p_mut

    bests = []
    for seed in range(5):
        best, _ = evolve(EvolutionConfig(n_evals=30000, master_seed=seed), 10, _sphere)
        bests.append(best.fitness)
    sphere_ok = all(b > -0.01 for b in bests)

    ok = var_ok and mid_ok and mix_ok and sphere_ok
    assert record(4, ok, (
        f"mutation var {var:.5f} (target 0.1225), crossover mean {np.round(mean, 4).tolist()} vs midpoint "
        f"{mid.tolist()}, mutation fraction {frac:.4f}; sphere best per seed {np.round(bests, 5).tolist()} "
        f"({sum(b > -0.01 for b in bests)}/5 above -0.01)"))


def test_criterion_05_desk_scale_ordering(campaign):
    desk, res = campaign
    best = {f: [r.best_fitness for r in runs] for f, runs in res.runs.items()}
    med_att, med_mlp = np.median(best["Attention"]), np.median(best["MLP"])
    floor = 5 * float(np.max(np.abs(res.baseline)))
    held_out = {f: [float(np.mean(v)) for v in res.reassessed[f]] for f in ("Attention", "MLPComm")}
    wins = {f: sum(v > floor for v in vs) for f, vs in held_out.items()}
    _, p = mann_whitney_u(best["Attention"], best["MLP"])
    ok = med_att > med_mlp and wins["Attention"] >= 3 and wins["MLPComm"] >= 3
    assert record(5, ok, (
        f"median best v: Attention {med_att:.4f} > MLP {med_mlp:.4f} (MLPComm {np.median(best['MLPComm']):.4f}, "
        f"U-test p={p:.3f}); held-out mean above 5x zero baseline ({floor:.1e}): "
        f"Attention {wins['Attention']}/5, MLPComm {wins['MLPComm']}/5"))


def test_criterion_06_ablation_drop(campaign):
    desk, res = campaign
    ratios = []
    for frozen, unfrozen in res.ablation:
        assert len(frozen) == 30
        ratios.append(np.median(frozen) / unfrozen if unfrozen > 0 else np.inf)
    ok = all(r < 0.5 for r in ratios)
    assert record(6, ok, f"median frozen / unfrozen per robot {np.round(ratios, 3).tolist()} (need all < 0.5)")


def test_criterion_07_finetune_speedup(campaign):
    desk, res = campaign
    pairs = [(f.best_fitness, s.best_fitness) for f, s in zip(res.finetune, res.scratch)]
    wins = sum(f >= s for f, s in pairs)
    assert record(7, wins >= 3, (
        f"fine-tune >= scratch after {desk.finetune_n_evals} evaluations on {wins}/5 seeds "
        f"{[(round(f, 4), round(s, 4)) for f, s in pairs]}"))


def test_criterion_08_slow_attention(campaign):
    desk, res = campaign
    alphas = [r["alpha"] for r in res.alpha_eta]
    etas = [r["eta"] for r in res.alpha_eta]
    trend = np.median(alphas) > np.median(etas)

    rng = np.random.default_rng(8)
    exact = True
    task = TaskConfig(t_final=10.0)
    for seed in range(3):
        theta = rng.uniform(-1, 1, 73)
        plain = run_episode(theta, ControllerSpec("Attention"), BIPED, seed, task, record_trajectory=True)
        slow = run_episode(np.concatenate([theta, [1.0, 0.0]]), ControllerSpec("SlowAttention"), BIPED, seed, task,
                           record_trajectory=True)
        exact &= plain.velocity == slow.velocity and all(
            a["com_x"] == b["com_x"] and a["com_y"] == b["com_y"] for a, b in zip(plain.trajectory, slow.trajectory))
    assert record(8, trend and exact, (
        f"median alpha {np.median(alphas):.3f} vs median eta {np.median(etas):.3f} "
        f"(alpha {np.round(alphas, 3).tolist()}, eta {np.round(etas, 3).tolist()}); "
        f"(1, 0) matches plain attention bit for bit: {exact}"))


def _run_all(out: Path, jobs: str):
    fast = ["--n-evals", "300", "--t-final", "2", "--jobs", jobs]
    att = str(PLANS / "biped_attention.toml")
    assert cli_main(["evolve", "--plan", att, "--out", str(out), "--export", *fast]) == 0
    g = str(out / "biped-attention" / "0" / "best_genotype.txt")
    assert cli_main(["reassess", "--plan", att, "--genotype", g, "--out", str(out), *fast]) == 0
    assert cli_main(["ablate", "--plan", att, "--genotype", g, "--out", str(out), *fast]) == 0
    assert cli_main(["finetune", "--plan", str(PLANS / "biped_finetune.toml"), "--genotype", g,
                     "--out", str(out), *fast]) == 0
    assert cli_main(["meta", "--plan", str(PLANS / "biped_slow_attention.toml"), "--out", str(out), *fast]) == 0
    assert cli_main(["evolve", "--plan", str(PLANS / "biped_mlpcomm.toml"), "--out", str(out), *fast]) == 0
    assert cli_main(["plotdata", "--runs", str(out), "--out", str(out.parent / (out.name + "-plots"))]) == 0


def test_criterion_09_determinism(tmp_path, capsys):
    runs = {}
    for label, jobs in (("a", "1"), ("b", "1"), ("c", "2")):
        _run_all(tmp_path / label, jobs)
        runs[label] = tmp_path / label
    capsys.readouterr()

    def files(root):
        return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}

    ref = files(runs["a"])
    mismatched = [str(k) for label in ("b", "c") for k, v in files(runs[label]).items() if ref.get(k) != v]
    plots = [files(tmp_path / f"{label}-plots") for label in ("a", "b", "c")]
    same_plots = plots[0] == plots[1] == plots[2]
    ok = not mismatched and same_plots and len(ref) >= 12
    assert record(9, ok, f"{len(ref)} output files byte-identical across reruns and --jobs 1/2 "
                         f"(mismatches: {mismatched or 'none'}, plot tables identical: {same_plots})")


def test_criterion_10_mann_whitney():
    u, p = mann_whitney_u([1, 2, 3, 4, 5], [6, 7, 8, 9, 10])
    u2, p2 = mann_whitney_u([6, 7, 8, 9, 10], [1, 2, 3, 4, 5])
    _, p_same = mann_whitney_u([1, 2, 3, 4, 5], [1, 2, 3, 4, 5])
    ok = abs(p - 2 / 252) < 1e-15 and p_same == 1.0 and p == p2 and u + u2 == 25
    assert record(10, ok, f"separated p={p:.6f} (2/252={2 / 252:.6f}), identical p={p_same}, swapped p={p2:.6f}")
