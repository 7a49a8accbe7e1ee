"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line that is printed in the terminal
summary. Criteria 1, 2 and 4 are known to fail with this implementation; the
reasons are measured and printed alongside (see the README).

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.stats import multivariate_normal

from moegp.datasets import (BERNHOLDT_NOISE_SD, SplitSpec, bernholdt_f, distinguishable_levels, gen_bernholdt,
                            gen_higdon, higdon_f, load_csv, plateau_products, save_csv,
                            train_test_split)
from moegp.gating import GatingNetwork, init_network, loss_and_grad
from moegp.kernel import KernelParams, kernel_eval, kernel_grads, kernel_matrix
from moegp.moe import TrainConfig, expert_moments, predict_batch, predictive_density, r_squared, train
from moegp.sparse_gp import SparseGPExpert, exact_gp_log_marginal, fitc_log_marginal, fitc_objective

from conftest import finite_diff, record_acceptance, rel_err

pytestmark = pytest.mark.acceptance

HIGDON_N = 1000
SEED = 0


def timed_train(X, y, cfg):
    t0 = time.perf_counter()
    model, trace = train(X, y, cfg)
    return model, trace, time.perf_counter() - t0


@pytest.fixture(scope="module")
def higdon():
    ds = gen_higdon(HIGDON_N, seed=SEED)
    tr, te = train_test_split(ds, SplitSpec(0.8, SEED))
    runs = {}
    for alg in ("ccr", "mm2r", "mm"):
        runs[alg] = timed_train(tr.X, tr.y, TrainConfig(algorithm=alg, seed=SEED))
    return tr, te, runs


def test_1_higdon_accuracy(higdon):
    tr, te, runs = higdon
    r2 = {a: r_squared(te.y, predict_batch(m, te.X)[0]) for a, (m, _, _) in runs.items()}
    clean = {a: r_squared(higdon_f(te.X[:, 0]), predict_batch(m, te.X)[0])
             for a, (m, _, _) in runs.items()}
    ceiling = r_squared(te.y, higdon_f(te.X[:, 0]))
    ok = (r2["ccr"] >= 0.985 and r2["mm"] >= 0.995 and r2["mm"] >= r2["ccr"] - 0.001
          and r2["mm2r"] >= 0.985)
    record_acceptance(1, ok,
                      "Higdon test R2 ccr={ccr:.4f} (>=0.985) mm={mm:.4f} (>=0.995, >=ccr-0.001) "
                      "mm2r={mm2r:.4f} (>=0.985)".format(**r2)
                      + f"; true f scores {ceiling:.4f} on these noisy targets; "
                      "R2 vs noise-free f: " + " ".join(f"{a}={v:.4f}" for a, v in clean.items()))
    assert ok


def test_2_speed_ordering(higdon):
    tr, _, runs = higdon
    t_ccr, t_mm2r = runs["ccr"][2], runs["mm2r"][2]
    _, trace, t_mm = timed_train(tr.X, tr.y, TrainConfig(algorithm="mm", min_mm_iters=3, seed=SEED))
    iters = len(trace)
    ok = iters >= 3 and t_ccr <= 0.5 * t_mm2r and 0.5 * t_mm2r <= 0.5 * t_mm
    record_acceptance(2, ok, f"wall-clock ccr={t_ccr:.2f}s mm2r={t_mm2r:.2f}s mm={t_mm:.2f}s "
                             f"({iters} MM iterations); ccr/mm2r={t_ccr / t_mm2r:.2f} (<=0.5), "
                             f"mm2r/mm={t_mm2r / t_mm:.2f} (<=1)")
    assert ok


def test_3_motorcycle():
    path = os.environ.get("MOEGP_MOTORCYCLE_CSV")
    if not path:
        record_acceptance(3, None, "motorcycle data not supplied (set MOEGP_MOTORCYCLE_CSV)")
        pytest.skip("MOEGP_MOTORCYCLE_CSV not set")
    ds = load_csv(path)
    scores = []
    for seed in range(5):
        tr, te = train_test_split(ds, SplitSpec(0.8, seed))
        model, _ = train(tr.X, tr.y, TrainConfig(algorithm="mm", seed=seed))
        scores.append(r_squared(te.y, predict_batch(model, te.X)[0]))
    ok = float(np.mean(scores)) >= 0.70
    record_acceptance(3, ok, f"motorcycle MM mean test R2 {np.mean(scores):.4f} over 5 seeds (>=0.70)")
    assert ok


def test_4_bernholdt_surrogate():
    ds = gen_bernholdt(1000, seed=SEED)
    tr, te = train_test_split(ds, SplitSpec(0.8, SEED))
    model, _ = train(tr.X, tr.y, TrainConfig(algorithm="ccr", seed=SEED))
    r2 = r_squared(te.y, predict_batch(model, te.X)[0])
    regimes = distinguishable_levels(plateau_products(), BERNHOLDT_NOISE_SD, k=5)
    L = model.num_experts
    ceiling = r_squared(te.y, bernholdt_f(te.X))
    ok = r2 >= 0.95 and abs(L - regimes) <= 1
    record_acceptance(4, ok, f"surrogate CCR test R2 {r2:.4f} (>=0.95), L={L} vs {regimes} "
                             f"regimes (+-1); true f scores {ceiling:.4f} on these noisy targets")
    assert ok


def test_5_fitc_oracle_equivalence():
    worst, algebra = 0.0, 0.0
    for k in range(100):
        rng = np.random.default_rng([SEED, 5, k])
        n, d = int(rng.integers(1, 21)), int(rng.integers(1, 4))
        X = rng.uniform(-3, 3, size=(n, d))
        s = rng.uniform(0.5, 2)
        kern = KernelParams.from_natural(rng.uniform(0.5, 2), s)
        # noise >= 0.1 s: the fixed 1e-8 s jitter on K_MM stays below the tolerance
        noise = s * rng.uniform(0.1, 1)
        e = SparseGPExpert(float(rng.normal()), kern, math.log(noise), X, np.zeros(n))
        y = rng.normal(size=n)
        val = fitc_log_marginal(e, X, y)
        worst = max(worst, abs(val - exact_gp_log_marginal(e.mean, kern, noise, X, y)))
        # diagnostic: dense FITC with the same jittered K_MM isolates the algebra
        Kmm = kernel_matrix(kern, X, X) + 1e-8 * s * np.eye(n)
        Q = kernel_matrix(kern, X, X) @ np.linalg.solve(Kmm, kernel_matrix(kern, X, X))
        Q += np.diag(np.maximum(s - np.diag(Q), 0.0)) + noise * np.eye(n)
        dense = multivariate_normal(np.full(n, e.mean), Q).logpdf(y)
        algebra = max(algebra, abs(val - dense))
    ok = worst <= 1e-6
    record_acceptance(5, ok, f"FITC vs dense GP, 100 instances: max |diff| {worst:.2e} (<=1e-6); "
                             f"vs dense FITC with the same 1e-8 K_MM jitter: {algebra:.1e}")
    assert ok


def test_6_gradient_suites():
    rng = np.random.default_rng([SEED, 6])
    errs = {"kernel": 0.0, "fitc": 0.0, "gating": 0.0}
    for _ in range(5):
        theta = rng.normal(scale=0.5, size=2)
        a, b = rng.normal(size=2), rng.normal(size=2)
        dl, ds = kernel_grads(KernelParams(*theta), a[None], b[None])
        fd = finite_diff(lambda t: kernel_eval(KernelParams(*t), a, b), theta)
        errs["kernel"] = max(errs["kernel"], rel_err([dl[0, 0], ds[0, 0]], fd))

        X = rng.uniform(-2, 2, size=(12, 2))
        y = np.sin(X[:, 0]) + 0.1 * rng.normal(size=12)
        th = np.concatenate([[0.1, 0.0, math.log(0.1), 0.0], rng.uniform(-2, 2, size=8)])
        g = fitc_objective(th, X, y)[1]
        fd = finite_diff(lambda t: fitc_objective(t, X, y, with_grad=False), th)
        errs["fitc"] = max(errs["fitc"], rel_err(g, fd))

        net = init_network(2, (3,), 2, seed=int(rng.integers(1000)))
        H, z = rng.normal(size=(5, 2)), rng.integers(2, size=5)
        params = list(net.weights) + list(net.biases)
        _, gW, gb = loss_and_grad(net, H, z, 0.001)
        flat = np.concatenate([p.ravel() for p in params])
        sizes = np.cumsum([p.size for p in params])[:-1]

        def loss(v):
            parts = [p.reshape(q.shape) for p, q in zip(np.split(v, sizes), params)]
            trial = GatingNetwork(tuple(parts[:2]), tuple(parts[2:]), net.input_shift,
                                  net.input_scale)
            return loss_and_grad(trial, H, z, 0.001)[0]

        analytic = np.concatenate([q.ravel() for q in gW + gb])
        errs["gating"] = max(errs["gating"], rel_err(analytic, finite_diff(loss, flat)))
    ok = all(v <= 1e-4 for v in errs.values())
    record_acceptance(6, ok, "max relative FD error " +
                      " ".join(f"{k}={v:.1e}" for k, v in errs.items()) + " (<=1e-4)")
    assert ok


def test_7_mm_allocation_monotone(higdon):
    tr, _, runs = higdon
    traces = [runs["mm"][1], runs["mm2r"][1]]
    # plus a longer run from a random start, so that several allocation steps are logged
    cfg = TrainConfig(algorithm="mm", random_init=True, num_experts=2, max_mm_iters=6,
                      r2_improvement_tol=0.0, seed=SEED)
    traces.append(train(tr.X, tr.y, cfg)[1])
    steps = [(r.alloc_before, r.alloc_after) for t in traces for r in t.records
             if not math.isnan(r.alloc_before)]
    bad = [s for s in steps if s[1] < s[0]]
    ok = len(steps) > 0 and not bad
    record_acceptance(7, ok, f"{len(steps)} logged allocation steps over {len(traces)} MM runs, "
                             f"{len(bad)} decreased the objective")
    assert ok


def test_8_coverage(higdon):
    _, te, runs = higdon
    cover = {}
    for alg, (model, _, _) in runs.items():
        mean, var, _, _ = predict_batch(model, te.X, "soft")
        cover[alg] = float(np.mean(np.abs(te.y - mean) <= 2 * np.sqrt(var)))
    ok = all(c >= 0.90 for c in cover.values())
    record_acceptance(8, ok, "Higdon soft +-2sd coverage " +
                      " ".join(f"{a}={c:.3f}" for a, c in cover.items()) + " (>=0.90)")
    assert ok


def test_9_density_normalization(higdon):
    _, te, runs = higdon
    model = runs["ccr"][0]
    rng = np.random.default_rng([SEED, 9])
    worst, covered = 0.0, 0.0
    m, v = expert_moments(model, te.X)
    for i in rng.choice(te.n, 20, replace=False):
        mean, var, _, _ = predict_batch(model, te.X[i:i + 1])
        sd = math.sqrt(var[0])
        grid = np.linspace(mean[0] - 6 * sd, mean[0] + 6 * sd, 2001)
        worst = max(worst, abs(trapezoid(predictive_density(model, te.X[i], grid), grid) - 1))
        # diagnostic: a grid spanning +-8 sd of every component
        sds = np.sqrt(v[i])
        grid = np.linspace((m[i] - 8 * sds).min(), (m[i] + 8 * sds).max(), 20001)
        covered = max(covered, abs(trapezoid(predictive_density(model, te.X[i], grid), grid) - 1))
    ok = worst <= 1e-3
    record_acceptance(9, ok, f"density integral over +-6 mixture sd, 20 points: max |1 - I| "
                             f"{worst:.1e} (<=1e-3); over +-8 sd of every component: {covered:.1e}")
    assert ok


def test_10_cli_determinism(tmp_path):
    data = tmp_path / "higdon.csv"
    save_csv(gen_higdon(HIGDON_N, seed=SEED), data)
    outs = []
    for k in range(2):
        files = [tmp_path / f"{name}{k}" for name in ("model.json", "labels.txt", "report.json")]
        cmd = [sys.executable, "-m", "moegp.cli", "train", "--data", str(data),
               "--algorithm", "ccr", "--seed", "7", "--out-model", str(files[0]),
               "--out-labels", str(files[1]), "--out-report", str(files[2])]
        subprocess.run(cmd, check=True, capture_output=True)
        outs.append(files)
    same_model = outs[0][0].read_bytes() == outs[1][0].read_bytes()
    same_labels = outs[0][1].read_bytes() == outs[1][1].read_bytes()
    r2 = [json.loads(f[2].read_text())["test_r2"] for f in outs]
    ok = same_model and same_labels and abs(r2[0] - r2[1]) <= 1e-10
    record_acceptance(10, ok, f"two `train --algorithm ccr --seed 7` runs: identical model "
                              f"{same_model}, identical labels {same_labels}, "
                              f"|dR2| {abs(r2[0] - r2[1]):.1e}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
