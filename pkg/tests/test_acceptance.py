"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also repeated in the terminal summary.  ``python3 tests/test_acceptance.py``
runs the suite through pytest.
"""

import json
import time

import numpy as np
import pytest
from scipy.stats import special_ortho_group

from tppca import pipeline
from tppca.brownian import BmConfig, simulate_tree
from tppca.cli import main
from tppca.config import AnalysisConfig
from tppca.estimators import (
    estimate_root,
    euclidean_ppca,
    gls_root_estimate,
    tangent_ppca,
)
from tppca.manifolds import Euclidean, LandmarkManifold, Sphere
from tppca.phylo import evolutionary_covariance, four_leaf_tree, random_tree
from tppca.shapes import LandmarkDataset, read_landmarks_csv, sigma_rule

NORTH = np.array([0.0, 0.0, 1.0])
RESULTS = []


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def shared_prefix(tree):
    paths = []
    for leaf in tree.leaves:
        path, node = [], leaf
        while tree.parent(node) != -1:
            path.append((node, tree.length(node)))
            node = tree.parent(node)
        paths.append(path[::-1])
    C = np.zeros((len(paths), len(paths)))
    for i, a in enumerate(paths):
        for j, b in enumerate(paths):
            total = 0.0
            for (na, la), (nb, _) in zip(a, b):
                if na != nb:
                    break
                total += la
            C[i, j] = total
    return C


def test_criterion_1_euclidean_reduction():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(4, 33))
        d = int(rng.integers(1, 6))
        tree = random_tree(n, rng, 0.05, 1.0)
        X = rng.standard_normal((n, d))
        C = evolutionary_covariance(tree)
        k = int(rng.integers(1, d + 1))
        manifold = Euclidean(d)
        est = estimate_root(manifold, tree, X)
        res = tangent_ppca(manifold, tree, X, est, k)
        r_hat = np.linalg.solve(C, np.ones(n)) @ X / np.linalg.solve(C, np.ones(n)).sum()
        R_hat = (X - r_hat).T @ np.linalg.solve(C, X - r_hat) / (n - 1)
        alg1 = euclidean_ppca(tree, X, k)
        errs = [np.abs(est.point - r_hat).max(), np.abs(res.covariance - R_hat).max(),
                np.abs(res.eigenvalues - alg1.eigenvalues).max(),
                np.abs(res.scores - alg1.scores).max(),
                np.abs(res.reduced_points - alg1.reduced_points).max()]
        worst = max(worst, *errs)
    elapsed = time.perf_counter() - start
    report(1, worst < 1e-9 and elapsed < 10,
           f"max deviation {worst:.2e} (< 1e-9) over 50 trees in {elapsed:.1f} s (< 10 s)")


def test_criterion_2_covariance_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    mismatches = 0
    for i in range(100):
        n = 2 + i % 63
        tree = random_tree(n, rng, 0.0 if i % 7 == 0 else 0.01, 2.0)
        if not np.array_equal(evolutionary_covariance(tree), shared_prefix(tree)):
            mismatches += 1
    elapsed = time.perf_counter() - start
    report(2, mismatches == 0 and elapsed < 5,
           f"{mismatches} inexact matrices of 100 (2-64 leaves) in {elapsed:.1f} s (< 5 s)")


def test_criterion_3_sphere_geometry():
    s = Sphere()
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(1000):
        p = s.random_point(rng)
        v = s.random_tangent(p, rng)
        v *= rng.uniform(0, 0.9 * np.pi) / np.linalg.norm(v)
        worst = max(worst, np.linalg.norm(s.log(p, s.exp(p, v)) - v))
    d = s.dist(NORTH, [1.0, 0.0, 0.0])
    report(3, worst < 1e-8 and abs(d - np.pi / 2) < 1e-12,
           f"max round-trip error {worst:.2e} (< 1e-8); north pole to equator {d:.15f}")


def test_criterion_4_sphere_study(tmp_path):
    start = time.perf_counter()
    cfg = AnalysisConfig(manifold="sphere", replicates=200, epsilon=1e-5, seed=2024,
                         inner_length=0.2, leaf_length=0.3, step=1e-3)
    summary = pipeline.run_simulation_study(cfg, out=tmp_path)
    elapsed = time.perf_counter() - start
    ok = (summary["error_skewness"] > 0 and summary["error_p95"] < np.pi / 2
          and summary["error_median"] < np.pi / 2
          and summary["non_convergences_frechet"] == 0
          and (tmp_path / "error_hist.svg").exists() and elapsed < 300)
    report(4, ok,
           f"skewness {summary['error_skewness']:.3f} (> 0), p95 {summary['error_p95']:.3f} "
           f"(< pi/2), median {summary['error_median']:.3f}, "
           f"{summary['non_convergences_frechet']} non-convergences, {elapsed:.0f} s (< 300 s)")


def test_criterion_5_initializer_study(tmp_path):
    cfg = AnalysisConfig(manifold="sphere", replicates=100, epsilon=1e-5, seed=55,
                         inner_length=0.2, leaf_length=0.3)
    summary = pipeline.run_simulation_study(cfg, out=tmp_path)
    frechet = np.median([r["iterations_frechet"] for r in summary["rows"]])
    south = np.median([r["iterations_south_pole"] for r in summary["rows"]])
    failed = summary["non_convergences_south_pole"]
    report(5, frechet <= south and failed == 0,
           f"median iterations: Frechet mean {frechet:g} <= south pole {south:g} "
           f"({failed} south-pole failures)")


def test_criterion_6_lddmm_geometry():
    start = time.perf_counter()
    rng = np.random.default_rng(606)
    base = pipeline.template_shape(14)
    worst_drift = 0.0
    shapes = []
    for _ in range(100):
        q = (base + 0.02 * rng.standard_normal((14, 2))).ravel()
        sigma = sigma_rule(LandmarkDataset(["s"], ["s"], q.reshape(1, 14, 2)))
        m = LandmarkManifold(14, sigma)
        a = rng.standard_normal(28)
        a *= rng.uniform(0.1, 1.0) / np.linalg.norm(a)
        _, _, drift = m.geodesic(q, m.orthonormal_basis(q) @ a)
        worst_drift = max(worst_drift, drift)
        shapes.append((m, q))
    worst_rt = 0.0
    for m, q in shapes[:10]:
        v = m.orthonormal_basis(q) @ (0.1 * rng.standard_normal(28) / np.sqrt(28))
        worst_rt = max(worst_rt, np.abs(m.log(q, m.exp(q, v)) - v).max())
    single = LandmarkManifold(1, sigma=0.7)
    worst_line = 0.0
    for _ in range(20):
        q, v = rng.standard_normal(2), rng.standard_normal(2)
        worst_line = max(worst_line, np.abs(single.exp(q, v) - (q + v)).max())
    elapsed = time.perf_counter() - start
    ok = worst_drift < 1e-6 and worst_rt < 1e-4 and worst_line < 1e-8 and elapsed < 120
    report(6, ok, f"max drift {worst_drift:.2e} (< 1e-6), log/exp round trip {worst_rt:.2e} "
                  f"(< 1e-4), single landmark {worst_line:.2e} (< 1e-8), {elapsed:.0f} s")


def test_criterion_7_tangent_ppca_consistency():
    rng = np.random.default_rng(707)
    checks = []
    # sphere
    s = Sphere()
    tree = random_tree(12, rng, 0.1, 1.0)
    leaves = simulate_tree(s, tree, NORTH, BmConfig(step=1e-3, seed=7)).leaf_values()
    root = estimate_root(s, tree, leaves)
    # landmarks
    m = LandmarkManifold(4, sigma=0.6)
    q0 = pipeline.template_shape(4).ravel()
    ltree = random_tree(8, rng, 0.1, 1.0).scaled(0.01)
    lleaves = simulate_tree(m, ltree, q0, BmConfig(step=1e-3, seed=8)).leaf_values()
    lroot = estimate_root(m, ltree, lleaves, r0=gls_root_estimate(
        lleaves, evolutionary_covariance(ltree)))
    for manifold, t, x, r, tol in [(s, tree, leaves, root, 1e-10),
                                   (m, ltree, lleaves, lroot, 1e-5)]:
        d = manifold.dim
        full = tangent_ppca(manifold, t, x, r, d)
        checks.append(("k=d round trip", np.abs(full.reduced_points - x).max(), tol))
        rss = [full.residual_sum_of_squares(k) for k in range(1, d + 1)]
        increase = max(max(b - a for a, b in zip(rss, rss[1:])), 0.0)
        checks.append(("residual increase", increase, 1e-12))
        Q = special_ortho_group.rvs(d, random_state=int(rng.integers(1 << 31)))
        basis = manifold.orthonormal_basis(r.point) @ Q
        for k in range(1, d):
            a = tangent_ppca(manifold, t, x, r, k)
            b = tangent_ppca(manifold, t, x, r, k, basis=basis)
            dev = max(np.abs(a.eigenvalues - b.eigenvalues).max(),
                      np.abs(np.abs(a.scores) - np.abs(b.scores)).max(),
                      np.abs(a.reduced_points - b.reduced_points).max())
            checks.append((f"basis rotation k={k}", dev, 1e-8))
    failed = [f"{name} {val:.1e}" for name, val, tol in checks if not val < tol]
    worst_rot = max(v for n, v, _ in checks if n.startswith("basis"))
    report(7, not failed,
           f"{len(checks)} checks on sphere and landmarks; max rotation deviation "
           f"{worst_rot:.1e} (< 1e-8)" + (f"; failed: {failed}" if failed else ""))


def test_criterion_8_brownian_covariance():
    start = time.perf_counter()
    tree = four_leaf_tree(0.2, 0.3)
    M = 10_000
    real = simulate_tree(Euclidean(2), tree, np.zeros(2), BmConfig(step=1e-3, seed=808), size=M)
    flat = np.transpose(real.leaf_values(), (1, 0, 2)).reshape(M, -1)
    target = np.kron(evolutionary_covariance(tree), np.eye(2))
    emp = np.cov(flat.T)
    rel = np.linalg.norm(emp - target) / np.linalg.norm(target)
    elapsed = time.perf_counter() - start
    report(8, rel < 0.1 and elapsed < 120,
           f"relative Frobenius error {rel:.3f} (< 0.10) over {M} realizations, {elapsed:.1f} s")


def calibrated_radius(tree, dim, cfg, draws=2000, quantile=99, slack=1.5):
    """Monte-Carlo radius for the root error.

    In g-orthonormal coordinates at the true root the simulated leaves are
    approximately Gaussian with covariance ``C (x) I``; the root estimate's
    error is then that of the GLS estimator on a flat analog of the same tree
    and simulation settings.  The radius is ``slack`` times its upper
    ``quantile``.
    """
    real = simulate_tree(Euclidean(dim), tree, np.zeros(dim),
                         BmConfig(step=cfg.step, seed=cfg.seed + 1), size=draws)
    C = evolutionary_covariance(tree)
    w = np.linalg.solve(C, np.ones(len(C)))
    errors = np.linalg.norm(np.einsum("i,inj->nj", w / w.sum(), real.leaf_values()), axis=1)
    return slack * float(np.percentile(errors, quantile))


def test_criterion_9_end_to_end(tmp_path, capsys):
    tree = random_tree(16, np.random.default_rng(909), 0.1, 1.0)
    depth = max(tree.depth(leaf) for leaf in tree.leaves)
    tree = tree.scaled(4e-3 / depth)
    (tmp_path / "tree.nwk").write_text(tree.to_newick() + "\n")
    seed = 3
    assert main(["simulate", "--tree", str(tmp_path / "tree.nwk"), "--seed", str(seed),
                 "--out", str(tmp_path / "sim")]) == 0
    sim = json.loads((tmp_path / "sim" / "simulation.json").read_text())
    true_root = read_landmarks_csv(tmp_path / "sim" / "true_root.csv").flat()[0]
    # the simulation's kernel width is reused so the data and the analysis share a metric
    code = main(["tppca", "--tree", str(tmp_path / "tree.nwk"),
                 "--data", str(tmp_path / "sim" / "landmarks.csv"),
                 "--sigma", repr(sim["sigma"]), "--no-procrustes",
                 "--out", str(tmp_path / "res")])
    assert code == 0, capsys.readouterr().err
    rep = json.loads((tmp_path / "res" / "report.json").read_text())
    est = np.loadtxt(tmp_path / "res" / "root.csv", delimiter=",", skiprows=1)[3:]
    m = LandmarkManifold(14, sim["sigma"])
    error = m.dist(true_root, est)
    radius = calibrated_radius(tree, 28, AnalysisConfig(seed=seed))
    eig = np.loadtxt(tmp_path / "res" / "eigenvalues.csv", delimiter=",", skiprows=1)
    frac = eig[-1, 2]
    ok = rep["converged"] and error < radius and frac >= 0.99
    report(9, ok, f"root error {error:.4f} within calibrated radius {radius:.4f}; "
                  f"{rep['iterations']} iterations; cumulative fraction at k=d {frac:.6f}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v", "-s"]))
