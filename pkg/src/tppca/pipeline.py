"""End-to-end workflows behind the command-line tool."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from scipy import stats

from . import plots
from .brownian import BmConfig, simulate_tree
from .errors import InvalidInputError, StageError, TppcaError
from .estimators import (
    estimate_root,
    euclidean_ppca,
    gls_root_estimate,
    scree,
    tangent_ppca,
)
from .manifolds import Euclidean, LandmarkManifold, Sphere
from .phylo import evolutionary_covariance, four_leaf_tree, write_covariance_csv
from .shapes import (
    LandmarkDataset,
    procrustes_align,
    reconcile,
    sigma_rule,
    species_mean,
    write_landmarks_csv,
)

NORTH = np.array([0.0, 0.0, 1.0])
SOUTH = -NORTH


class _stage:
    """Context manager labelling package errors with a pipeline stage."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, typ, exc, tb):
        if exc is not None and isinstance(exc, TppcaError) and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def replicate_seed(seed, index):
    """Independent 64-bit seed for replicate ``index``."""
    return int(np.random.SeedSequence(int(seed), spawn_key=(int(index),))
               .generate_state(1, np.uint64)[0])


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _bm_config(cfg, seed=None):
    return BmConfig(step=cfg.step, scheme=cfg.scheme, seed=cfg.seed if seed is None else seed,
                    literal_clock=cfg.literal_clock)


# -- sphere / Euclidean simulation study -------------------------------------

def _study_replicate(cfg, manifold, tree, root, index):
    seed = replicate_seed(cfg.seed, index)
    real = simulate_tree(manifold, tree, root, _bm_config(cfg, seed))
    leaves = real.leaf_values()
    est = estimate_root(manifold, tree, leaves, r0=None, eps=cfg.epsilon,
                        max_iter=cfg.max_iter, ridge=cfg.ridge)
    row = {
        "replicate": index,
        "error": manifold.dist(root, est.point),
        "iterations_frechet": est.iterations,
        "converged_frechet": int(est.converged),
    }
    if isinstance(manifold, Sphere):
        try:
            south = estimate_root(manifold, tree, leaves, r0=-root, eps=cfg.epsilon,
                                  max_iter=cfg.max_iter, ridge=cfg.ridge)
            row["iterations_south_pole"] = south.iterations
            row["converged_south_pole"] = int(south.converged)
        except TppcaError:
            row["iterations_south_pole"] = -1
            row["converged_south_pole"] = 0
    return row


def run_simulation_study(cfg, tree=None, out=None):
    """Root-estimation error study on simulated trees.

    Simulates ``cfg.replicates`` trees from the north pole of S^2 (or the
    origin of R^2 with ``manifold = euclidean``), estimates each root from
    the Fréchet-mean initializer (and, on the sphere, from the south pole),
    and writes ``errors.csv``, ``summary.json`` and histogram SVGs.

    Returns the summary dictionary (with the per-replicate rows under
    ``"rows"``).
    """
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.manifold == "sphere":
        manifold, root = Sphere(), NORTH
    elif cfg.manifold == "euclidean":
        manifold, root = Euclidean(2), np.zeros(2)
    else:
        raise InvalidInputError("the simulation study runs on the sphere or euclidean manifold")
    if tree is None:
        tree = four_leaf_tree(cfg.inner_length, cfg.leaf_length)

    def job(i):
        with _stage(f"replicate {i}"):
            return _study_replicate(cfg, manifold, tree, root, i)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(job, range(cfg.replicates)))
    else:
        rows = [job(i) for i in range(cfg.replicates)]

    header = list(rows[0])
    with open(out / "errors.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(row[h])) if isinstance(row[h], float) else row[h]
                             for h in header])
    (out / "tree.nwk").write_text(tree.to_newick() + "\n", encoding="utf-8")

    errors = np.array([r["error"] for r in rows])
    summary = {
        "manifold": cfg.manifold,
        "replicates": cfg.replicates,
        "epsilon": cfg.epsilon,
        "seed": cfg.seed,
        "scheme": cfg.scheme,
        "step": cfg.step,
        "tree": tree.to_newick(),
        "error_mean": float(errors.mean()),
        "error_median": float(np.median(errors)),
        "error_p95": float(np.percentile(errors, 95)),
        "error_max": float(errors.max()),
        "error_skewness": float(stats.skew(errors)) if len(errors) > 2 else 0.0,
        "non_convergences_frechet": int(sum(1 - r["converged_frechet"] for r in rows)),
        "iterations_frechet_median": float(np.median([r["iterations_frechet"] for r in rows])),
    }
    counts = {"Fréchet mean": [r["iterations_frechet"] for r in rows]}
    if "iterations_south_pole" in header:
        south = [r["iterations_south_pole"] for r in rows]
        summary["non_convergences_south_pole"] = int(sum(1 - r["converged_south_pole"] for r in rows))
        summary["iterations_south_pole_median"] = float(np.median(south))
        counts["south pole"] = [c for c in south if c >= 0]
    _write_json(out / "summary.json", summary)
    reference = np.pi / 2 if cfg.manifold == "sphere" else None
    plots.histogram(errors, out / "error_hist.svg", "geodesic distance to true root",
                    reference=reference)
    plots.iteration_histograms(counts, out / "iterations_hist.svg")
    summary["rows"] = rows
    return summary


# -- synthetic landmark data ---------------------------------------------------

def template_shape(n_landmarks=14):
    """Jaw-like closed outline of ``n`` landmarks, centered, unit centroid size."""
    theta = 2 * np.pi * np.arange(n_landmarks) / n_landmarks
    x = np.cos(theta)
    y = 0.35 * np.sin(theta) + 0.2 * np.clip(np.sin(theta), 0, None) * np.cos(theta)
    shape = np.column_stack([x, y])
    shape -= shape.mean(axis=0)
    return shape / np.linalg.norm(shape)


def simulate_landmark_dataset(cfg, tree, root_shape=None, out=None):
    """Leaf shapes from Brownian motion on the LDDMM landmark manifold.

    Returns ``(dataset, true_root)``; with ``out`` also writes
    ``landmarks.csv`` (one specimen per leaf), ``true_root.csv``,
    ``realization.csv`` and ``tree.nwk``.
    """
    root_shape = template_shape() if root_shape is None else np.asarray(root_shape, dtype=float)
    root_shape = root_shape.reshape(-1, 2)
    n = len(root_shape)
    sigma = cfg.sigma
    if sigma is None:
        sigma = sigma_rule(LandmarkDataset(["root"], ["root"], root_shape[None]), cfg.sigma_factor)
    manifold = LandmarkManifold(n, sigma, cfg.beta, steps=cfg.geodesic_steps, log_tol=cfg.log_tol)
    root = root_shape.reshape(-1)
    with _stage("simulate"):
        real = simulate_tree(manifold, tree, root, _bm_config(cfg), workers=cfg.workers)
    names = tree.leaf_names
    leaves = real.leaf_values()
    dataset = LandmarkDataset(names, names, leaves.reshape(len(names), n, 2))
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_landmarks_csv(dataset, out / "landmarks.csv")
        write_landmarks_csv(LandmarkDataset(["root"], ["root"], root_shape[None]),
                            out / "true_root.csv")
        real.to_csv(out / "realization.csv")
        (out / "tree.nwk").write_text(tree.to_newick() + "\n", encoding="utf-8")
        _write_json(out / "simulation.json", {"sigma": sigma, "beta": cfg.beta,
                                               "seed": cfg.seed, "step": cfg.step,
                                               "scheme": cfg.scheme})
    return dataset, root


# -- analysis of landmark data -------------------------------------------------

def prepare(cfg, dataset, tree):
    """Align, average per species and order the rows by the tree's leaves.

    Returns ``(means, X)`` with ``X`` of shape ``(N, 2 n)``.
    """
    with _stage("procrustes"):
        aligned = procrustes_align(dataset, scale=not cfg.keep_scale) if cfg.procrustes else dataset
    with _stage("species-mean"):
        means = species_mean(aligned)
    with _stage("reconcile"):
        X = reconcile(means, tree)
    return means, X


def build_manifold(cfg, means, n_landmarks):
    if cfg.manifold == "euclidean":
        return Euclidean(2 * n_landmarks), None
    if cfg.manifold != "landmarks":
        raise InvalidInputError("landmark analyses need manifold = landmarks or euclidean")
    sigma = cfg.sigma if cfg.sigma is not None else sigma_rule(means, cfg.sigma_factor)
    return LandmarkManifold(n_landmarks, sigma, cfg.beta, steps=cfg.geodesic_steps,
                            log_tol=cfg.log_tol), sigma


def _initial_root(cfg, tree, X):
    if cfg.initializer == "euclidean":
        with _stage("euclidean-root"):
            return gls_root_estimate(X, evolutionary_covariance(tree), cfg.ridge)
    if cfg.initializer == "frechet":
        return None
    raise InvalidInputError("initializer 'south-pole' only applies to the sphere study")


def run_estimate_root(cfg, dataset, tree, out=None):
    means, X = prepare(cfg, dataset, tree)
    manifold, sigma = build_manifold(cfg, means, dataset.n_landmarks)
    r0 = _initial_root(cfg, tree, X)
    with _stage("estimate-root"):
        est = estimate_root(manifold, tree, X, r0=r0, eps=cfg.epsilon, max_iter=cfg.max_iter,
                            ridge=cfg.ridge, workers=cfg.workers)
    report = {"manifold": cfg.manifold, "sigma": sigma, "beta": cfg.beta,
              "epsilon": cfg.epsilon, "iterations": est.iterations,
              "converged": est.converged, "final_update_norm": est.final_update_norm,
              "update_norms": est.update_norms,
              "n_leaves": tree.n_leaves, "n_landmarks": dataset.n_landmarks}
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_landmarks_csv(LandmarkDataset(["root"], ["root"],
                                            est.point.reshape(1, -1, 2)), out / "root.csv")
        _write_json(out / "report.json", report)
    return est, report


def run_tppca(cfg, dataset, tree, out=None):
    """Full pipeline: align, species means, root estimation, tangent p-PCA.

    Writes ``eigenvalues.csv`` (scree), ``scores.csv``, ``reduced.csv``,
    ``root.csv``, ``observed.csv``, ``euclidean_root.csv``,
    ``covariance_C.csv``, ``report.json`` and ``scree.svg`` /
    ``shapes.svg``.  Returns ``(PpcaResult, report)``.
    """
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    means, X = prepare(cfg, dataset, tree)
    with _stage("geometry"):
        manifold, sigma = build_manifold(cfg, means, dataset.n_landmarks)
    C = evolutionary_covariance(tree)
    with _stage("euclidean-root"):
        euclid_root = gls_root_estimate(X, C, cfg.ridge)
    r0 = _initial_root(cfg, tree, X)
    with _stage("estimate-root"):
        est = estimate_root(manifold, tree, X, r0=r0, eps=cfg.epsilon, max_iter=cfg.max_iter,
                            ridge=cfg.ridge, workers=cfg.workers)
    k = cfg.k if cfg.k is not None else manifold.dim
    with _stage("tangent-ppca"):
        result = tangent_ppca(manifold, tree, X, est, k, ridge=cfg.ridge, workers=cfg.workers)

    result.write_csv(out)
    names = tree.leaf_names
    n = dataset.n_landmarks
    write_landmarks_csv(LandmarkDataset(names, names, X.reshape(-1, n, 2)), out / "observed.csv")
    write_landmarks_csv(LandmarkDataset(["euclidean_root"], ["euclidean_root"],
                                        euclid_root.reshape(1, n, 2)), out / "euclidean_root.csv")
    write_covariance_csv(C, names, out / "covariance_C.csv")
    rows = scree(result)
    report = {
        "manifold": cfg.manifold, "sigma": sigma, "beta": cfg.beta, "k": k,
        "epsilon": cfg.epsilon, "iterations": est.iterations, "converged": est.converged,
        "final_update_norm": est.final_update_norm, "update_norms": est.update_norms,
        "n_leaves": tree.n_leaves,
        "n_landmarks": n, "ultrametric": tree.is_ultrametric(),
        "cumulative_fraction_at_k": rows[k - 1][2], "eigenvalue_ties": result.ties,
    }
    _write_json(out / "report.json", report)
    plots.scree_plot(rows, out / "scree.svg")
    plots.shape_overlay(X.reshape(-1, n, 2), result.reduced_points.reshape(-1, n, 2),
                        {"root (manifold)": est.point.reshape(n, 2),
                         "root (Euclidean)": euclid_root.reshape(n, 2)},
                        out / "shapes.svg")
    return result, report


def run_ppca(cfg, dataset, tree, out=None):
    """Euclidean phylogenetic PCA of the aligned, flattened landmark coordinates."""
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    means, X = prepare(cfg, dataset, tree)
    k = cfg.k if cfg.k is not None else X.shape[1]
    with _stage("ppca"):
        result = euclidean_ppca(tree, X, k, ridge=cfg.ridge)
    result.write_csv(out)
    rows = scree(result)
    n = dataset.n_landmarks
    report = {"manifold": "euclidean", "k": k, "n_leaves": tree.n_leaves, "n_landmarks": n,
              "cumulative_fraction_at_k": rows[k - 1][2], "eigenvalue_ties": result.ties}
    _write_json(out / "report.json", report)
    plots.scree_plot(rows, out / "scree.svg")
    plots.shape_overlay(X.reshape(-1, n, 2), result.reduced_points.reshape(-1, n, 2),
                        {"root (Euclidean)": result.root.point.reshape(n, 2)},
                        out / "shapes.svg")
    return result, report
