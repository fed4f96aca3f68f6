"""Phylogenetic root and covariance estimators, Euclidean and tangent p-PCA."""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, CutLocusError, InvalidInputError, NumericError
from .geometry import cholesky_solve, frechet_mean
from .phylo import PTree, evolutionary_covariance

COND_WARN = 1e12


@dataclass
class RootEstimate:
    """Root estimate with iteration diagnostics.

    ``path`` lists the iterates, starting with the initial guess, and
    ``update_norms`` the g-norm of every update.  Closed-form or
    user-supplied roots have ``iterations == 0``.
    """

    point: np.ndarray
    iterations: int = 0
    final_update_norm: float = 0.0
    converged: bool = True
    path: list = field(default_factory=list, repr=False)
    update_norms: list = field(default_factory=list, repr=False)


@dataclass
class PpcaResult:
    """Output of (tangent) phylogenetic PCA.

    Attributes
    ----------
    root : RootEstimate
    eigenvalues : ndarray, shape (d,)
        Descending eigenvalues of the phylogenetic covariance.
    eigenvectors : ndarray, shape (d, d)
        Columns are eigenvectors, in orthonormal-basis coordinates.
    scores : ndarray, shape (N, k)
        Coordinates of the projected observations in the first k eigenvectors.
    reduced_points : ndarray, shape (N, ambient_dim)
        Back-mapped k-dimensional representation of the leaves.
    covariance : ndarray, shape (d, d)
    basis : ndarray, shape (ambient_dim, d)
        The g-orthonormal basis of the tangent space at the root.
    tangent_coords : ndarray, shape (N, d)
        Leaf logs in ``basis`` coordinates (centered data for Euclidean p-PCA).
    projected : ndarray, shape (N, ambient_dim)
        Projected tangent vectors in embedding coordinates, before ``exp``.
    leaf_names : list of str
    k : int
    ties : list of int
        Indices ``i`` with ``eigenvalues[i]`` numerically equal to
        ``eigenvalues[i + 1]``.
    """

    root: RootEstimate
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    scores: np.ndarray
    reduced_points: np.ndarray
    covariance: np.ndarray
    basis: np.ndarray
    tangent_coords: np.ndarray
    projected: np.ndarray
    leaf_names: list
    k: int
    ties: list = field(default_factory=list)

    def residual_sum_of_squares(self, k=None):
        """Squared norm of the tangent data left out by a rank-``k`` projection."""
        k = self.k if k is None else k
        kept = project(self.tangent_coords, self.eigenvectors, k)
        return float(np.sum((self.tangent_coords - kept) ** 2))

    def write_csv(self, outdir):
        """Write scree, scores, reduced points and root as CSV files."""
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "eigenvalues.csv", ["index", "eigenvalue", "cumulative_fraction"],
                    [[i, lam, frac] for i, lam, frac in scree(self)])
        _write_rows(out / "scores.csv", ["leaf"] + [f"pc{i + 1}" for i in range(self.k)],
                    [[name] + list(row) for name, row in zip(self.leaf_names, self.scores)])
        dim = self.reduced_points.shape[1]
        _write_rows(out / "reduced.csv", ["leaf"] + [f"c{i}" for i in range(dim)],
                    [[name] + list(row)
                     for name, row in zip(self.leaf_names, self.reduced_points)])
        _write_rows(out / "root.csv", ["iterations", "converged", "final_update_norm"]
                    + [f"c{i}" for i in range(dim)],
                    [[self.root.iterations, int(self.root.converged),
                      self.root.final_update_norm] + list(self.root.point)])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _resolve_covariance(tree, order=None):
    """``(C, leaf names)`` from a PTree or from an explicit covariance matrix."""
    if isinstance(tree, PTree):
        ids = tree.leaf_order(order)
        return evolutionary_covariance(tree, ids), [tree.label(i) for i in ids]
    C = np.asarray(tree, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise InvalidInputError("covariance must be a square matrix")
    names = list(order) if order is not None else [str(i) for i in range(len(C))]
    return C, names


def _check_conditioning(C, ridge):
    a = C + ridge * np.eye(len(C)) if ridge else C
    cond = np.linalg.cond(a)
    if cond > COND_WARN:
        warnings.warn(f"evolutionary covariance is ill-conditioned (cond={cond:.2e}); "
                      "consider a ridge", stacklevel=3)


def gls_root_estimate(X, C, ridge=0.0):
    """Generalized least squares root, ``(1' C^-1 1)^-1 (1' C^-1 X)``.

    Parameters
    ----------
    X : array_like, shape (N, d)
        Leaf values, rows in the same order as ``C``.
    C : array_like, shape (N, N)
        Evolutionary covariance.
    ridge : float
        Added to the diagonal of ``C`` before inversion.

    Returns
    -------
    ndarray, shape (d,)
    """
    X = np.asarray(X, dtype=float)
    C = np.asarray(C, dtype=float)
    if X.ndim != 2 or X.shape[0] != C.shape[0]:
        raise InvalidInputError(f"X has {X.shape[0]} rows but C is {C.shape}")
    w = cholesky_solve(C, np.ones(len(C)), ridge, "evolutionary covariance")
    return (w @ X) / w.sum()


def phylo_covariance(X_centered, C, ridge=0.0):
    """Phylogenetic covariance ``X_c' C^-1 X_c / (N - 1)`` (symmetrized)."""
    Xc = np.asarray(X_centered, dtype=float)
    C = np.asarray(C, dtype=float)
    n = Xc.shape[0]
    if n < 2:
        raise InvalidInputError("phylogenetic covariance needs at least two leaves")
    if C.shape != (n, n):
        raise InvalidInputError(f"X has {n} rows but C is {C.shape}")
    R = Xc.T @ cholesky_solve(C, Xc, ridge, "evolutionary covariance") / (n - 1)
    return (R + R.T) / 2


def eigen_decompose(R):
    """Descending eigenpairs of a symmetric matrix with deterministic signs.

    Each eigenvector is flipped so that its largest-magnitude entry is
    positive.  Equal eigenvalues keep solver order; their indices are
    returned as ``ties``.
    """
    vals, vecs = np.linalg.eigh((R + R.T) / 2)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(vecs.shape[1])])
    vecs = vecs * np.where(signs == 0, 1.0, signs)
    scale = max(abs(vals[0]), 1e-300) if len(vals) else 1.0
    ties = [i for i in range(len(vals) - 1) if abs(vals[i] - vals[i + 1]) <= 1e-12 * scale]
    return vals, vecs, ties


def project(coords, eigenvectors, k):
    """Orthogonal projection of row vectors onto the span of the first ``k`` columns."""
    Vk = eigenvectors[:, :k]
    return (coords @ Vk) @ Vk.T


def _check_k(k, d):
    if not 1 <= k <= d:
        raise InvalidInputError(f"k must be in 1..{d}, got {k}")


def euclidean_ppca(tree, X, k, order=None, ridge=0.0):
    """Phylogenetic PCA of Euclidean leaf data.

    ``tree`` may be a :class:`PTree` or an explicit covariance matrix.
    The returned ``reduced_points`` are ``r + projection`` in the original
    coordinates.
    """
    C, names = _resolve_covariance(tree, order)
    X = np.asarray(X, dtype=float)
    _check_k(k, X.shape[1])
    _check_conditioning(C, ridge)
    root = gls_root_estimate(X, C, ridge)
    Xc = X - root
    R = phylo_covariance(Xc, C, ridge)
    vals, vecs, ties = eigen_decompose(R)
    scores = Xc @ vecs[:, :k]
    projected = scores @ vecs[:, :k].T
    return PpcaResult(
        root=RootEstimate(root, path=[root]),
        eigenvalues=vals, eigenvectors=vecs, scores=scores,
        reduced_points=root + projected, covariance=R,
        basis=np.eye(X.shape[1]), tangent_coords=Xc, projected=projected,
        leaf_names=names, k=k, ties=ties)


def leaf_logs(manifold, base, leaves, names=None, workers=None):
    """``log_base`` of every leaf, in leaf order.

    Geometry errors are re-raised with the offending leaf's name.
    """
    leaves = np.asarray(leaves, dtype=float)
    names = names if names is not None else [str(i) for i in range(len(leaves))]

    def one(i):
        try:
            return manifold.log(base, leaves[i])
        except ConvergenceError as exc:
            raise ConvergenceError(f"leaf {names[i]}: {exc}", last=exc.last,
                                   residual=exc.residual) from exc
        except (CutLocusError, NumericError) as exc:
            raise type(exc)(f"leaf {names[i]}: {exc}") from exc

    if workers and workers > 1 and len(leaves) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vecs = list(pool.map(one, range(len(leaves))))
    else:
        vecs = [one(i) for i in range(len(leaves))]
    return np.array(vecs)


def estimate_root(manifold, tree, leaves, r0=None, eps=1e-5, max_iter=100, order=None,
                  ridge=0.0, workers=None):
    """Iterative root estimation on a manifold.

    Each pass maps the leaves to the tangent space at the current estimate,
    computes the GLS root ``r~`` there and moves to ``exp(r~)``.  Iteration
    stops once ``|r~|_g <= eps``; the final (small) update is still applied.

    Parameters
    ----------
    manifold : Manifold
    tree : PTree or ndarray
        Tree, or its evolutionary covariance.
    leaves : array_like, shape (N, ambient_dim)
        Leaf values in ``order`` (default: tree leaf order).
    r0 : array_like, optional
        Initial guess; the Fréchet mean of the leaves by default.
    eps : float
    max_iter : int
        Maximum number of passes.  Running out is reported through
        ``converged=False``, not an exception.

    Returns
    -------
    RootEstimate
        ``iterations`` counts passes, including the final one whose update
        fell below ``eps``.
    """
    if not eps > 0:
        raise InvalidInputError("eps must be positive")
    C, names = _resolve_covariance(tree, order)
    leaves = np.asarray(leaves, dtype=float)
    if len(leaves) != len(C):
        raise InvalidInputError(f"{len(leaves)} leaves but the tree has {len(C)}")
    _check_conditioning(C, ridge)
    if r0 is None:
        try:
            r0 = frechet_mean(manifold, leaves, workers=workers)
        except ConvergenceError as exc:
            warnings.warn(f"Fréchet mean initializer did not converge: {exc}", stacklevel=2)
            r0 = exc.last
    r = manifold.check_point(r0).copy()
    path, norms = [r], []
    norm = np.inf
    for it in range(1, max_iter + 1):
        X = leaf_logs(manifold, r, leaves, names, workers)
        update = gls_root_estimate(X, C, ridge)
        norm = manifold.norm(r, update)
        norms.append(norm)
        r = manifold.exp(r, update)
        path.append(r)
        if norm <= eps:
            return RootEstimate(r, it, norm, True, path, norms)
    return RootEstimate(r, max_iter, norm, False, path, norms)


def tangent_ppca(manifold, tree, leaves, root, k, order=None, basis=None, ridge=0.0,
                 workers=None):
    """Tangent phylogenetic PCA around an estimated root.

    The leaves are mapped to the tangent space at ``root``, expressed in a
    g-orthonormal basis (``L`` with ``g^-1 = L L'`` unless ``basis`` is
    given), reduced with phylogenetic PCA without re-centering, and the
    rank-``k`` projections are mapped back with ``exp``.

    Parameters
    ----------
    manifold : Manifold
    tree : PTree or ndarray
    leaves : array_like, shape (N, ambient_dim)
    root : RootEstimate or array_like
    k : int
        Dimension of the reduced representation, ``1 <= k <= manifold.dim``.
    basis : ndarray, optional
        Alternative g-orthonormal basis of the tangent space at ``root``.

    Returns
    -------
    PpcaResult
    """
    C, names = _resolve_covariance(tree, order)
    _check_k(k, manifold.dim)
    leaves = np.asarray(leaves, dtype=float)
    if len(leaves) != len(C):
        raise InvalidInputError(f"{len(leaves)} leaves but the tree has {len(C)}")
    _check_conditioning(C, ridge)
    if not isinstance(root, RootEstimate):
        point = manifold.check_point(root)
        root = RootEstimate(point, path=[point])
    r = root.point
    X = leaf_logs(manifold, r, leaves, names, workers)
    L = manifold.orthonormal_basis(r) if basis is None else np.asarray(basis, dtype=float)
    X_ortho = manifold.coordinates(r, X, L)
    R = phylo_covariance(X_ortho, C, ridge)
    vals, vecs, ties = eigen_decompose(R)
    scores = X_ortho @ vecs[:, :k]
    projected = manifold.from_coordinates(r, scores @ vecs[:, :k].T, L)
    reduced = np.array([manifold.exp(r, x) for x in projected])
    return PpcaResult(
        root=root, eigenvalues=vals, eigenvectors=vecs, scores=scores,
        reduced_points=reduced, covariance=R, basis=L, tangent_coords=X_ortho,
        projected=projected, leaf_names=names, k=k, ties=ties)


def scree(result):
    """``(index, eigenvalue, cumulative fraction)`` for every component.

    Fractions are computed from eigenvalues clipped at zero, so they are
    nondecreasing and the last one is 1 up to rounding.
    """
    vals = np.asarray(result.eigenvalues, dtype=float)
    clipped = np.clip(vals, 0.0, None)
    total = clipped.sum()
    cum = np.cumsum(clipped) / total if total > 0 else np.ones_like(vals)
    return [(i + 1, float(lam), float(c)) for i, (lam, c) in enumerate(zip(vals, cum))]
