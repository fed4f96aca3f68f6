"""Riemannian manifold interface and manifold-generic statistics.

Points and tangent vectors are plain numpy arrays in embedding (or global
chart) coordinates.  A tangent vector is always interpreted relative to the
base point it is passed with.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import linalg

from .errors import ConvergenceError, InvalidInputError, NumericError

POINT_ATOL = 1e-9


class Manifold(ABC):
    """Abstract Riemannian manifold.

    Subclasses provide ``exp``, ``log`` and either ``metric`` or
    ``cometric`` (ideally both, to avoid needless inversions).  Instances
    are treated as immutable after construction.
    """

    #: short identifier, also used in configuration files
    name = "manifold"

    def __init__(self, dim: int, ambient_dim: int | None = None):
        self._dim = int(dim)
        self._ambient_dim = int(ambient_dim if ambient_dim is not None else dim)

    @property
    def dim(self) -> int:
        """Intrinsic dimension."""
        return self._dim

    @property
    def ambient_dim(self) -> int:
        """Length of the coordinate vectors used for points and vectors."""
        return self._ambient_dim

    @property
    def injectivity_radius(self) -> float | None:
        """Conservative injectivity bound, or ``None`` when unknown."""
        return None

    # -- validation ---------------------------------------------------------

    def belongs(self, p, atol=POINT_ATOL) -> bool:
        p = np.asarray(p, dtype=float)
        return p.shape[-1] == self.ambient_dim and bool(np.all(np.isfinite(p)))

    def is_tangent(self, p, v, atol=POINT_ATOL) -> bool:
        v = np.asarray(v, dtype=float)
        return v.shape == np.shape(p) and bool(np.all(np.isfinite(v)))

    def check_point(self, p, atol=POINT_ATOL):
        p = np.asarray(p, dtype=float)
        if p.shape[-1:] != (self.ambient_dim,):
            raise InvalidInputError(
                f"{self.name}: expected coordinates of length {self.ambient_dim}, "
                f"got shape {p.shape}")
        if not self.belongs(p, atol):
            raise InvalidInputError(f"{self.name}: point is not on the manifold")
        return p

    def check_tangent(self, p, v, atol=POINT_ATOL):
        v = np.asarray(v, dtype=float)
        if v.shape != np.shape(p):
            raise InvalidInputError(
                f"{self.name}: tangent vector shape {v.shape} does not match "
                f"base point shape {np.shape(p)}")
        if not self.is_tangent(p, v, atol):
            raise InvalidInputError(f"{self.name}: vector is not tangent at base point")
        return v

    # -- metric -------------------------------------------------------------

    def metric(self, p) -> np.ndarray:
        """Metric tensor at ``p`` acting on coordinate vectors."""
        return np.linalg.inv(self.cometric(p))

    def cometric(self, p) -> np.ndarray:
        """Inverse metric tensor at ``p``."""
        return np.linalg.inv(self.metric(p))

    def inner(self, p, u, v) -> float:
        u = self.check_tangent(p, u)
        v = self.check_tangent(p, v)
        return float(u @ self.metric(p) @ v)

    def norm(self, p, v) -> float:
        return float(np.sqrt(max(self.inner(p, v, v), 0.0)))

    def orthonormal_basis(self, p) -> np.ndarray:
        """Columns form a g-orthonormal basis of the tangent space at ``p``.

        Computed as the Cholesky factor ``L`` of the co-metric,
        ``cometric(p) = L @ L.T``, so that ``L.T @ metric(p) @ L = I``.
        """
        cometric = self.cometric(p)
        try:
            return np.linalg.cholesky(cometric)
        except np.linalg.LinAlgError as exc:
            raise NumericError(
                f"{self.name}: co-metric is not positive definite",
                eigenvalues=np.linalg.eigvalsh((cometric + cometric.T) / 2),
            ) from exc

    def coordinates(self, p, v, basis) -> np.ndarray:
        """Coordinates of tangent vector(s) ``v`` in a g-orthonormal ``basis``.

        ``v`` may be a single vector or a stack of row vectors.
        """
        return np.asarray(v) @ (self.metric(p) @ basis)

    def from_coordinates(self, p, coords, basis) -> np.ndarray:
        return np.asarray(coords) @ basis.T

    # -- geodesics ----------------------------------------------------------

    @abstractmethod
    def exp(self, p, v) -> np.ndarray:
        """Riemannian exponential: endpoint at time 1 of the geodesic from
        ``p`` with initial velocity ``v``."""

    @abstractmethod
    def log(self, p, q) -> np.ndarray:
        """Riemannian logarithm, the inverse of ``exp`` away from the cut
        locus."""

    def dist(self, p, q) -> float:
        return self.norm(p, self.log(p, q))

    # -- sampling helpers ---------------------------------------------------

    def random_point(self, rng) -> np.ndarray:
        return rng.standard_normal(self.ambient_dim)

    def random_tangent(self, p, rng) -> np.ndarray:
        basis = self.orthonormal_basis(p)
        return basis @ rng.standard_normal(basis.shape[1])

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


def log_many(manifold, base, points, workers=None):
    """Map every point to the tangent space at ``base``.

    The logs are independent and may run in a thread pool; the result rows
    are always in input order.
    """
    points = np.asarray(points, dtype=float)
    if workers is None or workers <= 1 or len(points) < 2:
        vecs = [manifold.log(base, q) for q in points]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vecs = list(pool.map(lambda q: manifold.log(base, q), points))
    return np.array(vecs).reshape(points.shape)


def frechet_mean(manifold, points, tol=1e-8, max_iter=200, init=None, workers=None):
    """Fréchet mean by fixed-point (unit step) gradient descent.

    Iterates ``mu <- exp_mu(mean_i log_mu(x_i))`` until the update norm
    drops below ``tol``.

    Parameters
    ----------
    manifold : Manifold
    points : array_like, shape (N, ambient_dim)
    tol : float
        Stop once the g-norm of the update is below this value.
    max_iter : int
    init : array_like, optional
        Starting iterate; defaults to the first point.

    Returns
    -------
    mu : ndarray, shape (ambient_dim,)

    Raises
    ------
    ConvergenceError
        If ``max_iter`` updates do not reach ``tol``; ``last`` holds the
        final iterate.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or len(points) == 0:
        raise InvalidInputError("frechet_mean needs a non-empty (N, d) array of points")
    mu = manifold.check_point(points[0] if init is None else init).copy()
    if len(points) == 1:
        return points[0].copy()
    step = np.inf
    for _ in range(max_iter):
        update = log_many(manifold, mu, points, workers).mean(axis=0)
        step = manifold.norm(mu, update)
        mu = manifold.exp(mu, update)
        if step < tol:
            return mu
    raise ConvergenceError(
        f"Fréchet mean did not converge in {max_iter} iterations "
        f"(last update norm {step:.3e})", last=mu, residual=step)


def cholesky_solve(matrix, rhs, ridge=0.0, what="matrix"):
    """Solve ``(matrix + ridge*I) x = rhs`` for a symmetric positive definite matrix."""
    a = np.asarray(matrix, dtype=float)
    if ridge:
        a = a + ridge * np.eye(len(a))
    try:
        factor = linalg.cho_factor(a, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericError(
            f"{what} is singular or not positive definite; consider a ridge",
            min_eigenvalue=float(np.linalg.eigvalsh((a + a.T) / 2)[0]),
        ) from exc
    return linalg.cho_solve(factor, rhs)
