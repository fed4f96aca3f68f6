"""LDDMM landmark manifold with a Gaussian kernel.

A shape of ``n`` planar landmarks is stored flattened as
``(x1, y1, ..., xn, yn)``.  The co-metric is the kernel matrix ``K_q`` whose
2x2 block ``(i, j)`` is ``k(q_i, q_j) * I_2`` with
``k(a, b) = beta * exp(-|a - b|^2 / (2 sigma^2))``; the metric is
``g_q(u, v) = u^T K_q^{-1} v``.  Geodesics are integrated in Hamiltonian
form with momentum ``p = K_q^{-1} v``.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from ..errors import ConvergenceError, InvalidInputError, NumericError
from ..geometry import Manifold

DRIFT_TOL = 1e-6


def _as_landmarks(q):
    q = np.asarray(q, dtype=float)
    return q.reshape(q.shape[:-1] + (-1, 2))


def _kernel(q, sigma, beta):
    # q: (..., n, 2) -> k: (..., n, n), diff: (..., n, n, 2)
    diff = q[..., :, None, :] - q[..., None, :, :]
    k = beta * np.exp(-np.sum(diff**2, axis=-1) / (2.0 * sigma**2))
    return k, diff


def _hamiltonian_vector_field(q, p, sigma, beta):
    k, diff = _kernel(q, sigma, beta)
    dq = k @ p
    # dp_i = sum_j (p_i . p_j) k_ij (q_i - q_j) / sigma^2
    w = (p @ np.swapaxes(p, -1, -2)) * k
    dp = (w.sum(axis=-1)[..., None] * q - w @ q) / sigma**2
    return dq, dp


def _energy(q, p, sigma, beta):
    k, _ = _kernel(q, sigma, beta)
    return 0.5 * np.sum(p * (k @ p), axis=(-2, -1))


def shoot(q0, p0, sigma, beta, steps, monitor=True):
    """Integrate Hamilton's equations over unit time with classical RK4.

    Works on stacks: ``q0`` and ``p0`` have shape ``(..., n, 2)``.

    Returns
    -------
    q1, p1 : ndarray
        Final position and momentum.
    drift : ndarray or None
        Maximum relative Hamiltonian drift along the trajectory (0 where the
        initial energy is 0); ``None`` unless ``monitor`` is set.
    """
    h = 1.0 / steps
    q, p = q0, p0
    energies = []
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps):
            k1q, k1p = _hamiltonian_vector_field(q, p, sigma, beta)
            if monitor:
                # k1q = K(q) p, so H comes for free
                energies.append(0.5 * np.sum(p * k1q, axis=(-2, -1)))
            k2q, k2p = _hamiltonian_vector_field(q + 0.5 * h * k1q, p + 0.5 * h * k1p, sigma, beta)
            k3q, k3p = _hamiltonian_vector_field(q + 0.5 * h * k2q, p + 0.5 * h * k2p, sigma, beta)
            k4q, k4p = _hamiltonian_vector_field(q + h * k3q, p + h * k3p, sigma, beta)
            q = q + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
            p = p + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        if not monitor:
            return q, p, None
        energies.append(_energy(q, p, sigma, beta))
    e = np.array(energies)
    e0 = e[0]
    scale = np.where(e0 > 0, e0, 1.0)
    drift = np.max(np.abs(e - e0), axis=0) / scale
    return q, p, np.where(e0 > 0, drift, 0.0)


class LandmarkManifold(Manifold):
    """Planar landmark shapes with the Gaussian-kernel LDDMM metric.

    Parameters
    ----------
    n_landmarks : int
    sigma : float
        Kernel width, in the length units of the shapes.
    beta : float
        Kernel amplitude.
    steps : int
        Fixed RK4 steps per unit-time geodesic.
    log_tol : float
        Endpoint residual (Euclidean norm in shape coordinates) accepted by
        the shooting solver.
    log_max_iter : int
    """

    name = "landmarks"

    def __init__(self, n_landmarks, sigma, beta=1.0, steps=100, log_tol=1e-6, log_max_iter=50):
        if n_landmarks < 1:
            raise InvalidInputError("n_landmarks must be positive")
        if not sigma > 0 or not beta > 0:
            raise InvalidInputError(f"sigma and beta must be positive (got {sigma}, {beta})")
        if steps < 1:
            raise InvalidInputError("steps must be >= 1")
        super().__init__(2 * n_landmarks)
        self.n_landmarks = int(n_landmarks)
        self.sigma = float(sigma)
        self.beta = float(beta)
        self.steps = int(steps)
        self.log_tol = float(log_tol)
        self.log_max_iter = int(log_max_iter)

    def __repr__(self):
        return (f"LandmarkManifold(n_landmarks={self.n_landmarks}, sigma={self.sigma}, "
                f"beta={self.beta})")

    # -- kernel / metric ----------------------------------------------------

    def kernel_matrix(self, q):
        """Co-metric ``K_q`` as a (2n, 2n) matrix."""
        q = self.check_point(q)
        k, _ = _kernel(_as_landmarks(q), self.sigma, self.beta)
        return np.kron(k, np.eye(2))

    def cometric(self, q):
        return self.kernel_matrix(q)

    def _factor(self, q):
        K = self.kernel_matrix(q)
        try:
            return linalg.cho_factor(K, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericError(
                "landmarks: kernel matrix is numerically singular (coincident "
                "landmarks or sigma too large); regularize or adjust sigma",
                min_eigenvalue=float(np.linalg.eigvalsh(K)[0]),
            ) from exc

    def metric(self, q):
        return linalg.cho_solve(self._factor(q), np.eye(self.dim))

    def to_momentum(self, q, v):
        """``p = K_q^{-1} v``."""
        return linalg.cho_solve(self._factor(q), np.asarray(v, dtype=float))

    def to_velocity(self, q, p):
        """``v = K_q p``."""
        return self.kernel_matrix(q) @ np.asarray(p, dtype=float)

    def inner(self, q, u, v):
        u = self.check_tangent(q, u)
        v = self.check_tangent(q, v)
        return float(u @ self.to_momentum(q, v))

    def hamiltonian(self, q, p):
        """``H(q, p) = 1/2 p^T K_q p``."""
        q = self.check_point(q)
        return float(_energy(_as_landmarks(q), _as_landmarks(p), self.sigma, self.beta))

    def orthonormal_basis(self, q):
        K = self.kernel_matrix(q)
        try:
            return np.linalg.cholesky(K)
        except np.linalg.LinAlgError as exc:
            raise NumericError(
                "landmarks: kernel matrix is not numerically positive definite",
                min_eigenvalue=float(np.linalg.eigvalsh(K)[0]),
            ) from exc

    def coordinates(self, q, v, basis):
        # a square basis B with K = B B^T gives coordinates B^{-1} v
        v = np.asarray(v, dtype=float)
        basis = np.asarray(basis, dtype=float)
        if not np.any(np.triu(basis, 1)):
            return linalg.solve_triangular(basis, v.T, lower=True).T
        return np.linalg.solve(basis, v.T).T

    # -- geodesics ----------------------------------------------------------

    def geodesic(self, q0, v, steps=None):
        """Shoot from ``q0`` with initial velocity ``v``.

        Returns the endpoint, the final momentum and the relative Hamiltonian
        drift.
        """
        q0 = self.check_point(q0)
        v = self.check_tangent(q0, v)
        m = self.to_momentum(q0, v)
        q1, p1, drift = shoot(_as_landmarks(q0), _as_landmarks(m), self.sigma, self.beta,
                              steps or self.steps)
        return q1.reshape(-1), p1.reshape(-1), float(drift)

    def exp(self, q0, v, steps=None):
        q0 = self.check_point(q0)
        if not np.any(v):
            return q0.copy()
        q1, _, drift = self.geodesic(q0, v, steps)
        if drift > DRIFT_TOL:
            raise NumericError(
                f"landmarks: Hamiltonian drift {drift:.2e} exceeds {DRIFT_TOL:g}; "
                "increase the number of integration steps",
                drift=drift, steps=steps or self.steps)
        if not np.all(np.isfinite(q1)):
            raise NumericError("landmarks: geodesic integration produced non-finite values")
        return q1

    def _residuals(self, q0, m, q1):
        # shoot a stack of momenta; returns endpoint residuals, shape (B, 2n)
        qs = np.broadcast_to(_as_landmarks(q0), m.shape[:1] + (self.n_landmarks, 2))
        end, _, _ = shoot(qs, m.reshape(-1, self.n_landmarks, 2), self.sigma, self.beta,
                          self.steps, monitor=False)
        return end.reshape(len(m), -1) - q1

    def _solve_shooting(self, q0, L, q1, a, tol, max_jac):
        """Levenberg-Marquardt on the endpoint residual from start value ``a``.

        Unknowns are g-orthonormal coordinates ``a`` of the initial velocity
        (``v = L a``, momentum ``L^-T a``) and residuals are whitened by
        ``L^-1``, so the Jacobian is the identity in the flat limit however
        ill-conditioned the kernel matrix is.  Steps are accepted on the
        whitened residual; convergence is declared on the plain endpoint
        residual.

        Returns the best coordinates, their endpoint residual norm and the
        number of Jacobian evaluations used.
        """
        def momenta(coords):
            return linalg.solve_triangular(L.T, coords.T, lower=False).T

        def whiten(res):
            return linalg.solve_triangular(L, res.T, lower=True).T

        r = self._residuals(q0, momenta(a[None]), q1)[0]
        err, w = np.linalg.norm(r), whiten(r)
        merit = np.linalg.norm(w)
        eye = np.eye(self.dim)
        jac, fresh, lam, n_jac = None, False, 0.0, 0
        while err >= tol:
            if jac is None:
                if n_jac >= max_jac:
                    break
                h = 1e-6 * max(np.abs(a).max(), 1e-3)
                batch = self._residuals(q0, momenta(a + h * eye), q1)
                jac = whiten(batch - r).T / h
                fresh, n_jac = True, n_jac + 1
            jtj = jac.T @ jac
            delta = -linalg.solve(jtj + lam * np.diag(np.diag(jtj)) + 1e-14 * eye, jac.T @ w,
                                  assume_a="pos")
            a_new = a + delta
            r_new = self._residuals(q0, momenta(a_new[None]), q1)[0]
            w_new = whiten(r_new)
            merit_new = np.linalg.norm(w_new)
            if np.isfinite(merit_new) and merit_new < merit:
                if merit_new > 0.25 * merit:
                    jac = None  # contraction stalled; refresh
                else:
                    fresh = False
                a, r, w, merit = a_new, r_new, w_new, merit_new
                err = np.linalg.norm(r)
                lam = lam / 10 if lam > 1e-6 else 0.0
            elif fresh:
                lam = max(10 * lam, 1e-3)
                if lam > 1e6:
                    break
            else:
                jac = None
        return a, err, n_jac

    def log(self, q0, q1, tol=None, max_iter=None):
        """Initial velocity of the geodesic from ``q0`` reaching ``q1``.

        Solved by shooting: the endpoint residual is minimised over the
        initial momentum with Levenberg-Marquardt steps on a forward-difference
        Jacobian (relative step 1e-6).  The momentum is parametrised by
        g-orthonormal velocity coordinates and residuals are whitened with the
        same Cholesky factor of ``K_q0``.  The start value is the momentum
        ``K^{-1}(q1 - q0)``, which is exact in the flat limit.  If that stalls,
        the target is approached through intermediate shapes on the straight
        segment ``q0 -> q1``, each solve warm-started by extrapolating the
        previous two solutions.

        ``max_iter`` bounds the Jacobian evaluations of a single solve.

        Raises
        ------
        ConvergenceError
            If the residual stays above ``tol``; ``last`` carries the best
            velocity found and ``residual`` its endpoint residual.
        """
        tol = self.log_tol if tol is None else tol
        max_iter = self.log_max_iter if max_iter is None else max_iter
        q0 = self.check_point(q0)
        q1 = self.check_point(q1)
        if np.array_equal(q0, q1):
            return np.zeros_like(q0)
        L = self.orthonormal_basis(q0)

        def coords(x):
            return linalg.solve_triangular(L, x, lower=True)

        a, err, _ = self._solve_shooting(q0, L, q1, coords(q1 - q0), tol, max_iter)
        best_a, best_err = a, err
        for n_sub in (4, 16):
            if best_err < tol:
                break
            prev, cur = np.zeros_like(q0), np.zeros_like(q0)
            for s in np.arange(1, n_sub + 1) / n_sub:
                guess = 2 * cur - prev if s > 1 / n_sub else coords(q1 - q0) * s
                target = q1 if s == 1 else q0 + s * (q1 - q0)
                step_tol = tol if s == 1 else max(tol, 1e-8)
                a, err, _ = self._solve_shooting(q0, L, target, guess, step_tol, max_iter)
                if err >= step_tol:
                    break
                prev, cur = cur, a
            if s == 1 and err < best_err:
                best_a, best_err = a, err
        if not best_err < tol:
            raise ConvergenceError(
                f"landmarks: shooting did not converge (endpoint residual {best_err:.3e} > {tol:g})",
                last=L @ best_a, residual=best_err)
        return L @ best_a

    def random_point(self, rng, scale=1.0):
        return scale * rng.standard_normal(self.dim)

    def landmarks(self, q):
        """Reshape flattened coordinates to an (n, 2) array."""
        return _as_landmarks(q)
