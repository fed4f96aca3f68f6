import numpy as np

from ..errors import CutLocusError, InvalidInputError
from ..geometry import POINT_ATOL, Manifold

#: angular distance from pi below which a point counts as antipodal
ANTIPODAL_TOL = 1e-7


class Sphere(Manifold):
    """The unit sphere S^2 in R^3 with the round (pull-back) metric.

    ``exp``, ``log`` and ``orthonormal_basis`` broadcast over leading axes,
    which the Brownian simulator uses to advance many paths at once.
    """

    name = "sphere"

    def __init__(self):
        super().__init__(2, 3)

    @property
    def injectivity_radius(self):
        return np.pi

    def belongs(self, p, atol=POINT_ATOL):
        p = np.asarray(p, dtype=float)
        return p.shape[-1] == 3 and bool(np.all(np.abs(np.linalg.norm(p, axis=-1) - 1) <= atol))

    def is_tangent(self, p, v, atol=POINT_ATOL):
        v = np.asarray(v, dtype=float)
        return v.shape == np.shape(p) and bool(np.all(np.abs(np.sum(p * v, axis=-1)) <= atol))

    def metric(self, p):
        return np.eye(3)

    def cometric(self, p):
        # pseudo-inverse on the tangent plane: the orthogonal projector
        p = np.asarray(p, dtype=float)
        return np.eye(3) - np.outer(p, p)

    def inner(self, p, u, v):
        u = self.check_tangent(p, u)
        v = self.check_tangent(p, v)
        return float(u @ v)

    def orthonormal_basis(self, p):
        p = np.asarray(p, dtype=float)
        # seed with the coordinate axis least aligned with p
        axis = np.argmin(np.abs(p), axis=-1)
        e = np.zeros(p.shape)
        np.put_along_axis(e, axis[..., None], 1.0, axis=-1)
        u1 = e - np.sum(e * p, axis=-1, keepdims=True) * p
        u1 /= np.linalg.norm(u1, axis=-1, keepdims=True)
        u2 = np.cross(p, u1)
        return np.stack([u1, u2], axis=-1)

    def coordinates(self, p, v, basis):
        return np.asarray(v) @ basis

    def exp(self, p, v):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        theta = np.linalg.norm(v, axis=-1, keepdims=True)
        safe = np.where(theta > 0, theta, 1.0)
        q = np.cos(theta) * p + np.sin(theta) * v / safe
        # renormalise to absorb roundoff over long chains of steps
        return q / np.linalg.norm(q, axis=-1, keepdims=True)

    def log(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        cos = np.sum(p * q, axis=-1, keepdims=True)
        theta = np.arctan2(np.linalg.norm(np.cross(p, q), axis=-1, keepdims=True), cos)
        if np.any(np.pi - theta < ANTIPODAL_TOL):
            raise CutLocusError("sphere: log undefined for antipodal points")
        w = q - cos * p
        wn = np.linalg.norm(w, axis=-1, keepdims=True)
        # w = sin(theta) * unit direction; fall back to 0 when q == p
        return np.where(wn > 0, theta * w / np.where(wn > 0, wn, 1.0), 0.0)

    def dist(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return float(np.arctan2(np.linalg.norm(np.cross(p, q)), np.dot(p, q)))

    def random_point(self, rng):
        x = rng.standard_normal(3)
        return x / np.linalg.norm(x)

    def check_point(self, p, atol=POINT_ATOL):
        p = np.asarray(p, dtype=float)
        if p.shape[-1:] != (3,):
            raise InvalidInputError(f"sphere: expected 3 coordinates, got shape {p.shape}")
        if not self.belongs(p, atol):
            raise InvalidInputError("sphere: point does not have unit norm")
        return p
