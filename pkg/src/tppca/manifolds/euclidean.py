import numpy as np

from ..errors import InvalidInputError, NumericError
from ..geometry import Manifold


class Euclidean(Manifold):
    """R^d with a constant metric (the standard dot product by default).

    Parameters
    ----------
    dim : int
    metric : array_like, shape (dim, dim), optional
        Constant symmetric positive definite metric tensor.
    """

    name = "euclidean"

    def __init__(self, dim, metric=None):
        super().__init__(dim)
        if metric is None:
            self._metric = np.eye(self.dim)
        else:
            g = np.array(metric, dtype=float)
            if g.shape != (self.dim, self.dim):
                raise InvalidInputError(f"metric must have shape ({dim}, {dim})")
            if not np.allclose(g, g.T, atol=1e-12, rtol=0):
                raise InvalidInputError("metric must be symmetric")
            if np.linalg.eigvalsh(g)[0] <= 0:
                raise NumericError("metric must be positive definite")
            self._metric = g
        self._metric.setflags(write=False)
        self._cometric = np.linalg.inv(self._metric)
        self._cometric.setflags(write=False)

    @property
    def injectivity_radius(self):
        return np.inf

    def metric(self, p):
        return self._metric

    def cometric(self, p):
        return self._cometric

    def exp(self, p, v):
        return np.asarray(p, dtype=float) + np.asarray(v, dtype=float)

    def log(self, p, q):
        return np.asarray(q, dtype=float) - np.asarray(p, dtype=float)

    def orthonormal_basis(self, p):
        basis = np.linalg.cholesky(self._cometric)
        shape = np.shape(p)[:-1]
        return np.broadcast_to(basis, shape + basis.shape) if shape else basis
