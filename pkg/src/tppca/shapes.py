"""Landmark datasets: CSV I/O, generalized Procrustes alignment, species means.

CSV layout (header required)::

    species,specimen,x1,y1,...,xn,yn
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import InvalidInputError, ReconciliationError


@dataclass(frozen=True)
class LandmarkDataset:
    """Specimen records with a uniform number of planar landmarks.

    ``coords`` has shape ``(n_records, n_landmarks, 2)``.
    """

    species: tuple
    specimens: tuple
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 3 or coords.shape[2] != 2:
            raise InvalidInputError("coords must have shape (records, landmarks, 2)")
        if not (len(self.species) == len(self.specimens) == len(coords)):
            raise InvalidInputError("species, specimens and coords must have equal length")
        if not np.all(np.isfinite(coords)):
            bad = [self.specimens[i] for i in np.where(~np.isfinite(coords).all(axis=(1, 2)))[0]]
            raise InvalidInputError(f"non-finite coordinates in specimens: {bad}")
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "specimens", tuple(self.specimens))
        object.__setattr__(self, "coords", coords)

    def __len__(self):
        return len(self.species)

    @property
    def n_landmarks(self):
        return self.coords.shape[1]

    def flat(self):
        """Coordinates as an ``(n_records, 2 n)`` array ``x1, y1, ..., xn, yn``."""
        return self.coords.reshape(len(self), -1)

    def with_coords(self, coords):
        return LandmarkDataset(self.species, self.specimens, np.asarray(coords).reshape(self.coords.shape))


def read_landmarks_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInputError(f"{path}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    if len(header) < 4 or header[0].strip().lower() != "species" \
            or header[1].strip().lower() != "specimen" or (len(header) - 2) % 2:
        raise InvalidInputError(
            f"{path}: header must be species,specimen,x1,y1,...,xn,yn")
    species, specimens, coords = [], [], []
    for line, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise InvalidInputError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        try:
            values = [float(x) for x in row[2:]]
        except ValueError as exc:
            raise InvalidInputError(f"{path}:{line}: {exc}") from None
        species.append(row[0].strip())
        specimens.append(row[1].strip())
        coords.append(values)
    if not coords:
        raise InvalidInputError(f"{path}: no records")
    return LandmarkDataset(species, specimens, np.array(coords).reshape(len(coords), -1, 2))


def write_landmarks_csv(dataset, path):
    n = dataset.n_landmarks
    header = ["species", "specimen"] + [f"{a}{i + 1}" for i in range(n) for a in "xy"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for sp, spec, row in zip(dataset.species, dataset.specimens, dataset.flat()):
            writer.writerow([sp, spec] + [repr(float(x)) for x in row])


# -- Procrustes ---------------------------------------------------------------

def _rotation_onto(shape, reference):
    """Rotation ``R`` (det +1) minimising ``|shape @ R - reference|``."""
    u, _, vt = np.linalg.svd(shape.T @ reference)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, d if d != 0 else 1.0]) @ vt


def gpa_objective(shapes):
    """Sum of squared distances of the shapes to their arithmetic mean."""
    return float(np.sum((shapes - shapes.mean(axis=0)) ** 2))


def procrustes_align(dataset, scale=True, tol=1e-10, max_iter=1000, history=None):
    """Generalized Procrustes alignment (translation, scale, rotation).

    Every shape is centered and, with ``scale=True``, scaled to unit
    centroid size; shapes are then repeatedly rotated onto the current mean
    (normalised to unit size) until the mean moves less than ``tol``.

    Parameters
    ----------
    dataset : LandmarkDataset
    scale : bool
        Remove scale.  ``False`` keeps each shape's centroid size.
    history : list, optional
        If given, the GPA objective after every iteration is appended.

    Returns
    -------
    LandmarkDataset
    """
    if len(dataset) < 2:
        raise InvalidInputError("Procrustes alignment needs at least two shapes")
    X = dataset.coords - dataset.coords.mean(axis=1, keepdims=True)
    size = np.sqrt(np.sum(X**2, axis=(1, 2)))
    degenerate = np.where(size < 1e-12)[0]
    if len(degenerate):
        raise InvalidInputError(
            "degenerate shape (all landmarks coincide): "
            + ", ".join(str(dataset.specimens[i]) for i in degenerate))
    X = X / size[:, None, None]
    mean = X[0].copy()
    for _ in range(max_iter):
        X = np.array([x @ _rotation_onto(x, mean) for x in X])
        new_mean = X.mean(axis=0)
        new_mean /= np.linalg.norm(new_mean)
        # fix the overall orientation to the first shape's frame
        new_mean = new_mean @ _rotation_onto(new_mean, mean)
        if history is not None:
            history.append(gpa_objective(X))
        change = np.linalg.norm(new_mean - mean)
        mean = new_mean
        if change < tol:
            break
    X = np.array([x @ _rotation_onto(x, mean) for x in X])
    if not scale:
        X = X * size[:, None, None]
    return dataset.with_coords(X)


def species_mean(dataset):
    """Per-species arithmetic mean shape, species in order of first appearance."""
    order = list(dict.fromkeys(dataset.species))
    species = np.array(dataset.species, dtype=object)
    coords = np.array([dataset.coords[species == s].mean(axis=0) for s in order])
    return LandmarkDataset(order, order, coords)


def sigma_rule(dataset, factor=1.5):
    """Kernel width: ``factor`` times the mean over shapes of the mean pairwise
    landmark distance within each shape."""
    if dataset.n_landmarks < 2:
        raise InvalidInputError("sigma rule needs at least two landmarks per shape")
    return factor * float(np.mean([pdist(shape).mean() for shape in dataset.coords]))


def reconcile(dataset, tree):
    """Rows of ``dataset`` (one record per species) in the tree's leaf order.

    Returns
    -------
    ndarray, shape (N, 2 n)
        Flattened coordinates; row ``i`` belongs to ``tree.leaves[i]``.

    Raises
    ------
    ReconciliationError
        Listing species missing from either side or duplicated.
    """
    names = tree.leaf_names
    counts = {}
    for s in dataset.species:
        counts[s] = counts.get(s, 0) + 1
    missing_in_data = [n for n in names if n not in counts]
    missing_in_tree = [s for s in counts if s not in set(names)]
    duplicated = [s for s, c in counts.items() if c > 1]
    if missing_in_data or missing_in_tree or duplicated:
        parts = []
        if missing_in_data:
            parts.append("tree leaves without data: " + ", ".join(missing_in_data))
        if missing_in_tree:
            parts.append("species not in tree: " + ", ".join(missing_in_tree))
        if duplicated:
            parts.append("species with several records (average first): " + ", ".join(duplicated))
        raise ReconciliationError("; ".join(parts), missing_in_data, missing_in_tree)
    index = {s: i for i, s in enumerate(dataset.species)}
    flat = dataset.flat()
    return np.array([flat[index[n]] for n in names])
