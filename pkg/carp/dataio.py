"""
Reading, writing, standardizing and generating data matrices.
"""
import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from django.utils.translation import gettext as _
from sklearn.datasets import make_circles, make_moons

from carp.exceptions import (
    ConstantColumnWarning,
    DimensionError,
    InvalidParameter,
    ParseError,
    ShapeError,
)
from carp.settings import CIRCLE_FACTOR, SHAPE_RADIUS
from carp.utils import first_appearance, format_float


__all__ = (
    "DataMatrix",
    "Partition",
    "load_csv",
    "save_csv",
    "standardize",
    "mixture_centroids",
    "gen_gaussian_mixture",
    "gen_half_moons",
    "gen_two_circles",
    "gen_checkerboard",
    "save_labels",
    "load_labels",
)

logger = logging.getLogger(__name__)


def _default_labels(prefix, count):
    return ["%s_%d" % (prefix, i + 1) for i in range(count)]


@dataclass
class DataMatrix:
    """
    An ``n x p`` matrix of observations with row and column labels.

    ``warnings`` collects the messages of any column-level warning raised
    while the matrix was produced, so they can end up in a run manifest.
    """

    values: np.ndarray
    row_labels: list = None
    col_labels: list = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.array(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError(_("A data matrix must be two-dimensional."))
        n, p = self.values.shape
        if n < 2 or p < 1:
            raise DimensionError(
                _("A data matrix needs at least 2 rows and 1 column, got %(n)d x %(p)d.")
                % {"n": n, "p": p}
            )
        if not np.isfinite(self.values).all():
            raise InvalidParameter(_("A data matrix may only hold finite values."))
        if self.row_labels is None:
            self.row_labels = _default_labels("row", n)
        if self.col_labels is None:
            self.col_labels = _default_labels("col", p)
        self.row_labels = [str(label) for label in self.row_labels]
        self.col_labels = [str(label) for label in self.col_labels]
        if len(self.row_labels) != n or len(self.col_labels) != p:
            raise ShapeError(_("There must be one label per row and per column."))

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    def transpose(self):
        return DataMatrix(
            self.values.T.copy(),
            row_labels=list(self.col_labels),
            col_labels=list(self.row_labels),
            warnings=list(self.warnings),
        )


@dataclass
class Partition:
    """
    A flat clustering: ``assignment[i]`` is the cluster of item ``i``.

    Clusters are numbered ``0..k-1`` by first appearance.
    """

    assignment: np.ndarray

    def __post_init__(self):
        self.assignment = first_appearance(self.assignment)

    @property
    def k(self):
        return int(self.assignment.max()) + 1 if len(self.assignment) else 0

    def __len__(self):
        return len(self.assignment)

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.assignment, other.assignment)

    def clusters(self):
        """
        Returns the member indices of every cluster, in label order.
        """
        return [np.flatnonzero(self.assignment == c) for c in range(self.k)]


def _values(data):
    return data.values if isinstance(data, DataMatrix) else np.asarray(data, float)


def load_csv(path, has_header=True, has_rownames=False):
    """
    Reads a rectangular numeric table. The first row holds column labels when
    ``has_header`` is set and the first column holds row labels when
    ``has_rownames`` is set; missing labels are generated as ``row_i`` and
    ``col_j``.
    """
    with open(path, newline="") as f:
        rows = [row for row in csv.reader(f) if row]
    if not rows:
        raise ParseError(_("%s holds no data.") % path)

    col_labels = None
    if has_header:
        col_labels = rows.pop(0)
        if has_rownames:
            col_labels = col_labels[1:]

    row_labels = [] if has_rownames else None
    table = []
    for lineno, row in enumerate(rows, start=2 if has_header else 1):
        if has_rownames:
            row_labels.append(row[0])
            row = row[1:]
        try:
            table.append([float(cell) for cell in row])
        except ValueError:
            raise ParseError(
                _("Non-numeric cell on line %(line)d of %(path)s.")
                % {"line": lineno, "path": path}
            ) from None
        if len(table[-1]) != len(table[0]):
            raise ParseError(
                _("Line %(line)d of %(path)s has %(got)d cells, expected %(want)d.")
                % {
                    "line": lineno,
                    "path": path,
                    "got": len(table[-1]),
                    "want": len(table[0]),
                }
            )

    values = np.array(table, dtype=np.float64)
    if values.ndim != 2 or not np.isfinite(values).all():
        raise ParseError(_("%s holds non-finite values.") % path)
    if col_labels is not None and len(col_labels) != values.shape[1]:
        raise ParseError(
            _("The header of %s does not match the number of columns.") % path
        )
    logger.debug("Loaded %d x %d matrix from %s", values.shape[0], values.shape[1], path)
    return DataMatrix(values, row_labels=row_labels, col_labels=col_labels)


def save_csv(data, path, rownames=True):
    """
    Writes ``data`` as CSV with a header row, and row labels as the first
    column when ``rownames`` is set.
    """
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(([""] if rownames else []) + data.col_labels)
        for label, row in zip(data.row_labels, data.values):
            cells = [format_float(v) for v in row]
            writer.writerow(([label] if rownames else []) + cells)


def standardize(data):
    """
    Returns a copy of ``data`` whose columns have mean 0 and sample standard
    deviation 1. Constant columns are centered only, with a
    ``ConstantColumnWarning``.
    """
    values = data.values - data.values.mean(axis=0)
    constant = (data.values == data.values[0]).all(axis=0)
    values[:, constant] = 0.0
    sd = np.where(constant, 0.0, data.values.std(axis=0, ddof=1))
    notes = list(data.warnings)
    for j in np.flatnonzero(constant):
        message = _("Column %s has zero variance and was only centered.") % (
            data.col_labels[j]
        )
        warnings.warn(message, ConstantColumnWarning, stacklevel=2)
        logger.warning(message)
        notes.append(message)
    scale = np.where(sd == 0, 1.0, sd)
    return DataMatrix(
        values / scale,
        row_labels=list(data.row_labels),
        col_labels=list(data.col_labels),
        warnings=notes,
    )


def _random_plane(rng, p):
    # orthonormal p x 2 basis
    basis, _r = np.linalg.qr(rng.standard_normal((p, 2)))
    return basis


def _check_generator(n_per, p, noise_sd=0.0):
    if p < 2:
        raise DimensionError(_("Generated data needs at least 2 columns."))
    if n_per < 1:
        raise InvalidParameter(_("At least one point per group is required."))
    if noise_sd < 0:
        raise InvalidParameter(_("noise_sd must be non-negative."))


def _centroids(rng, k, p, sep):
    basis = _random_plane(rng, p)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    direction = basis @ np.array([np.cos(angle), np.sin(angle)])
    offsets = (np.arange(k) - (k - 1) / 2.0) * sep
    return offsets[:, None] * direction[None, :]


def mixture_centroids(k, p, sep, seed):
    """
    Returns the ``k x p`` centroids ``gen_gaussian_mixture`` uses for the same
    arguments.
    """
    if sep <= 0:
        raise InvalidParameter(_("sep must be positive."))
    _check_generator(1, p)
    return _centroids(np.random.default_rng(seed), k, p, sep)


def gen_gaussian_mixture(k, n_per, p, sep, seed):
    """
    Draws ``n_per`` points around each of ``k`` centroids with unit-variance
    isotropic noise.

    The centroids are collinear, adjacent ones ``sep`` apart, in a random
    two-dimensional subspace. Returns the data and the true partition.
    """
    if sep <= 0:
        raise InvalidParameter(_("sep must be positive."))
    if k < 2:
        raise InvalidParameter(_("A mixture needs at least two components."))
    _check_generator(n_per, p)
    rng = np.random.default_rng(seed)
    centroids = _centroids(rng, k, p, sep)
    truth = np.repeat(np.arange(k), n_per)
    values = centroids[truth] + rng.standard_normal((k * n_per, p))
    return DataMatrix(values), Partition(truth)


def _embed(rng, points, p, noise_sd):
    basis = _random_plane(rng, p)
    values = points @ basis.T
    noise = rng.standard_normal(values.shape) * noise_sd
    # keep the points on their plane
    noise -= (noise @ basis) @ basis.T
    return values + noise


def gen_half_moons(n_per, p, noise_sd, seed):
    """
    Two interleaving half circles embedded in a random plane of ``R^p``,
    with noise orthogonal to that plane.
    """
    _check_generator(n_per, p, noise_sd)
    if n_per < 2:
        raise InvalidParameter(_("Each half moon needs at least two points."))
    rng = np.random.default_rng(seed)
    points, truth = make_moons(n_samples=(n_per, n_per), shuffle=False, noise=None)
    values = _embed(rng, points * SHAPE_RADIUS, p, noise_sd)
    return DataMatrix(values), Partition(truth)


def gen_two_circles(n_per, p, noise_sd, seed, factor=CIRCLE_FACTOR):
    """
    Two concentric circles embedded in a random plane of ``R^p``.
    """
    _check_generator(n_per, p, noise_sd)
    if not 0 < factor < 1:
        raise InvalidParameter(_("factor must lie strictly between 0 and 1."))
    rng = np.random.default_rng(seed)
    points, truth = make_circles(
        n_samples=(n_per, n_per), shuffle=False, noise=None, factor=factor
    )
    values = _embed(rng, points * SHAPE_RADIUS, p, noise_sd)
    return DataMatrix(values), Partition(truth)


def gen_checkerboard(row_k, col_k, n_per_row, n_per_col, sep, noise_sd, seed):
    """
    A matrix made of ``row_k x col_k`` constant blocks plus Gaussian noise.

    Block means are a shuffled multiple of ``sep``. Returns the data, the
    row partition and the column partition.
    """
    if sep <= 0:
        raise InvalidParameter(_("sep must be positive."))
    if min(row_k, col_k, n_per_row, n_per_col) < 1 or noise_sd < 0:
        raise InvalidParameter(_("Block counts and sizes must be positive."))
    if row_k * n_per_row < 2 or col_k * n_per_col < 1:
        raise DimensionError(_("The checkerboard is too small."))
    rng = np.random.default_rng(seed)
    means = (rng.permutation(row_k * col_k) * sep).reshape(row_k, col_k)
    rows = np.repeat(np.arange(row_k), n_per_row)
    cols = np.repeat(np.arange(col_k), n_per_col)
    values = means[np.ix_(rows, cols)]
    values = values + rng.standard_normal(values.shape) * noise_sd
    return DataMatrix(values), Partition(rows), Partition(cols)


def save_labels(partition, path, labels=None):
    """
    Writes a partition as a ``label,cluster`` CSV.
    """
    names = labels or _default_labels("row", len(partition))
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("label", "cluster"))
        writer.writerows(zip(names, partition.assignment.tolist()))


def load_labels(path):
    """
    Reads a partition written by ``save_labels``; only the last column is
    used.
    """
    with open(path, newline="") as f:
        rows = [row for row in csv.reader(f) if row]
    try:
        return Partition(np.array([int(row[-1]) for row in rows[1:]]))
    except (ValueError, IndexError):
        raise ParseError(_("Malformed labels file %s.") % path) from None
