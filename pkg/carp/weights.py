"""
Sparse fusion graphs: Gaussian-kernel weights on a k-nearest-neighbour graph,
the edge difference matrix and its cached Cholesky factor.
"""
import csv
import logging
import math
from typing import NamedTuple

import numpy as np
import scipy.linalg
from django.utils.translation import gettext as _
from scipy import sparse
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree
from scipy.spatial.distance import pdist, squareform
from sklearn.neighbors import NearestNeighbors

from carp.dataio import _values
from carp.exceptions import (
    DegenerateError,
    InvalidParameter,
    NumericalError,
    ParseError,
    ShapeError,
)
from carp.settings import DEFAULT_RHO, MIN_NEIGHBORS
from carp.utils import component_labels, format_float


__all__ = (
    "WeightedEdge",
    "WeightGraph",
    "build_weights",
    "build_difference_matrix",
    "factorize",
    "solve_cached",
    "save_edges",
    "load_edges",
)

logger = logging.getLogger(__name__)

# floor of the kernel weights of far apart neighbours
MIN_WEIGHT = float(np.finfo(np.float64).eps)


class WeightedEdge(NamedTuple):
    source: int
    target: int
    weight: float


def build_difference_matrix(edges, n):
    """
    Returns the sparse ``|E| x n`` matrix ``D`` whose row ``l`` has ``+1`` at
    the source and ``-1`` at the target of edge ``l``.
    """
    edges = list(edges)
    m = len(edges)
    sources = np.array([e[0] for e in edges], dtype=np.intp)
    targets = np.array([e[1] for e in edges], dtype=np.intp)
    if m and (min(sources.min(), targets.min()) < 0 or max(sources.max(), targets.max()) >= n):
        raise IndexError(_("Edge endpoint outside 0..%d.") % (n - 1))
    rows = np.repeat(np.arange(m), 2)
    cols = np.column_stack((sources, targets)).ravel()
    data = np.tile([1.0, -1.0], m)
    return sparse.csr_matrix((data, (rows, cols)), shape=(m, n))


def factorize(D, rho):
    """
    Lower Cholesky factor of ``I + rho * D^T D``.
    """
    n = D.shape[1]
    system = np.eye(n) + rho * (D.T @ D).toarray()
    if not np.isfinite(system).all():
        raise NumericalError(_("The fusion system holds non-finite entries."))
    try:
        return scipy.linalg.cholesky(system, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(_("Cholesky factorization failed: %s") % exc) from exc


def solve_cached(factor, rhs):
    """
    Solves ``(I + rho * D^T D) x = rhs`` with a factor from ``factorize``.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != factor.shape[0]:
        raise ShapeError(
            _("Right-hand side has %(got)d rows, expected %(want)d.")
            % {"got": rhs.shape[0], "want": factor.shape[0]}
        )
    return scipy.linalg.cho_solve((factor, True), rhs, check_finite=False)


class WeightGraph:
    """
    A connected, positively weighted graph on ``n`` items.

    ``edges`` are ``(source, target, weight)`` triples with
    ``source < target``. The difference matrix ``D`` and the Cholesky factor
    of ``I + rho D^T D`` are built once and shared by every solver step.
    """

    def __init__(self, n, edges, rho=None, phi=None, allow_disconnected=False):
        self.n = int(n)
        self.rho = DEFAULT_RHO if rho is None else float(rho)
        self.phi = phi
        if self.rho <= 0:
            raise InvalidParameter(_("rho must be positive."))

        edges = sorted(
            WeightedEdge(min(e[0], e[1]), max(e[0], e[1]), float(e[2])) for e in edges
        )
        for edge in edges:
            if edge.source == edge.target:
                raise InvalidParameter(_("Self-loops are not allowed."))
            if not edge.weight > 0:
                raise InvalidParameter(_("Edge weights must be positive."))
        self.edges = tuple(edges)
        self.sources = np.array([e.source for e in edges], dtype=np.intp)
        self.targets = np.array([e.target for e in edges], dtype=np.intp)
        self.weights = np.array([e.weight for e in edges], dtype=np.float64)

        self.D = build_difference_matrix(edges, self.n)
        self.Dt = self.D.T.tocsr()
        if not allow_disconnected and not self.is_connected():
            raise DegenerateError(_("The fusion graph is not connected."))
        self.factor = factorize(self.D, self.rho)

    @classmethod
    def empty(cls, n, rho=None):
        """
        A graph without edges: nothing is ever fused along it.
        """
        return cls(n, (), rho=rho, allow_disconnected=True)

    def __len__(self):
        return len(self.edges)

    def __repr__(self):
        return "<WeightGraph n=%d edges=%d rho=%g>" % (self.n, len(self), self.rho)

    def is_connected(self):
        count, _labels = component_labels(self.n, self.sources, self.targets)
        return count == 1

    def with_rho(self, rho):
        if rho is None or float(rho) == self.rho:
            return self
        return WeightGraph(self.n, self.edges, rho=rho, phi=self.phi, allow_disconnected=True)

    def difference(self, values):
        return self.D @ values

    def adjoint(self, values):
        return self.Dt @ values

    def solve(self, rhs):
        return solve_cached(self.factor, rhs)

    def multiply(self, values):
        """
        Returns ``(I + rho D^T D) values``, the inverse of ``solve``.
        """
        return values + self.rho * (self.Dt @ (self.D @ values))

    def spectral_norm_sq(self):
        """
        Squared spectral norm of ``D``, the largest eigenvalue of ``D^T D``.
        """
        if not len(self):
            return 0.0
        return float(scipy.linalg.eigvalsh((self.D.T @ self.D).toarray())[-1])


def _default_neighbors(n):
    return max(MIN_NEIGHBORS, math.ceil(math.log2(n)))


def build_weights(data, k_neighbors=None, phi="auto", rho=None):
    """
    Builds the symmetric k-nearest-neighbour graph of the rows of ``data``
    with Gaussian kernel weights ``exp(-phi * d^2)`` rescaled to a maximum of
    1. Weights of far apart neighbours are floored at ``MIN_WEIGHT``.

    ``k_neighbors`` defaults to ``max(3, ceil(log2 n))``; ``phi="auto"`` uses
    the inverse median squared distance. A disconnected neighbour graph is
    joined with edges of the minimum spanning tree of all distances.
    """
    X = _values(data)
    n = X.shape[0]
    if k_neighbors is None:
        k_neighbors = _default_neighbors(n)
    if k_neighbors < 1:
        raise InvalidParameter(_("k_neighbors must be at least 1."))
    k_neighbors = min(int(k_neighbors), n - 1)

    condensed = pdist(X, "sqeuclidean")
    if (condensed == 0).any():
        jitter = 1e-8 * float(X.std(axis=0, ddof=1).max() or 1.0)
        raise DegenerateError(
            _("The data holds identical rows; add jitter of about %s.")
            % format_float(jitter)
        )
    squared = squareform(condensed)
    if phi is None or phi == "auto":
        phi = 1.0 / float(np.median(condensed))
    phi = float(phi)
    if phi < 0:
        raise InvalidParameter(_("phi must be non-negative."))

    knn = NearestNeighbors(n_neighbors=k_neighbors).fit(X).kneighbors_graph(mode="connectivity")
    adjacency = knn.maximum(knn.T).tolil()

    count, labels = connected_components(adjacency.tocsr(), directed=False)
    if count > 1:
        logger.info("Joining %d neighbour graph components with spanning tree edges", count)
        tree = minimum_spanning_tree(np.sqrt(squared)).tocoo()
        for length_order in np.argsort(tree.data, kind="stable"):
            i, j = tree.row[length_order], tree.col[length_order]
            if labels[i] != labels[j]:
                adjacency[i, j] = adjacency[j, i] = 1
                count, labels = connected_components(adjacency.tocsr(), directed=False)
                if count == 1:
                    break

    upper = sparse.triu(adjacency.tocsr(), k=1).tocoo()
    # scaled in log space so the largest weight is exactly 1
    distances = squared[upper.row, upper.col]
    weights = np.maximum(np.exp(-phi * (distances - distances.min())), MIN_WEIGHT)
    clamped = np.count_nonzero(weights <= MIN_WEIGHT)
    if clamped:
        logger.info("%d kernel weights clamped to %g", clamped, MIN_WEIGHT)
    edges = [WeightedEdge(int(i), int(j), float(w)) for i, j, w in zip(upper.row, upper.col, weights)]
    logger.debug("Built %d edges on %d items (k=%d, phi=%g)", len(edges), n, k_neighbors, phi)
    return WeightGraph(n, edges, rho=rho, phi=phi)


def save_edges(graph, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("from", "to", "weight"))
        for edge in graph.edges:
            writer.writerow((edge.source, edge.target, format_float(edge.weight)))


def load_edges(path, n, rho=None):
    """
    Reads a ``from,to,weight`` edge list written by ``save_edges``.
    """
    edges = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        next(reader, None)
        for row in reader:
            if not row:
                continue
            try:
                edges.append(WeightedEdge(int(row[0]), int(row[1]), float(row[2])))
            except (ValueError, IndexError):
                raise ParseError(_("Malformed edge %r in %s.") % (row, path)) from None
    return WeightGraph(n, edges, rho=rho)

