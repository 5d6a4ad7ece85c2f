"""
Convex bi-clustering: rows and columns are fused at the same time, each
along its own graph.
"""
import csv
import logging
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from django.utils.translation import gettext as _
from scipy.cluster.hierarchy import leaves_list

from carp import settings
from carp.dataio import DataMatrix, _values
from carp.exceptions import InvalidParameter, MaxIterWarning, NumericalError
from carp.paths import CarpPath, PathConfig, PathTracer, TracedGraph
from carp.prox import PenaltySpec, prox_penalty
from carp.signals import path_finished
from carp.solvers import admm_solve, default_epsilon
from carp.utils import cluster_means, component_labels, format_float


__all__ = (
    "BiclusterSpec",
    "BiClusterState",
    "BiclusterPath",
    "cbass_step",
    "cbass_fused_step",
    "cbass_path",
    "cbass_viz_path",
    "dlpa_solve",
    "dlpa_grid_path",
    "block_means",
)

logger = logging.getLogger(__name__)


class BiclusterSpec(NamedTuple):
    row: PenaltySpec
    col: PenaltySpec

    @classmethod
    def for_graphs(cls, row_graph, col_graph, q="l2"):
        return cls(PenaltySpec.for_graph(row_graph, q), PenaltySpec.for_graph(col_graph, q))


@dataclass
class BiClusterState:
    """
    Iterate of the bi-clustering splitting.

    ``U`` is the current estimate, ``P`` and ``Q`` carry the corrections of
    the row and column phases, and each graph has its own ``V`` and ``Z``.
    Row quantities live on rows of ``U``, column quantities on rows of
    ``U^T``.
    """

    U: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    V_row: np.ndarray
    Z_row: np.ndarray
    V_col: np.ndarray
    Z_col: np.ndarray
    k: int = 0

    @classmethod
    def initial(cls, X, row_graph, col_graph):
        DX = row_graph.difference(X)
        DXt = col_graph.difference(X.T)
        zeros = np.zeros_like(X)
        return cls(X.copy(), zeros, zeros.copy(), DX, DX.copy(), DXt, DXt.copy())

    def check_finite(self):
        for name in ("U", "P", "Q", "V_row", "Z_row", "V_col", "Z_col"):
            if not np.isfinite(getattr(self, name).sum()):
                raise NumericalError(
                    _("%(name)s is not finite at step %(k)d.") % {"name": name, "k": self.k}
                )

    def row_fused(self):
        return ~self.V_row.any(axis=1)

    def col_fused(self):
        return ~self.V_col.any(axis=1)


def _half_step(graph, target, V, Z, shrink):
    T = graph.solve(target + graph.rho * graph.adjoint(V - Z))
    DT = graph.difference(T)
    V = shrink(DT + Z)
    return T, V, Z + DT - V


def _cbass_update(state, row_graph, col_graph, row_shrink, col_shrink):
    T, V_row, Z_row = _half_step(row_graph, state.U + state.P, state.V_row, state.Z_row, row_shrink)
    P = state.P + state.U - T
    S, V_col, Z_col = _half_step(col_graph, (T + state.Q).T, state.V_col, state.Z_col, col_shrink)
    U = S.T
    Q = state.Q + T - U
    return BiClusterState(U, P, Q, V_row, Z_row, V_col, Z_col, state.k + 1)


def cbass_step(state, gamma, row_graph, col_graph, spec):
    """
    One row ADMM step followed by one column ADMM step at level ``gamma``.

    Rows go first, so a step on ``X`` and one on ``X^T`` differ by the
    order of the two halves.
    """
    return _cbass_update(
        state,
        row_graph,
        col_graph,
        lambda M: prox_penalty(M, gamma / row_graph.rho, spec.row),
        lambda M: prox_penalty(M, gamma / col_graph.rho, spec.col),
    )


def cbass_fused_step(state, row_graph, col_graph):
    """
    ``cbass_step`` with every row and column difference held at zero.
    """
    return _cbass_update(state, row_graph, col_graph, np.zeros_like, np.zeros_like)


def block_means(X, row_labels, col_labels):
    """
    Replaces every entry with the mean of its (row cluster, column cluster)
    block.
    """
    return cluster_means(cluster_means(X, row_labels).T, col_labels).T


@dataclass
class BiclusterPath:
    rows: CarpPath
    cols: CarpPath
    final: np.ndarray = None
    elapsed: float = 0.0
    data: DataMatrix = None

    @property
    def iterates(self):
        return self.rows.iterates

    def partitions_at(self, k):
        return self.rows.partition_at(k), self.cols.partition_at(k)

    def estimate_at(self, k):
        """
        The iterate after step ``k`` averaged over the row and column
        clusters fused at that step.
        """
        try:
            U = self.rows.iterates[self.rows.iterate_index.index(k)]
        except ValueError:
            raise InvalidParameter(_("The iterate of step %d was not stored.") % k) from None
        rows, cols = self.partitions_at(k)
        return block_means(U, rows.assignment, cols.assignment)

    def heatmap(self, row_k=None, col_k=None):
        """
        Returns the data with rows and columns in dendrogram leaf order, and
        the same matrix smoothed to block means of the ``row_k x col_k``
        cut (both ``None`` keeps the raw values).
        """
        X = _values(self.data)
        row_tree = self.rows.to_dendrogram()
        row_order = leaves_list(row_tree.to_linkage())
        col_tree = self.cols.to_dendrogram() if len(self.cols.graph) else None
        col_order = leaves_list(col_tree.to_linkage()) if col_tree is not None else np.arange(X.shape[1])

        smoothed = X
        if row_k is not None or col_k is not None:
            row_labels = row_tree.cut(row_k or 1).assignment
            col_labels = (
                col_tree.cut(col_k or 1).assignment
                if col_tree is not None
                else np.arange(X.shape[1])
            )
            smoothed = block_means(X, row_labels, col_labels)

        def ordered(values):
            return DataMatrix(
                values[np.ix_(row_order, col_order)],
                row_labels=[self.rows.labels[i] for i in row_order],
                col_labels=[self.cols.labels[j] for j in col_order],
            )

        return ordered(X), ordered(smoothed)


def write_heatmap(matrix, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([""] + matrix.col_labels)
        for label, row in zip(matrix.row_labels, matrix.values):
            writer.writerow([label] + [format_float(v) for v in row])


def _trace(data, row_graph, col_graph, spec, config, viz):
    if not isinstance(data, DataMatrix):
        data = DataMatrix(data)
    X = data.values
    if row_graph.n != X.shape[0] or col_graph.n != X.shape[1]:
        raise InvalidParameter(_("The graphs do not match the data dimensions."))
    config = config or PathConfig()
    row_graph = row_graph.with_rho(config.rho)
    col_graph = col_graph.with_rho(config.rho)
    spec = spec or BiclusterSpec.for_graphs(row_graph, col_graph, config.norm)
    t = config.step_size(settings.VIZ_T if viz else settings.CBASS_T)
    epsilon = config.epsilon or max(
        default_epsilon(X, row_graph, spec.row),
        default_epsilon(X.T, col_graph, spec.col),
    )
    kind = "cbass-viz" if viz else "cbass"

    rows = CarpPath(graph=row_graph, labels=list(data.row_labels), kind=kind, epsilon=epsilon, t=t)
    cols = CarpPath(graph=col_graph, labels=list(data.col_labels), kind=kind, epsilon=epsilon, t=t)
    traced = [
        TracedGraph(
            rows,
            mask_of=BiClusterState.row_fused,
            scores_of=lambda s: np.linalg.norm(row_graph.difference(s.U) + s.Z_row, axis=1),
            iterate_of=lambda s: s.U,
            dual_of=lambda s: s.Z_row,
        ),
        TracedGraph(
            cols,
            mask_of=BiClusterState.col_fused,
            scores_of=lambda s: np.linalg.norm(col_graph.difference(s.U.T) + s.Z_col, axis=1),
            iterate_of=lambda s: s.U.T,
            dual_of=lambda s: s.Z_col,
        ),
    ]
    tracer = PathTracer(
        lambda s, gamma: cbass_step(s, gamma, row_graph, col_graph, spec),
        traced,
        config,
        epsilon,
        t,
        viz=viz,
    )

    started = time.perf_counter()
    state = tracer.run(BiClusterState.initial(X, row_graph, col_graph))
    stiff_rows = row_graph.with_rho(max(row_graph.rho, settings.SETTLE_RHO))
    stiff_cols = col_graph.with_rho(max(col_graph.rho, settings.SETTLE_RHO))
    state = replace(
        state,
        Z_row=state.Z_row * (row_graph.rho / stiff_rows.rho),
        Z_col=state.Z_col * (col_graph.rho / stiff_cols.rho),
    )
    state, settled = tracer.settle(
        state, lambda s: cbass_fused_step(s, stiff_rows, stiff_cols)
    )
    rows.final, cols.final = state.U, state.U.T
    rows.settle_steps = cols.settle_steps = settled
    result = BiclusterPath(rows, cols, state.U, time.perf_counter() - started, data)
    rows.elapsed = cols.elapsed = result.elapsed

    logger.info(
        "%s path: %d steps, %d row and %d column events, %.3fs",
        kind,
        rows.steps,
        len(rows.events),
        len(cols.events),
        result.elapsed,
    )
    path_finished.send(sender=CarpPath, path=rows)
    path_finished.send(sender=CarpPath, path=cols)
    return result


def cbass_path(data, row_graph, col_graph, spec=None, config=None):
    """
    Traces the bi-clustering path with one row and one column step per
    level until both rows and columns are fully fused.
    """
    return _trace(data, row_graph, col_graph, spec, config, viz=False)


def cbass_viz_path(data, row_graph, col_graph, spec=None, config=None):
    """
    ``cbass_path`` with back-tracking: at most one row or column fusion per
    step.
    """
    return _trace(data, row_graph, col_graph, spec, config, viz=True)


@dataclass
class BiclusterGridResult:
    lambdas: list = field(default_factory=list)
    solutions: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    row_clusters: list = field(default_factory=list)
    col_clusters: list = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def iterates(self):
        return self.solutions


class _DlpaInner:
    # warm-started exact solves along one graph
    def __init__(self, graph, spec, tol, max_iter):
        self.graph = graph
        self.spec = spec
        self.tol = tol
        self.max_iter = max_iter
        self.state = None

    def solve(self, target, lam):
        if not len(self.graph):
            return target.copy()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MaxIterWarning)
            self.state = admm_solve(
                target,
                self.graph,
                self.spec,
                lam,
                init=self.state,
                tol=self.tol,
                max_iter=self.max_iter,
            )
        return self.state.U

    def n_clusters(self):
        if self.state is None:
            return self.graph.n
        count, _labels = component_labels(
            self.graph.n, self.graph.sources, self.graph.targets, self.state.fused()
        )
        return count


def _dlpa(X, lam, rows, cols, tol, max_iter):
    U = X.copy()
    P = np.zeros_like(X)
    Q = np.zeros_like(X)
    for k in range(1, max_iter + 1):
        T = rows.solve(U + P, lam)
        P = U + P - T
        new = cols.solve((T + Q).T, lam).T
        Q = T + Q - new
        change = np.linalg.norm(new - U) / max(1.0, np.linalg.norm(U))
        U = new
        if change < tol:
            return U, k, True
    message = _("DLPA stopped after %(k)d iterations at lambda=%(lam)g.") % {
        "k": max_iter,
        "lam": lam,
    }
    warnings.warn(message, MaxIterWarning, stacklevel=3)
    logger.warning(message)
    return U, max_iter, False


def _inner(row_graph, col_graph, spec, tol, max_iter):
    inner_tol = tol / 10.0
    return (
        _DlpaInner(row_graph, spec.row, inner_tol, max_iter),
        _DlpaInner(col_graph, spec.col, inner_tol, max_iter),
    )


def dlpa_solve(data, row_graph, col_graph, spec=None, lam=1.0, tol=None, max_iter=None):
    """
    Exact bi-clustering solution at ``lam`` by alternating exact row and
    column clusterings with correction terms. Returns ``(U, iterations,
    converged)``.
    """
    X = _values(data)
    if not lam > 0:
        raise InvalidParameter(_("The regularization level must be positive."))
    spec = spec or BiclusterSpec.for_graphs(row_graph, col_graph)
    tol = settings.TOL if tol is None else tol
    max_iter = settings.MAX_ITER if max_iter is None else max_iter
    rows, cols = _inner(row_graph, col_graph, spec, tol, max_iter)
    return _dlpa(X, lam, rows, cols, tol, max_iter)


def dlpa_grid_path(data, row_graph, col_graph, lambdas, spec=None, tol=None, max_iter=None):
    """
    ``dlpa_solve`` at every level of ``lambdas``. Each level restarts from
    the data; the inner solvers are warm-started.
    """
    X = _values(data)
    spec = spec or BiclusterSpec.for_graphs(row_graph, col_graph)
    tol = settings.TOL if tol is None else tol
    max_iter = settings.MAX_ITER if max_iter is None else max_iter
    rows, cols = _inner(row_graph, col_graph, spec, tol, max_iter)

    result = BiclusterGridResult()
    started = time.perf_counter()
    for lam in lambdas:
        if not lam > 0:
            raise InvalidParameter(_("The regularization level must be positive."))
        U, iterations, converged = _dlpa(X, float(lam), rows, cols, tol, max_iter)
        result.lambdas.append(float(lam))
        result.solutions.append(U)
        result.iterations.append(iterations)
        result.converged.append(converged)
        result.row_clusters.append(rows.n_clusters())
        result.col_clusters.append(cols.n_clusters())
    result.elapsed = time.perf_counter() - started
    return result

