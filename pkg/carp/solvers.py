"""
Exact convex clustering solvers: ADMM and AMA, at one regularization level
or along a grid of levels.
"""
import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from django.utils.translation import gettext as _

from carp.dataio import _values
from carp.exceptions import (
    DivergenceError,
    InvalidParameter,
    IterationCapError,
    MaxIterWarning,
    NumericalError,
    ShapeError,
)
from carp.prox import PenaltySpec, prox_penalty
from carp.settings import EPSILON_SCALE, ITERATION_CAP, MAX_ITER, TOL
from carp.utils import component_labels


__all__ = (
    "SolverState",
    "GridPathResult",
    "admm_step",
    "admm_fused_step",
    "admm_solve",
    "ama_solve",
    "admm_grid_path",
    "solve_grid",
    "objective",
    "default_epsilon",
)

logger = logging.getLogger(__name__)

# AMA gives up once its iterates grow this much past the data
DIVERGENCE_FACTOR = 1e8


@dataclass
class SolverState:
    """
    ADMM iterate for ``min 1/2 ||X - U||^2 + lam P(V)`` subject to ``DU = V``.

    ``U`` holds the centroids, ``V`` the edge differences and ``Z`` the
    scaled dual variable.
    """

    U: np.ndarray
    V: np.ndarray
    Z: np.ndarray
    k: int = 0
    converged: bool = False
    change: float = np.inf

    @classmethod
    def initial(cls, X, graph):
        DX = graph.difference(X)
        return cls(X.copy(), DX, DX.copy())

    def copy(self):
        return SolverState(
            self.U.copy(), self.V.copy(), self.Z.copy(), self.k, self.converged, self.change
        )

    def fused(self):
        """
        Boolean mask of edges whose difference is exactly zero.
        """
        return ~self.V.any(axis=1)

    def check_finite(self):
        # a sum is finite only if every entry is
        if not np.isfinite(self.U.sum() + self.V.sum() + self.Z.sum()):
            raise NumericalError(_("Solver iterate %d is not finite.") % self.k)


def default_epsilon(X, graph, spec=None):
    """
    Initial regularization level, small enough that nothing fuses at first.
    """
    if not len(graph):
        return 0.0
    weights = graph.weights if spec is None else spec.weights
    largest = np.linalg.norm(graph.difference(X), axis=1).max()
    return EPSILON_SCALE * float(largest) / float(weights.min())


def objective(U, X, graph, spec, lam):
    """
    ``1/2 ||X - U||_F^2 + lam * sum_l w_l ||(DU)_l||_q``.
    """
    return 0.5 * float(np.sum((X - U) ** 2)) + lam * spec.value(graph.difference(U))


def admm_step(state, X, graph, spec, lam):
    """
    One ADMM iteration at regularization ``lam`` using the cached factor.
    """
    U = graph.solve(X + graph.rho * graph.adjoint(state.V - state.Z))
    DU = graph.difference(U)
    V = prox_penalty(DU + state.Z, lam / graph.rho, spec)
    Z = state.Z + DU - V
    return SolverState(U, V, Z, state.k + 1)


def admm_fused_step(state, X, graph):
    """
    One ADMM iteration with every ``V`` row held at zero. Repeated, it
    drives ``U`` to the cluster means of the graph components at any
    ``graph.rho``.
    """
    U = graph.solve(X - graph.rho * graph.adjoint(state.Z))
    return SolverState(U, np.zeros_like(state.V), state.Z + graph.difference(U), state.k + 1)


def _check_level(lam):
    if not lam > 0:
        raise InvalidParameter(_("The regularization level must be positive."))


def _relative_change(new, old):
    return float(np.linalg.norm(new - old) / max(1.0, np.linalg.norm(old)))


def admm_solve(data, graph, spec=None, lam=1.0, init=None, tol=None, max_iter=None):
    """
    Runs ADMM at ``lam`` until the relative change of ``U`` drops below
    ``tol``. Returns the final ``SolverState``; ``state.converged`` is false
    (and a ``MaxIterWarning`` issued) when ``max_iter`` ran out first.
    """
    X = _values(data)
    spec = spec or PenaltySpec.for_graph(graph)
    tol = TOL if tol is None else tol
    max_iter = MAX_ITER if max_iter is None else max_iter
    _check_level(lam)

    state = SolverState.initial(X, graph) if init is None else init.copy()
    if state.U.shape != X.shape or state.V.shape != (len(graph), X.shape[1]):
        raise ShapeError(_("The initial state does not match the data and graph."))
    state.k = 0
    state.converged = False

    for _i in range(max_iter):
        new = admm_step(state, X, graph, spec, lam)
        new.check_finite()
        new.change = _relative_change(new.U, state.U)
        state = new
        if state.change < tol:
            state.converged = True
            return state

    message = _("ADMM stopped after %(k)d iterations at lambda=%(lam)g.") % {
        "k": max_iter,
        "lam": lam,
    }
    warnings.warn(message, MaxIterWarning, stacklevel=2)
    logger.warning(message)
    return state


def default_ama_step(graph):
    return min(0.1 / float(graph.weights.max()), 1.0 / graph.spectral_norm_sq())


def ama_solve(data, graph, spec=None, lam=1.0, init=None, tol=None, max_iter=None, rho=None):
    """
    Alternating minimization on the dual: ``U = X - D^T Z`` followed by a
    proximal step on ``V`` and a dual ascent step of length ``rho``.

    Raises ``DivergenceError`` when ``rho`` is at or past ``2 / ||D||^2`` or
    when the iterates blow up.
    """
    X = _values(data)
    spec = spec or PenaltySpec.for_graph(graph)
    tol = TOL if tol is None else tol
    max_iter = MAX_ITER if max_iter is None else max_iter
    _check_level(lam)

    bound = 2.0 / graph.spectral_norm_sq()
    rho = default_ama_step(graph) if rho is None else float(rho)
    if not 0 < rho < bound:
        raise DivergenceError(
            _("AMA step %(rho)g must lie in (0, %(bound)g).") % {"rho": rho, "bound": bound}
        )

    if init is None:
        state = SolverState(X.copy(), graph.difference(X), np.zeros((len(graph), X.shape[1])))
    else:
        state = init.copy()
    state.k = 0
    state.converged = False
    limit = DIVERGENCE_FACTOR * max(1.0, float(np.linalg.norm(X)))

    for _i in range(max_iter):
        U = X - graph.adjoint(state.Z)
        DU = graph.difference(U)
        V = prox_penalty(DU + state.Z / rho, lam / rho, spec)
        Z = state.Z + rho * (DU - V)
        new = SolverState(U, V, Z, state.k + 1)
        new.check_finite()
        if np.linalg.norm(U) > limit or np.linalg.norm(Z) > limit:
            raise DivergenceError(_("AMA iterates diverged at step %d.") % new.k)
        new.change = _relative_change(U, state.U)
        state = new
        if state.change < tol:
            state.converged = True
            return state

    message = _("AMA stopped after %(k)d iterations at lambda=%(lam)g.") % {
        "k": max_iter,
        "lam": lam,
    }
    warnings.warn(message, MaxIterWarning, stacklevel=2)
    logger.warning(message)
    return state


SOLVERS = {"admm": admm_solve, "ama": ama_solve}


@dataclass
class GridPathResult:
    """
    Exact solutions along an increasing list of regularization levels.
    """

    lambdas: list = field(default_factory=list)
    solutions: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    clusters: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    duals: list = field(default_factory=list)
    solver: str = "admm"
    elapsed: float = 0.0

    def __len__(self):
        return len(self.lambdas)

    @property
    def iterates(self):
        return self.solutions

    def fully_fused(self):
        return bool(self.masks) and bool(self.masks[-1].all())

    def add(self, lam, state, graph):
        self.lambdas.append(float(lam))
        self.solutions.append(state.U)
        self.duals.append(state.Z)
        self.iterations.append(state.k)
        self.converged.append(state.converged)
        mask = state.fused()
        self.masks.append(mask)
        count, _labels = component_labels(graph.n, graph.sources, graph.targets, mask)
        self.clusters.append(count)

    def to_dict(self):
        return {
            "solver": self.solver,
            "lambdas": self.lambdas,
            "iterations": self.iterations,
            "converged": self.converged,
            "clusters": self.clusters,
            "elapsed": self.elapsed,
        }


def _grid_solver(solver):
    try:
        return SOLVERS[solver]
    except KeyError:
        raise InvalidParameter(_("Unknown solver %r.") % solver) from None


def solve_grid(data, graph, lambdas, spec=None, solver="admm", tol=None, max_iter=None):
    """
    Solves exactly at each of ``lambdas``, warm-starting every solve from the
    previous solution.
    """
    solve = _grid_solver(solver)
    spec = spec or PenaltySpec.for_graph(graph)
    lambdas = [float(lam) for lam in lambdas]
    if any(b < a for a, b in zip(lambdas, lambdas[1:])):
        raise InvalidParameter(_("The grid must be non-decreasing."))

    result = GridPathResult(solver=solver)
    started = time.perf_counter()
    state = None
    for lam in lambdas:
        state = solve(data, graph, spec, lam, init=state, tol=tol, max_iter=max_iter)
        result.add(lam, state, graph)
    result.elapsed = time.perf_counter() - started
    logger.info(
        "Solved %d grid points with %s in %.3fs", len(result), solver, result.elapsed
    )
    return result


def admm_grid_path(data, graph, spec=None, epsilon=None, t=1.05, solver="admm", tol=None, max_iter=None):
    """
    Solves exactly on the grid ``epsilon * t^k`` until the converged
    solution is fully fused.
    """
    if not t > 1:
        raise InvalidParameter(_("t must exceed 1"))
    solve = _grid_solver(solver)
    X = _values(data)
    spec = spec or PenaltySpec.for_graph(graph)
    lam = default_epsilon(X, graph, spec) if epsilon is None else float(epsilon)
    _check_level(lam)

    result = GridPathResult(solver=solver)
    started = time.perf_counter()
    state = None
    while True:
        if len(result) >= ITERATION_CAP:
            raise IterationCapError(
                _("No full fusion after %d grid points.") % ITERATION_CAP
            )
        state = solve(X, graph, spec, lam, init=state, tol=tol, max_iter=max_iter)
        result.add(lam, state, graph)
        if state.converged and state.fused().all():
            break
        lam *= t
    result.elapsed = time.perf_counter() - started
    logger.info(
        "Exact %s path reached full fusion after %d grid points",
        solver,
        len(result),
    )
    return result
