"""
Proximal operators of the weighted fusion penalty.
"""
from dataclasses import dataclass

import numpy as np
from django.utils.translation import gettext as _

from carp.exceptions import InvalidParameter, ShapeError, UnsupportedNorm


__all__ = ("PenaltySpec", "prox_penalty", "project_l1_ball", "parse_norm")

NORMS = {"l1": 1.0, "l2": 2.0, "linf": np.inf}


def parse_norm(name):
    """
    Maps ``"l1"``, ``"l2"`` or ``"linf"`` (or the numbers 1, 2, ``inf``) to
    the exponent ``q``.
    """
    if isinstance(name, str):
        key = name.lower().replace("-", "").replace("_", "")
        key = {"inf": "linf", "1": "l1", "2": "l2"}.get(key, key)
        if key in NORMS:
            return NORMS[key]
        try:
            name = float(name)
        except ValueError:
            raise UnsupportedNorm(_("Unknown norm %r.") % name) from None
    q = float(name)
    if q not in NORMS.values():
        raise UnsupportedNorm(_("Only the l1, l2 and linf norms are supported, not %r.") % name)
    return q


@dataclass(frozen=True)
class PenaltySpec:
    """
    The penalty ``sum_l w_l ||v_l||_q`` over the rows of an edge matrix.
    """

    q: float
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", parse_norm(self.q))
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if (weights <= 0).any():
            raise InvalidParameter(_("Penalty weights must be positive."))
        object.__setattr__(self, "weights", weights)

    @classmethod
    def for_graph(cls, graph, q="l2"):
        return cls(q, graph.weights)

    @property
    def name(self):
        return {1.0: "l1", 2.0: "l2"}.get(self.q, "linf")

    def row_norms(self, M):
        return np.linalg.norm(M, ord=self.q, axis=1) if M.shape[1] else np.zeros(len(M))

    def value(self, M):
        return float(self.weights @ self.row_norms(M)) if len(M) else 0.0


def _project_rows(M, radius):
    """
    Projects every row of ``M`` onto the l1 ball of the matching ``radius``.
    """
    A = np.abs(M)
    result = M.copy()
    outside = A.sum(axis=1) > radius
    zero = outside & (radius <= 0)
    result[zero] = 0.0

    rows = np.flatnonzero(outside & ~zero)
    if len(rows):
        r = radius[rows][:, None]
        decreasing = -np.sort(-A[rows], axis=1)
        cumsum = np.cumsum(decreasing, axis=1)
        theta = (cumsum - r) / np.arange(1, M.shape[1] + 1)
        # last index where the sorted entry still exceeds its threshold
        positive = decreasing - theta > 0
        last = M.shape[1] - 1 - np.argmax(positive[:, ::-1], axis=1)
        shift = theta[np.arange(len(rows)), last]
        result[rows] = np.sign(M[rows]) * np.maximum(A[rows] - shift[:, None], 0.0)
    return result


def project_l1_ball(v, radius):
    """
    Euclidean projection of the vector ``v`` onto ``{x : ||x||_1 <= radius}``.
    """
    v = np.asarray(v, dtype=np.float64)
    return _project_rows(v[None, :], np.array([float(radius)]))[0]


def prox_penalty(M, threshold_base, spec):
    """
    Row-wise proximal operator of ``threshold_base * sum_l w_l ||row_l||_q``.

    A row comes out exactly zero if and only if its dual norm does not
    exceed ``threshold_base * w_l``.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != len(spec.weights):
        raise ShapeError(
            _("Expected %(m)d rows, got shape %(shape)s.")
            % {"m": len(spec.weights), "shape": M.shape}
        )
    tau = threshold_base * spec.weights

    if spec.q == 1.0:
        return np.sign(M) * np.maximum(np.abs(M) - tau[:, None], 0.0)

    if spec.q == 2.0:
        norms = np.linalg.norm(M, axis=1)
        shrink = np.zeros_like(norms)
        keep = norms > tau
        shrink[keep] = 1.0 - tau[keep] / norms[keep]
        return M * shrink[:, None]

    # Moreau decomposition: the dual ball of l-infinity is l1
    return M - _project_rows(M, tau)
