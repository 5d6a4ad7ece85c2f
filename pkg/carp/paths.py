"""
Algorithmic regularization paths.

Instead of solving to convergence at every regularization level, a path
takes a single ADMM step per level while the level grows geometrically, and
records when edges fuse. ``carp_viz_path`` additionally back-tracks so that
fusions are seen one at a time.
"""
import csv
import json
import logging
import math
import time
import warnings
from collections import defaultdict
from dataclasses import dataclass, field, replace

import numpy as np
from django.utils.translation import gettext as _
from scipy.cluster.hierarchy import DisjointSet

from carp import settings
from carp.dataio import DataMatrix, Partition, _values
from carp.exceptions import BacktrackExhausted, InvalidParameter, IterationCapError
from carp.prox import PenaltySpec
from carp.signals import fusion_observed, path_finished
from carp.solvers import SolverState, admm_fused_step, admm_step, default_epsilon
from carp.utils import component_labels, first_appearance, format_float


__all__ = (
    "FUSE",
    "UNFUSE",
    "FusionEvent",
    "PathConfig",
    "CarpPath",
    "carp_step",
    "carp_path",
    "carp_viz_path",
    "postprocess_events",
)

logger = logging.getLogger(__name__)

FUSE = "fuse"
UNFUSE = "unfuse"

EVENT_FIELDS = ("edge", "from", "to", "gamma", "k", "kind", "exhausted")


@dataclass(frozen=True)
class FusionEvent:
    """
    A change in the cluster structure observed at step ``k``.

    ``score`` is the norm of the proximal argument of ``edge`` before the
    step; among simultaneous fusions, smaller scores fused first.
    """

    edge: int
    source: int
    target: int
    gamma: float
    k: int
    kind: str
    score: float = 0.0
    exhausted: bool = False

    def to_row(self):
        return (
            self.edge,
            self.source,
            self.target,
            format_float(self.gamma),
            self.k,
            self.kind,
            int(self.exhausted),
        )

    def to_dict(self):
        return dict(zip(EVENT_FIELDS, self.to_row()))


@dataclass
class PathConfig:
    """
    Options shared by every path. ``None`` picks the configured default;
    ``t`` defaults differ between plain, visualization and bi-clustering
    paths.
    """

    epsilon: float = None
    t: float = None
    burn_in_t: float = None
    max_backtrack: int = None
    store_every: int = None
    keep_duals: bool = False
    iteration_cap: int = None
    rho: float = None
    norm: str = "l2"
    tol: float = None

    def __post_init__(self):
        if self.tol is None:
            self.tol = settings.TOL
        if self.burn_in_t is None:
            self.burn_in_t = settings.VIZ_BURN_IN_T
        if self.max_backtrack is None:
            self.max_backtrack = settings.MAX_BACKTRACK
        if self.store_every is None:
            self.store_every = settings.STORE_EVERY
        if self.iteration_cap is None:
            self.iteration_cap = settings.ITERATION_CAP

        if self.t is not None and not self.t > 1:
            raise InvalidParameter(_("t must exceed 1"))
        if not self.burn_in_t > 1:
            raise InvalidParameter(_("burn_in_t must exceed 1"))
        if self.epsilon is not None and not self.epsilon > 0:
            raise InvalidParameter(_("epsilon must be positive"))
        if self.rho is not None and not self.rho > 0:
            raise InvalidParameter(_("rho must be positive"))
        if self.max_backtrack < 0:
            raise InvalidParameter(_("max_backtrack must be non-negative"))
        if self.store_every < 1:
            raise InvalidParameter(_("store_every must be at least 1"))
        if self.iteration_cap < 1:
            raise InvalidParameter(_("iteration_cap must be at least 1"))
        if not self.tol > 0:
            raise InvalidParameter(_("tol must be positive"))

    def step_size(self, default):
        return default if self.t is None else self.t


@dataclass
class CarpPath:
    """
    The record of one path along one fusion graph.

    ``gammas[k]`` is the level of step ``k`` (step 0 is the data itself),
    ``masks[k]`` flags the edges fused after it and ``clusters_per_k[k]``
    counts the clusters. Iterates are stored every ``store_every`` steps and
    at every step with events; ``iterate_index`` says which.

    ``final`` is reached from the last step by ``settle_steps`` more
    iterations with every edge held fused, and equals the cluster means to
    the configured tolerance.
    """

    graph: object
    labels: list
    kind: str = "carp"
    epsilon: float = 0.0
    t: float = 0.0
    gammas: list = field(default_factory=list)
    clusters_per_k: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    iterate_index: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    duals: list = field(default_factory=list)
    events: list = field(default_factory=list)
    final: np.ndarray = None
    settle_steps: int = 0
    elapsed: float = 0.0

    @property
    def n(self):
        return self.graph.n

    @property
    def steps(self):
        return len(self.gammas) - 1

    def __repr__(self):
        return "<CarpPath %s n=%d steps=%d events=%d>" % (
            self.kind,
            self.n,
            self.steps,
            len(self.events),
        )

    def partition_at(self, k):
        """
        Returns the clustering after step ``k``.
        """
        _count, labels = component_labels(
            self.n, self.graph.sources, self.graph.targets, self.masks[k]
        )
        return Partition(labels)

    def unique_cluster_counts(self):
        return sorted(set(self.clusters_per_k), reverse=True)

    def fuse_events(self):
        return [e for e in self.events if e.kind == FUSE]

    def to_dendrogram(self, scale=None):
        from carp.dendrogram import build_dendrogram

        bases = {}
        for event in self.events:
            if event.kind == UNFUSE and event.k not in bases:
                kept = self.masks[event.k - 1] & self.masks[event.k]
                _count, bases[event.k] = component_labels(
                    self.n, self.graph.sources, self.graph.targets, kept
                )
        processed = postprocess_events(self)
        return build_dendrogram(
            processed.events,
            self.n,
            labels=self.labels,
            scale=scale,
            origin=self.epsilon,
            bases=bases,
        )

    def to_dict(self, iterates=False):
        result = {
            "kind": self.kind,
            "n": self.n,
            "epsilon": self.epsilon,
            "t": self.t,
            "gammas": [float(g) for g in self.gammas],
            "clusters_per_k": [int(c) for c in self.clusters_per_k],
            "events": [e.to_dict() for e in self.events],
            "settle_steps": self.settle_steps,
            "elapsed": self.elapsed,
        }
        if iterates:
            result["iterate_index"] = list(self.iterate_index)
            result["iterates"] = [U.tolist() for U in self.iterates]
        return result

    def write_json(self, path, iterates=False):
        with open(path, "w") as f:
            json.dump(self.to_dict(iterates=iterates), f, indent=1)

    def write_events(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(EVENT_FIELDS)
            writer.writerows(e.to_row() for e in self.events)


class Transition:
    """
    The cluster changes between two consecutive fusion masks.
    """

    def __init__(self, mask, events, n_clusters, labels):
        self.mask = mask
        self.events = events
        self.n_clusters = n_clusters
        self.labels = labels

    @property
    def merges(self):
        return sum(1 for e in self.events if e.kind == FUSE)


class FusionTracker:
    """
    Follows the fused-edge mask of one graph and turns its changes into
    cluster-level events.

    Edges fusing inside an already connected cluster, or unfusing while the
    cluster stays connected through other edges, produce no event.
    """

    def __init__(self, graph, mask):
        self.graph = graph
        self.mask = mask
        self.n_clusters, self.labels = self._components(mask)

    def _components(self, mask):
        return component_labels(self.graph.n, self.graph.sources, self.graph.targets, mask)

    @property
    def fully_fused(self):
        return bool(self.mask.all())

    def compare(self, mask, scores, k, gamma):
        """
        Events for moving to ``mask`` at step ``k``. ``scores`` is a callable
        returning the per-edge proximal argument norms, called only when
        there are events to order.
        """
        if np.array_equal(mask, self.mask):
            return Transition(mask, [], self.n_clusters, self.labels)

        sources, targets = self.graph.sources, self.graph.targets
        unfusing = np.flatnonzero(self.mask & ~mask)
        fusing = np.flatnonzero(mask & ~self.mask)
        if len(unfusing):
            n_base, base = self._components(self.mask & mask)
        else:
            n_base, base = self.n_clusters, self.labels
        crossing = fusing[base[sources[fusing]] != base[targets[fusing]]]
        if n_base == self.n_clusters and not len(crossing):
            # only edges inside clusters changed
            return Transition(mask, [], self.n_clusters, self.labels)

        norms = scores()
        events = []
        splits = DisjointSet(range(n_base))
        for edge in unfusing:
            if splits.merge(base[sources[edge]], base[targets[edge]]):
                events.append(self._event(edge, gamma, k, UNFUSE, norms))

        joins = DisjointSet(range(n_base))
        merged = 0
        for edge in sorted(crossing, key=lambda e: (norms[e], e)):
            if joins.merge(base[sources[edge]], base[targets[edge]]):
                merged += 1
                events.append(self._event(edge, gamma, k, FUSE, norms))

        roots = np.arange(n_base)
        for c in np.unique(base[np.concatenate((sources[crossing], targets[crossing]))]):
            roots[c] = joins[c]
        return Transition(mask, events, n_base - merged, first_appearance(roots[base]))

    def _event(self, edge, gamma, k, kind, norms):
        return FusionEvent(
            edge=int(edge),
            source=int(self.graph.sources[edge]),
            target=int(self.graph.targets[edge]),
            gamma=float(gamma),
            k=k,
            kind=kind,
            score=float(norms[edge]),
        )

    def commit(self, transition):
        self.mask = transition.mask
        self.n_clusters = transition.n_clusters
        self.labels = transition.labels


class TracedGraph:
    """
    Binds a fusion graph to the parts of a solver state that concern it.
    """

    def __init__(self, path, mask_of, scores_of, iterate_of, dual_of):
        self.path = path
        self.mask_of = mask_of
        self.scores_of = scores_of
        self.iterate_of = iterate_of
        self.dual_of = dual_of
        self.tracker = None

    @property
    def graph(self):
        return self.path.graph

    def start(self, state):
        self.tracker = FusionTracker(self.graph, self.mask_of(state))

    def compare(self, new, old, k, gamma):
        return self.tracker.compare(
            self.mask_of(new), lambda: self.scores_of(old), k, gamma
        )

    def record(self, k, gamma, state, events, config, force):
        path = self.path
        path.gammas.append(float(gamma))
        path.clusters_per_k.append(self.tracker.n_clusters)
        # steps build fresh arrays, so nothing recorded is written to again
        path.masks.append(self.tracker.mask)
        if force or events or k % config.store_every == 0:
            path.iterate_index.append(k)
            path.iterates.append(self.iterate_of(state))
            if config.keep_duals:
                path.duals.append(self.dual_of(state))
        for event in events:
            path.events.append(event)
            fusion_observed.send(sender=CarpPath, event=event, graph=self.graph)

    def settled(self, state, tol):
        """
        Whether every edge difference of the iterate is within
        ``tol / n`` of zero, relative to the iterate's scale.
        """
        if not len(self.graph):
            return True
        values = self.iterate_of(state)
        residual = float(np.abs(self.graph.difference(values)).max())
        return residual * self.graph.n <= tol * max(1.0, float(np.abs(values).max()))


class PathTracer:
    """
    Drives a path: one ``step(state, gamma)`` per level, with the level
    multiplied by ``t`` each time, until every traced graph is fully fused.

    With ``viz`` set, a step producing more than one fusion is retried from
    the same state with half the increment, up to ``max_backtrack`` times,
    and the coarse ``burn_in_t`` is used until the first fusion.
    """

    def __init__(self, step, traced, config, epsilon, t, viz=False):
        self.step = step
        self.traced = traced
        self.config = config
        self.epsilon = epsilon
        self.t = t
        self.viz = viz

    def _attempt(self, state, gamma, factor, k):
        new_gamma = gamma * factor
        new = self.step(state, new_gamma)
        new.check_finite()
        transitions = [lane.compare(new, state, k, new_gamma) for lane in self.traced]
        return new, new_gamma, transitions

    def run(self, state):
        config = self.config
        gamma = self.epsilon
        for lane in self.traced:
            lane.start(state)
            lane.record(0, gamma, state, (), config, force=True)

        burning = self.viz
        multiplier = config.burn_in_t if burning else self.t
        k = 0
        while not all(lane.tracker.fully_fused for lane in self.traced):
            if k >= config.iteration_cap:
                raise IterationCapError(
                    _("No full fusion after %d steps.") % config.iteration_cap
                )
            new, new_gamma, transitions = self._attempt(state, gamma, multiplier, k + 1)
            merges = sum(tr.merges for tr in transitions)

            exhausted = False
            if self.viz:
                increment = multiplier - 1.0
                depth = 0
                while merges > 1 and depth < config.max_backtrack:
                    depth += 1
                    increment /= 2.0
                    new, new_gamma, transitions = self._attempt(
                        state, gamma, 1.0 + increment, k + 1
                    )
                    merges = sum(tr.merges for tr in transitions)
                exhausted = merges > 1
                if depth:
                    logger.debug("Step %d back-tracked %d times", k + 1, depth)

            k += 1
            state, gamma = new, new_gamma
            any_events = any(tr.events for tr in transitions)
            for lane, transition in zip(self.traced, transitions):
                events = transition.events
                if exhausted:
                    events = [replace(e, exhausted=True) for e in events]
                lane.tracker.commit(transition)
                lane.record(k, gamma, state, events, config, force=any_events)
                if events:
                    logger.debug(
                        "k=%d gamma=%s clusters=%d events=%d",
                        k,
                        format_float(gamma),
                        transition.n_clusters,
                        len(events),
                    )
            if exhausted:
                message = _(
                    "%(m)d fusions at step %(k)d could not be separated by back-tracking."
                ) % {"m": merges, "k": k}
                warnings.warn(message, BacktrackExhausted, stacklevel=3)
                logger.warning(message)

            if burning and merges:
                burning = False
                multiplier = self.t

        for lane in self.traced:
            if not lane.path.iterate_index or lane.path.iterate_index[-1] != k:
                lane.path.iterate_index.append(k)
                lane.path.iterates.append(lane.iterate_of(state))
        return state

    def settle(self, state, step):
        """
        Repeats ``step`` from the fully fused ``state`` until every traced
        iterate sits on its cluster means. Returns the settled state and the
        number of steps it took.
        """
        config = self.config
        taken = self.traced[0].path.steps
        count = 0
        while not all(lane.settled(state, config.tol) for lane in self.traced):
            if taken + count >= config.iteration_cap:
                raise IterationCapError(
                    _("The fused path did not settle within %d steps.") % config.iteration_cap
                )
            state = step(state)
            state.check_finite()
            count += 1
        logger.debug("Settled on the cluster means in %d steps", count)
        return state, count


def carp_step(state, gamma, graph, spec, data):
    """
    One CARP step: a single ADMM iteration at level ``gamma``.
    """
    return admm_step(state, _values(data), graph, spec, gamma)


def _labels(data, n):
    if isinstance(data, DataMatrix):
        return list(data.row_labels)
    return ["row_%d" % (i + 1) for i in range(n)]


def _trace(data, graph, spec, config, viz):
    X = _values(data)
    config = config or PathConfig()
    graph = graph.with_rho(config.rho)
    spec = spec or PenaltySpec.for_graph(graph, config.norm)
    default_t = settings.VIZ_T if viz else settings.DEFAULT_T
    t = config.step_size(default_t)
    epsilon = config.epsilon or default_epsilon(X, graph, spec)

    path = CarpPath(
        graph=graph,
        labels=_labels(data, X.shape[0]),
        kind="carp-viz" if viz else "carp",
        epsilon=epsilon,
        t=t,
    )
    lane = TracedGraph(
        path,
        mask_of=SolverState.fused,
        scores_of=lambda s: np.linalg.norm(graph.difference(s.U) + s.Z, axis=1),
        iterate_of=lambda s: s.U,
        dual_of=lambda s: s.Z,
    )
    tracer = PathTracer(
        lambda s, gamma: admm_step(s, X, graph, spec, gamma),
        [lane],
        config,
        epsilon,
        t,
        viz=viz,
    )

    started = time.perf_counter()
    state = tracer.run(SolverState.initial(X, graph))
    # Z is scaled by rho, so it follows the stiffer factor
    stiff = graph.with_rho(max(graph.rho, settings.SETTLE_RHO))
    state = replace(state, Z=state.Z * (graph.rho / stiff.rho))
    state, path.settle_steps = tracer.settle(state, lambda s: admm_fused_step(s, X, stiff))
    path.final = state.U
    path.elapsed = time.perf_counter() - started

    logger.info(
        "%s path: %d steps, %d events, %.3fs",
        path.kind,
        path.steps,
        len(path.events),
        path.elapsed,
    )
    path_finished.send(sender=CarpPath, path=path)
    return path


def carp_path(data, graph, spec=None, config=None):
    """
    Traces the convex clustering path with one ADMM step per level
    ``epsilon * t^k`` until every edge is fused.
    """
    return _trace(data, graph, spec, config, viz=False)


def carp_viz_path(data, graph, spec=None, config=None):
    """
    Like ``carp_path``, but back-tracks so that every step fuses at most
    one pair of clusters, which yields a complete dendrogram.
    """
    return _trace(data, graph, spec, config, viz=True)


def postprocess_events(path):
    """
    Spreads fusions that share a step over the log-scale gap between that
    step and the one before, in order of increasing ``score``.

    Returns a new path; applying it twice changes nothing more.
    """
    events = list(path.events)
    by_step = defaultdict(list)
    for index, event in enumerate(events):
        if event.kind == FUSE:
            by_step[event.k].append(index)

    for k, indices in by_step.items():
        if len(indices) < 2 or k < 1:
            continue
        if any(events[i].gamma != path.gammas[k] for i in indices):
            continue
        low, high = math.log(path.gammas[k - 1]), math.log(path.gammas[k])
        order = sorted(indices, key=lambda i: (events[i].score, events[i].edge))
        for rank, i in enumerate(order, start=1):
            gamma = math.exp(low + rank / len(order) * (high - low))
            events[i] = replace(events[i], gamma=gamma)
    return replace(path, events=events)
