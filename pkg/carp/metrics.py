"""
Path and partition quality measures, and baseline clusterings to compare
against.
"""
import logging
from dataclasses import asdict, dataclass

import numpy as np
from django.utils.translation import gettext as _
from scipy.cluster.hierarchy import cut_tree, linkage
from scipy.spatial.distance import directed_hausdorff
from sklearn.cluster import KMeans
from sklearn.metrics import adjusted_rand_score, pair_confusion_matrix, rand_score

from carp.dataio import Partition, _values
from carp.exceptions import (
    DegenerateError,
    IncompleteEventsError,
    InvalidParameter,
    LengthError,
    ShapeError,
)
from carp.paths import FUSE


__all__ = (
    "PathDistance",
    "normalized_hausdorff",
    "normalized_dual_hausdorff",
    "dendrogram_recovery",
    "rand_index",
    "adjusted_rand",
    "jaccard",
    "baseline_partition",
    "compare_partitions",
)

logger = logging.getLogger(__name__)

BASELINES = ("ward", "complete", "average", "single", "kmeans")


@dataclass
class PathDistance:
    """
    Directed and symmetric Hausdorff distances between two stacks of
    iterates, divided by ``n * p * max_l ||(DX)_l||``.
    """

    from_reference: float
    from_candidate: float
    normalizer: float

    @property
    def distance(self):
        return max(self.from_reference, self.from_candidate)

    def __float__(self):
        return self.distance

    def to_dict(self):
        result = asdict(self)
        result["distance"] = self.distance
        return result


def _stack(iterates):
    iterates = getattr(iterates, "iterates", iterates)
    if not len(iterates):
        raise ShapeError(_("An empty list of iterates has no distance."))
    return np.stack([np.asarray(U, dtype=np.float64).ravel() for U in iterates])


def _hausdorff(candidate, reference, normalizer):
    C = _stack(candidate)
    R = _stack(reference)
    if C.shape[1] != R.shape[1]:
        raise ShapeError(_("The iterates being compared differ in shape."))
    if not normalizer > 0:
        raise DegenerateError(_("All rows of the data are identical."))
    return PathDistance(
        from_reference=directed_hausdorff(R, C)[0] / normalizer,
        from_candidate=directed_hausdorff(C, R)[0] / normalizer,
        normalizer=normalizer,
    )


def _normalizer(data, graph):
    X = _values(data)
    n, p = X.shape
    return n * p * float(np.linalg.norm(graph.difference(X), axis=1).max())


def normalized_hausdorff(candidate, reference, data, graph):
    """
    Hausdorff distance between the centroid iterates of two paths (or grid
    results).
    """
    return _hausdorff(candidate, reference, _normalizer(data, graph))


def normalized_dual_hausdorff(candidate, reference, data, graph):
    """
    Same as ``normalized_hausdorff`` for stacks of dual iterates, e.g. the
    ``duals`` of paths traced with ``keep_duals``.
    """
    return _hausdorff(candidate, reference, _normalizer(data, graph))


def _counts_from_events(events, n):
    counts = [n]
    current = n
    by_gamma = {}
    for event in events:
        by_gamma.setdefault(event.gamma, []).append(event)
    for gamma in sorted(by_gamma):
        for event in by_gamma[gamma]:
            current += -1 if event.kind == FUSE else 1
        counts.append(current)
    return counts


def dendrogram_recovery(source, n):
    """
    Fraction of the ``n - 1`` intermediate cluster counts that are observed
    along a path: ``(#distinct counts - 1) / (n - 1)``.

    ``source`` is a path, a grid result or a list of fusion events.
    """
    if n < 2:
        raise InvalidParameter(_("Recovery needs at least two items."))
    if hasattr(source, "clusters_per_k"):
        counts = list(source.clusters_per_k)
    elif hasattr(source, "clusters"):
        counts = [n] + list(source.clusters)
    else:
        counts = _counts_from_events(source, n)
    if not counts or counts[-1] != 1:
        raise IncompleteEventsError(_("The path does not reach full fusion."))
    return (len(set(counts)) - 1) / (n - 1)


def _assignment(partition):
    if isinstance(partition, Partition):
        return partition.assignment
    return np.asarray(partition).ravel()


def _pair(a, b):
    a, b = _assignment(a), _assignment(b)
    if len(a) != len(b):
        raise LengthError(
            _("Partitions of %(a)d and %(b)d items cannot be compared.")
            % {"a": len(a), "b": len(b)}
        )
    return a, b


def rand_index(a, b):
    return float(rand_score(*_pair(a, b)))


def adjusted_rand(a, b):
    return float(adjusted_rand_score(*_pair(a, b)))


def jaccard(a, b):
    """
    Pairs clustered together in both partitions over pairs clustered
    together in either.
    """
    a, b = _pair(a, b)
    counts = pair_confusion_matrix(a, b)
    together = counts[1, 1]
    either = together + counts[0, 1] + counts[1, 0]
    return 1.0 if either == 0 else float(together / either)


def baseline_partition(data, k, method, seed=0):
    """
    Clusters the rows of ``data`` into ``k`` groups with a standard method:
    ``"ward"``, ``"complete"``, ``"average"``, ``"single"`` hierarchical
    clustering or ``"kmeans"``.
    """
    X = _values(data)
    if not 1 <= k <= X.shape[0]:
        raise InvalidParameter(_("k must lie in 1..%d.") % X.shape[0])
    if method == "kmeans":
        labels = KMeans(n_clusters=k, n_init=10, random_state=seed).fit_predict(X)
    elif method in BASELINES:
        labels = cut_tree(linkage(X, method=method), n_clusters=k).ravel()
    else:
        raise InvalidParameter(_("Unknown baseline %r.") % method)
    return Partition(labels)


def compare_partitions(truth, partitions):
    """
    Scores every named partition against ``truth``. Returns a list of dicts
    with the keys ``method``, ``k``, ``rand``, ``adjusted_rand`` and
    ``jaccard``.
    """
    rows = []
    for method, partition in partitions.items():
        partition = partition if isinstance(partition, Partition) else Partition(partition)
        rows.append(
            {
                "method": method,
                "k": partition.k,
                "rand": rand_index(truth, partition),
                "adjusted_rand": adjusted_rand(truth, partition),
                "jaccard": jaccard(truth, partition),
            }
        )
        logger.debug("%s: adjusted rand %.4f", method, rows[-1]["adjusted_rand"])
    return rows
