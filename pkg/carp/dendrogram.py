"""
Dendrograms built from fusion events, with exports to a linkage matrix, a
merge table and Newick.
"""
import csv
import logging
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np
from django.utils.translation import gettext as _
from scipy.cluster.hierarchy import cut_tree
from scipy.stats import variation
from treeswift import read_tree_newick

from carp.dataio import Partition
from carp.exceptions import IncompleteEventsError, ParseError, RangeError
from carp.paths import FUSE, UNFUSE
from carp.utils import component_labels, format_float


__all__ = (
    "Merge",
    "Dendrogram",
    "build_dendrogram",
    "cut",
    "to_merge_table",
    "to_newick",
    "parse_newick",
    "read_merge_table",
)

logger = logging.getLogger(__name__)

LINEAR = "linear"
LOG = "log"

MERGE_FIELDS = ("left", "right", "height", "raw_gamma")


@dataclass(frozen=True)
class Merge:
    """
    One binary merge. ``left`` and ``right`` are node ids: leaves are
    ``0..n-1`` and merge ``i`` creates node ``n + i``.

    ``first_gamma`` is set when the two sides were first joined at a lower
    level than the one they stay joined from.
    """

    left: int
    right: int
    height: float
    raw_gamma: float
    size: int
    edge: int = None
    first_gamma: float = None


@dataclass
class Dendrogram:
    n_leaves: int
    merges: list = field(default_factory=list)
    scale: str = LINEAR
    labels: list = None

    def __post_init__(self):
        if self.labels is None:
            self.labels = ["row_%d" % (i + 1) for i in range(self.n_leaves)]

    def __len__(self):
        return len(self.merges)

    @property
    def heights(self):
        return np.array([m.height for m in self.merges])

    def to_linkage(self):
        """
        The merges as a scipy linkage matrix.
        """
        return np.array(
            [[m.left, m.right, m.height, m.size] for m in self.merges], dtype=np.float64
        ).reshape(-1, 4)

    def cut(self, k):
        return cut(self, k)

    def children(self, node):
        return self.merges[node - self.n_leaves]

    def topology(self):
        """
        The tree shape as nested frozensets of leaf labels.
        """

        def shape(node):
            if node < self.n_leaves:
                return self.labels[node]
            merge = self.children(node)
            return frozenset((shape(merge.left), shape(merge.right)))

        if not self.merges:
            return self.labels[0]
        return shape(self.n_leaves + len(self.merges) - 1)


def _choose_scale(gammas):
    """
    Picks the scale on which merge levels are spread most evenly.
    """
    gammas = np.sort(np.asarray(gammas, dtype=np.float64))
    if len(gammas) < 3:
        return LINEAR
    spread = {}
    for scale, values in ((LINEAR, gammas), (LOG, np.log(gammas))):
        gaps = np.diff(values)
        cv = variation(gaps) if gaps.mean() > 0 else np.inf
        spread[scale] = np.inf if np.isnan(cv) else cv
    return LOG if spread[LOG] < spread[LINEAR] else LINEAR


# unfusions of a step come before its fusions
KIND_ORDER = {UNFUSE: 0, FUSE: 1}


class _Forest:
    """
    The fusion edges holding the current clusters together.
    """

    def __init__(self, n):
        self.n = n
        self.edges = {}

    def labels(self):
        ends = list(self.edges.values())
        _count, labels = component_labels(
            self.n, [end[0] for end in ends], [end[1] for end in ends]
        )
        return labels

    def add(self, event, move):
        self.edges[event.edge] = (event.source, event.target, move)

    def remove(self, event):
        """
        Drops the edge of an unfusion. An edge that never held anything
        together stands for the oldest edge between its endpoints.
        """
        if event.edge in self.edges:
            del self.edges[event.edge]
            return
        between = self._path(event.source, event.target)
        if between:
            del self.edges[min(between, key=lambda edge: self.edges[edge][2])]

    def _path(self, start, goal):
        neighbours = defaultdict(list)
        for edge, (a, b, _move) in self.edges.items():
            neighbours[a].append((b, edge))
            neighbours[b].append((a, edge))
        came_from = {start: None}
        queue = deque([start])
        while queue and goal not in came_from:
            node = queue.popleft()
            for other, edge in neighbours[node]:
                if other not in came_from:
                    came_from[other] = (node, edge)
                    queue.append(other)
        if goal not in came_from:
            return []
        edges = []
        node = goal
        while came_from[node] is not None:
            node, edge = came_from[node]
            edges.append(edge)
        return edges


def _replay(events, n, bases):
    """
    The partition after every event, starting from singletons.
    """
    partitions = [np.arange(n)]
    forest = _Forest(n)
    for move, event in enumerate(events, start=1):
        labels = partitions[-1]
        if bases is not None:
            if event.kind == UNFUSE:
                labels = bases[event.k]
            else:
                joined = labels == labels[event.target]
                labels = np.where(joined, labels[event.source], labels)
        elif event.kind == FUSE:
            if labels[event.source] != labels[event.target]:
                forest.add(event, move)
                labels = forest.labels()
        else:
            forest.remove(event)
            labels = forest.labels()
        partitions.append(labels)
    return partitions


def _meet(a, b):
    # the coarsest partition finer than both
    _pairs, inverse = np.unique(np.stack((a, b)), axis=1, return_inverse=True)
    return inverse.ravel()


def _first_connected(partitions, move, left, right):
    for i in range(1, move + 1):
        labels = partitions[i]
        if np.intersect1d(labels[left], labels[right]).size:
            return i
    return move


def build_dendrogram(events, n, labels=None, scale=None, origin=None, bases=None):
    """
    Builds a dendrogram by replaying fusion events in order of their level
    (unfusions first, then edge index).

    The replay gives the partition after every event. Two clusters merge at
    the event after which they stay together for good. An unfusion removes
    its edge from the clusters; one whose edge never joined anything
    removes the oldest edge between its endpoints instead.

    ``bases`` maps a step ``k`` to the labels of the edges fused both before
    and after it. With it, events are replayed by step and every unfusion
    at ``k`` restores those labels, which is exact for path events.

    ``scale`` is ``"linear"``, ``"log"`` or ``None`` to choose the one with
    the more even spacing; log heights are measured from ``origin``.
    """
    fuses = sum(1 for e in events if e.kind == FUSE)
    unfuses = len(events) - fuses
    if fuses - unfuses != n - 1:
        raise IncompleteEventsError(
            _("%(net)d net fusions do not join %(n)d items.")
            % {"net": fuses - unfuses, "n": n}
        )

    if bases is None:
        ordered = sorted(events, key=lambda e: (e.gamma, KIND_ORDER[e.kind], e.edge))
    else:
        ordered = sorted(events, key=lambda e: (e.k, KIND_ORDER[e.kind], e.gamma, e.edge))
    partitions = _replay(ordered, n, bases)
    remaining = len(np.unique(partitions[-1]))
    if remaining != 1:
        raise IncompleteEventsError(_("The surviving fusions leave %d clusters.") % remaining)

    # clusters that stay together from each event on
    settled = [partitions[-1]]
    for partition in reversed(partitions[:-1]):
        settled.append(_meet(partition, settled[-1]))
    settled.reverse()

    node_of = np.arange(n)
    pending = []
    for move, event in enumerate(ordered, start=1):
        before, after = settled[move - 1], settled[move]
        pairs = np.unique(np.stack((after, before)), axis=1)
        for cluster in np.flatnonzero(np.bincount(pairs[0]) > 1):
            members = np.flatnonzero(after == cluster)
            parts = sorted(
                (members[before[members] == part] for part in np.unique(before[members])),
                key=lambda leaves: leaves[0],
            )
            joined = parts[0]
            for part in parts[1:]:
                first = None
                if unfuses:
                    i = _first_connected(partitions, move, joined, part)
                    if ordered[i - 1].gamma != event.gamma:
                        first = ordered[i - 1].gamma
                left, right = int(node_of[joined[0]]), int(node_of[part[0]])
                joined = np.union1d(joined, part)
                node_of[joined] = n + len(pending)
                pending.append((left, right, event.gamma, len(joined), event.edge, first))

    raw = [p[2] for p in pending]
    if scale is None:
        scale = _choose_scale(raw)
    if scale == LOG:
        if origin is None or not 0 < origin <= min(raw, default=1.0):
            origin = min(raw, default=2.0) / 2.0
        heights = [math.log(g / origin) for g in raw]
    elif scale == LINEAR:
        heights = list(raw)
    else:
        raise ValueError(_("Unknown height scale %r.") % scale)
    heights = np.maximum.accumulate(heights) if heights else heights

    merges = [
        Merge(left, right, float(h), float(g), size, edge, first)
        for (left, right, g, size, edge, first), h in zip(pending, heights)
    ]
    logger.debug("Built %s-scale dendrogram with %d merges", scale, len(merges))
    return Dendrogram(n, merges, scale, list(labels) if labels is not None else None)


def cut(dendrogram, k):
    """
    The partition into ``k`` clusters obtained by undoing the last ``k - 1``
    merges.
    """
    n = dendrogram.n_leaves
    if not 1 <= k <= n:
        raise RangeError(_("k must lie in 1..%d.") % n)
    if n == 1:
        return Partition(np.zeros(1, dtype=int))
    labels = cut_tree(dendrogram.to_linkage(), n_clusters=k).ravel()
    return Partition(labels)


def _merge_ref(dendrogram, node):
    # negative 1-based leaves, positive 1-based merge rows
    if node < dendrogram.n_leaves:
        return -(node + 1)
    return node - dendrogram.n_leaves + 1


def to_merge_table(dendrogram):
    """
    Rows ``(left, right, height, raw_gamma)`` where leaf ``j`` is ``-(j+1)``
    and the cluster made by merge row ``i`` is ``i``; singletons come first,
    then the smaller reference.
    """
    rows = []
    for merge in dendrogram.merges:
        refs = sorted(
            (_merge_ref(dendrogram, merge.left), _merge_ref(dendrogram, merge.right)),
            key=lambda r: (r > 0, abs(r)),
        )
        rows.append((refs[0], refs[1], merge.height, merge.raw_gamma))
    return rows


def write_merge_table(dendrogram, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(MERGE_FIELDS)
        for left, right, height, raw in to_merge_table(dendrogram):
            writer.writerow((left, right, format_float(height), format_float(raw)))


def read_merge_table(path, labels, scale=LINEAR):
    """
    Reads a merge table written by ``write_merge_table`` back into a
    ``Dendrogram`` over ``labels``.
    """
    n = len(labels)

    def node(ref):
        return -ref - 1 if ref < 0 else n + ref - 1

    merges = []
    sizes = [1] * n
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            for row in reader:
                left, right = node(int(row["left"])), node(int(row["right"]))
                size = sizes[left] + sizes[right]
                sizes.append(size)
                merges.append(
                    Merge(left, right, float(row["height"]), float(row["raw_gamma"]), size)
                )
    except (KeyError, ValueError, IndexError) as exc:
        raise ParseError(_("Malformed merge table %s.") % path) from exc
    if len(merges) != n - 1:
        raise ParseError(_("%(path)s holds %(m)d merges for %(n)d leaves.") % {
            "path": path, "m": len(merges), "n": n
        })
    return Dendrogram(n, merges, scale, list(labels))


def _newick_label(label):
    label = str(label)
    if any(c in label for c in " ()[]':;,\t"):
        label = "'%s'" % label.replace("'", "''")
    return label


def _unquote(label):
    if label and len(label) > 1 and label[0] == label[-1] == "'":
        return label[1:-1].replace("''", "'")
    return label


def to_newick(dendrogram):
    """
    Newick text where every branch is as long as the height difference
    between a node and its parent.
    """
    n = dendrogram.n_leaves
    if not dendrogram.merges:
        return _newick_label(dendrogram.labels[0]) + ";"

    def height(node):
        return 0.0 if node < n else dendrogram.children(node).height

    def text(node):
        if node < n:
            return _newick_label(dendrogram.labels[node])
        merge = dendrogram.children(node)
        return "(%s:%s,%s:%s)" % (
            text(merge.left),
            format_float(merge.height - height(merge.left)),
            text(merge.right),
            format_float(merge.height - height(merge.right)),
        )

    return text(n + len(dendrogram.merges) - 1) + ";"


def write_newick(dendrogram, path):
    with open(path, "w") as f:
        f.write(to_newick(dendrogram))
        f.write("\n")


def parse_newick(text):
    """
    Parses Newick text into the nested-frozenset shape ``Dendrogram.topology``
    returns.
    """
    try:
        tree = read_tree_newick(text.strip())
    except Exception as exc:
        raise ParseError(_("Invalid Newick text.")) from exc

    def shape(node):
        if node.is_leaf():
            return _unquote(node.label)
        return frozenset(shape(child) for child in node.children)

    root = tree.root
    if len(root.children) == 1 and not root.label:
        root = root.children[0]
    return shape(root)
