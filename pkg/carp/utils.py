"""
Utilities for working with fusion graphs, cluster labels and paths.
"""
import csv
import sys

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from carp.settings import FLOAT_FORMAT


__all__ = (
    "format_float",
    "first_appearance",
    "component_labels",
    "cluster_means",
    "print_debug_info",
)


def format_float(value):
    """
    Formats ``value`` with enough digits to round-trip through text.
    """
    return format(float(value), FLOAT_FORMAT)


def first_appearance(labels):
    """
    Relabels an integer labelling so that clusters are numbered ``0..k-1``
    in order of their first member.
    """
    labels = np.asarray(labels).ravel()
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.intp)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inverse.ravel()]


def component_labels(n, sources, targets, mask=None):
    """
    Given ``n`` nodes and the edges ``sources[l] -- targets[l]``, returns the
    number of connected components and a first-appearance labelling of the
    nodes. Only edges selected by the boolean ``mask`` are considered.
    """
    sources = np.asarray(sources, dtype=np.intp)
    targets = np.asarray(targets, dtype=np.intp)
    if mask is not None:
        sources = sources[mask]
        targets = targets[mask]
    adjacency = sparse.coo_matrix(
        (np.ones(len(sources)), (sources, targets)), shape=(n, n)
    )
    count, labels = connected_components(adjacency, directed=False)
    return count, first_appearance(labels)


def cluster_means(values, labels):
    """
    Replaces every row of ``values`` with the mean of the rows sharing its
    label.
    """
    labels = np.asarray(labels)
    sums = np.zeros((labels.max() + 1, values.shape[1]))
    np.add.at(sums, labels, values)
    counts = np.bincount(labels)
    return (sums / counts[:, None])[labels]


def print_debug_info(path, file=None):
    """
    Given a path, prints one CSV row per step to stdout.
    Use this when things go wrong.
    Please include the output from this method when filing bug issues.
    """
    writer = csv.writer(sys.stdout if file is None else file)
    writer.writerow(("k", "gamma", "clusters", "fused_edges", "events"))
    by_step = {}
    for event in path.events:
        by_step.setdefault(event.k, []).append(event)
    for k, gamma in enumerate(path.gammas):
        events = " ".join(
            "{}{}:{}-{}".format(
                "+" if e.kind == "fuse" else "-", e.edge, e.source, e.target
            )
            for e in by_step.get(k, ())
        )
        writer.writerow(
            (
                k,
                format_float(gamma),
                path.clusters_per_k[k],
                int(np.count_nonzero(path.masks[k])),
                events,
            )
        )
