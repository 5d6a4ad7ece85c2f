import io
import os
import re
import tempfile
import unittest

import numpy as np
from django.test import SimpleTestCase, override_settings
from numpy.testing import assert_allclose, assert_array_equal


try:
    from mock_django import mock_signal_receiver
except ImportError:
    mock_signal_receiver = None

from myapp.oracles import prox_by_minimization

from carp.dataio import (
    DataMatrix,
    Partition,
    gen_checkerboard,
    gen_gaussian_mixture,
    gen_half_moons,
    gen_two_circles,
    load_csv,
    load_labels,
    mixture_centroids,
    save_csv,
    save_labels,
    standardize,
)
from carp.exceptions import (
    ConstantColumnWarning,
    DegenerateError,
    DimensionError,
    InvalidParameter,
    ParseError,
    ShapeError,
    UnsupportedNorm,
)
from carp.paths import CarpPath, carp_path
from carp.prox import PenaltySpec, parse_norm, project_l1_ball, prox_penalty
from carp.signals import fusion_observed, path_finished
from carp.utils import cluster_means, component_labels, first_appearance, print_debug_info
from carp.weights import (
    MIN_WEIGHT,
    WeightGraph,
    build_difference_matrix,
    build_weights,
    factorize,
    load_edges,
    save_edges,
)


def get_merge_details(dendrogram):
    """
    Creates pertinent merge details for the given dendrogram.
    The fields are:
        node  left  right  size  height
    """
    return "\n".join(
        "{} {} {} {} {:g}".format(
            dendrogram.n_leaves + i, m.left, m.right, m.size, m.height
        )
        for i, m in enumerate(dendrogram.merges)
    )


leading_whitespace_re = re.compile(r"^\s+", re.MULTILINE)


def tree_details(text):
    """
    Trims leading whitespace from the given text specifying merge details
    so triple-quoted strings can be used to provide them in a readable
    format, to be compared with the result of ``get_merge_details``.
    """
    return leading_whitespace_re.sub("", text.rstrip())


class TreeTestCase(SimpleTestCase):
    def assertTreeEqual(self, tree1, tree2):
        if not isinstance(tree1, str):
            tree1 = get_merge_details(tree1)
        tree1 = tree_details(tree1)
        if not isinstance(tree2, str):
            tree2 = get_merge_details(tree2)
        tree2 = tree_details(tree2)
        return self.assertEqual(tree1, tree2, f"\n{tree1!r}\n != \n{tree2!r}")

    def write(self, directory, name, text):
        path = os.path.join(directory, name)
        with open(path, "w") as f:
            f.write(text)
        return path


def mixture(k=3, n_per=10, p=2, sep=10.0, seed=7):
    data, truth = gen_gaussian_mixture(k, n_per, p, sep, seed)
    return data, truth


class DataMatrixTestCase(TreeTestCase):
    def test_labels_are_generated(self):
        data = DataMatrix(np.arange(6.0).reshape(3, 2))
        self.assertEqual(data.row_labels, ["row_1", "row_2", "row_3"])
        self.assertEqual(data.col_labels, ["col_1", "col_2"])
        self.assertEqual((data.n, data.p), (3, 2))

    def test_too_small(self):
        self.assertRaises(DimensionError, DataMatrix, np.ones((1, 3)))
        self.assertRaises(DimensionError, DataMatrix, np.ones((3, 0)))

    def test_non_finite(self):
        self.assertRaises(InvalidParameter, DataMatrix, [[1.0, np.nan], [0.0, 1.0]])

    def test_label_count(self):
        self.assertRaises(ShapeError, DataMatrix, np.ones((2, 2)), row_labels=["a"])

    def test_transpose(self):
        data = DataMatrix(np.arange(6.0).reshape(3, 2), col_labels=["x", "y"])
        flipped = data.transpose()
        assert_array_equal(flipped.values, data.values.T)
        self.assertEqual(flipped.row_labels, ["x", "y"])


class PartitionTestCase(TreeTestCase):
    def test_first_appearance(self):
        partition = Partition([5, 5, 2, 9, 2])
        assert_array_equal(partition.assignment, [0, 0, 1, 2, 1])
        self.assertEqual(partition.k, 3)
        self.assertEqual(partition, Partition([1, 1, 0, 7, 0]))

    def test_clusters(self):
        clusters = Partition([0, 1, 0]).clusters()
        assert_array_equal(clusters[0], [0, 2])
        assert_array_equal(clusters[1], [1])


class LoadCsvTestCase(TreeTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_header_and_rownames(self):
        path = self.write(self.tmp.name, "a.csv", ",x,y\nr1,1,2\nr2,3,4.5\n")
        data = load_csv(path, has_header=True, has_rownames=True)
        assert_array_equal(data.values, [[1, 2], [3, 4.5]])
        self.assertEqual(data.row_labels, ["r1", "r2"])
        self.assertEqual(data.col_labels, ["x", "y"])

    def test_no_header(self):
        path = self.write(self.tmp.name, "a.csv", "1,2\n3,4\n5,6\n")
        data = load_csv(path, has_header=False)
        self.assertEqual(data.n, 3)
        self.assertEqual(data.col_labels, ["col_1", "col_2"])

    def test_non_numeric(self):
        path = self.write(self.tmp.name, "a.csv", "x,y\n1,abc\n3,4\n")
        with self.assertRaisesMessage(ParseError, "line 2"):
            load_csv(path)

    def test_ragged(self):
        path = self.write(self.tmp.name, "a.csv", "x,y\n1,2\n3\n")
        self.assertRaises(ParseError, load_csv, path)

    def test_nan(self):
        path = self.write(self.tmp.name, "a.csv", "x,y\n1,nan\n3,4\n")
        self.assertRaises(ParseError, load_csv, path)

    def test_save_and_load(self):
        data, _truth = mixture()
        path = os.path.join(self.tmp.name, "data.csv")
        save_csv(data, path)
        loaded = load_csv(path, has_rownames=True)
        assert_array_equal(loaded.values, data.values)
        self.assertEqual(loaded.row_labels, data.row_labels)

    def test_labels(self):
        path = os.path.join(self.tmp.name, "labels.csv")
        save_labels(Partition([0, 0, 1]), path)
        self.assertEqual(load_labels(path), Partition([0, 0, 1]))


class StandardizeTestCase(TreeTestCase):
    def test_moments(self):
        data, _truth = mixture(p=3)
        result = standardize(data)
        assert_allclose(result.values.mean(axis=0), 0, atol=1e-12)
        assert_allclose(result.values.std(axis=0, ddof=1), 1, atol=1e-12)

    def test_idempotent(self):
        data, _truth = mixture(p=3)
        once = standardize(data)
        assert_allclose(standardize(once).values, once.values, atol=1e-12)

    def test_constant_column(self):
        data = DataMatrix([[1.0, 0.1], [2.0, 0.1], [4.0, 0.1]])
        with self.assertWarns(ConstantColumnWarning):
            result = standardize(data)
        assert_array_equal(result.values[:, 1], 0.0)
        self.assertEqual(len(result.warnings), 1)


class GeneratorTestCase(TreeTestCase):
    def test_gaussian_mixture(self):
        data, truth = gen_gaussian_mixture(3, 50, 2, 10.0, seed=1)
        self.assertEqual(data.values.shape, (150, 2))
        self.assertEqual(truth.k, 3)
        centroids = mixture_centroids(3, 2, 10.0, seed=1)
        assert_allclose(np.linalg.norm(np.diff(centroids, axis=0), axis=1), 10.0)
        for c, members in enumerate(truth.clusters()):
            error = np.abs(data.values[members].mean(axis=0) - centroids[c])
            self.assertTrue((error < 4.5 / np.sqrt(50)).all(), error)

    def test_seeded(self):
        first, _truth = gen_gaussian_mixture(3, 5, 4, 10.0, seed=3)
        again, _truth = gen_gaussian_mixture(3, 5, 4, 10.0, seed=3)
        other, _truth = gen_gaussian_mixture(3, 5, 4, 10.0, seed=4)
        assert_array_equal(first.values, again.values)
        self.assertFalse(np.array_equal(first.values, other.values))

    def test_invalid(self):
        self.assertRaises(InvalidParameter, gen_gaussian_mixture, 3, 5, 2, 0.0, 1)
        self.assertRaises(DimensionError, gen_gaussian_mixture, 3, 5, 1, 10.0, 1)

    def test_too_few_groups_or_points(self):
        with self.assertRaisesMessage(InvalidParameter, "two components"):
            gen_gaussian_mixture(1, 5, 2, 10.0, 1)
        with self.assertRaisesMessage(InvalidParameter, "two points"):
            gen_half_moons(1, 2, 0.0, 1)
        data, truth = gen_half_moons(2, 2, 0.0, 1)
        self.assertEqual((data.n, truth.k), (4, 2))

    def test_half_moons_lie_in_a_plane(self):
        data, truth = gen_half_moons(25, 5, 0.0, seed=2)
        self.assertEqual(data.values.shape, (50, 5))
        self.assertEqual(np.linalg.matrix_rank(data.values, tol=1e-8), 2)
        assert_array_equal(np.bincount(truth.assignment), [25, 25])

    def test_half_moons_noise_is_off_plane(self):
        clean, _truth = gen_half_moons(25, 5, 0.0, seed=2)
        noisy, _truth = gen_half_moons(25, 5, 0.3, seed=2)
        basis, _r = np.linalg.qr(clean.values.T)
        in_plane = (noisy.values @ basis[:, :2]) @ basis[:, :2].T
        assert_allclose(in_plane, clean.values, atol=1e-10)

    def test_two_circles(self):
        data, truth = gen_two_circles(30, 3, 0.0, seed=5)
        radii = np.linalg.norm(data.values, axis=1)
        assert_allclose(radii[truth.assignment == 0], 1.0)
        assert_allclose(radii[truth.assignment == 1], 0.5)

    def test_checkerboard(self):
        data, rows, cols = gen_checkerboard(4, 2, 5, 5, 3.0, 0.0, seed=1)
        self.assertEqual(data.values.shape, (20, 10))
        self.assertEqual((rows.k, cols.k), (4, 2))
        self.assertEqual(len(np.unique(data.values)), 8)


class DifferenceMatrixTestCase(TreeTestCase):
    def test_rows(self):
        X = np.array([[1.0, 2.0], [4.0, 8.0], [16.0, 32.0]])
        D = build_difference_matrix([(0, 1), (1, 2)], 3)
        assert_array_equal(D @ X, [X[0] - X[1], X[1] - X[2]])

    def test_out_of_range(self):
        self.assertRaises(IndexError, build_difference_matrix, [(0, 3)], 3)

    def test_factor(self):
        D = build_difference_matrix([(0, 1), (1, 2)], 3)
        L = factorize(D, 2.0)
        assert_allclose(L @ L.T, np.eye(3) + 2.0 * (D.T @ D).toarray())
        assert_array_equal(factorize(build_difference_matrix([], 3), 1.0), np.eye(3))


class BuildWeightsTestCase(TreeTestCase):
    def test_collinear_chain(self):
        graph = build_weights(DataMatrix([[0.0], [1.0], [3.0]]), k_neighbors=1)
        self.assertEqual([(e.source, e.target) for e in graph.edges], [(0, 1), (1, 2)])

    def test_uniform_weights(self):
        data, _truth = mixture()
        graph = build_weights(data, phi=0)
        assert_array_equal(graph.weights, 1.0)

    def test_weights(self):
        data, _truth = mixture()
        graph = build_weights(data)
        self.assertEqual(graph.weights.max(), 1.0)
        self.assertTrue((graph.weights > 0).all())
        self.assertTrue((graph.sources < graph.targets).all())
        self.assertTrue(graph.is_connected())
        # every item keeps at least its own neighbours
        degree = np.bincount(np.concatenate([graph.sources, graph.targets]), minlength=data.n)
        self.assertTrue((degree >= 5).all())

    def test_spanning_tree_bridge(self):
        positions = [0.0, 1.0, 3.0, 6.0, 100.0, 101.0, 103.0, 106.0]
        graph = build_weights(DataMatrix([[x] for x in positions]), k_neighbors=1, phi=0)
        self.assertEqual(len(graph), 7)
        self.assertIn((3, 4), [(e.source, e.target) for e in graph.edges])

    def test_far_outlier(self):
        rng = np.random.default_rng(0)
        X = np.vstack([rng.standard_normal((20, 2)), [[60.0, 0.0]]])
        graph = build_weights(DataMatrix(X))
        self.assertTrue(graph.is_connected())
        self.assertTrue((graph.weights > 0).all())
        self.assertEqual(graph.weights.max(), 1.0)
        # the edges of the outlier are floored
        self.assertEqual(graph.weights.min(), MIN_WEIGHT)

        path = carp_path(X, graph)
        self.assertEqual(path.clusters_per_k[-1], 1)
        assert_allclose(path.final, np.tile(X.mean(axis=0), (21, 1)), atol=1e-6 * 60)

    def test_duplicate_rows(self):
        with self.assertRaisesMessage(DegenerateError, "jitter"):
            build_weights(DataMatrix([[0.0, 1.0], [0.0, 1.0], [2.0, 2.0]]))

    def test_disconnected(self):
        self.assertRaises(DegenerateError, WeightGraph, 3, [(0, 1, 1.0)])

    def test_invalid_weight(self):
        self.assertRaises(InvalidParameter, WeightGraph, 2, [(0, 1, 0.0)])

    def test_solve(self):
        data, _truth = mixture()
        graph = build_weights(data, rho=0.5)
        rhs = np.arange(data.n * 2.0).reshape(data.n, 2)
        assert_allclose(graph.solve(graph.multiply(rhs)), rhs, atol=1e-10)
        self.assertRaises(ShapeError, graph.solve, np.ones((data.n + 1, 2)))

    def test_edges_file(self):
        data, _truth = mixture()
        graph = build_weights(data)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "edges.csv")
            save_edges(graph, path)
            loaded = load_edges(path, data.n)
        self.assertEqual(loaded.edges, graph.edges)


class ProxTestCase(TreeTestCase):
    def setUp(self):
        self.M = np.array([[2.0, 0.0], [0.0, -1.0], [3.0, 4.0]])
        self.weights = np.ones(3)

    def test_zero_threshold(self):
        for q in ("l1", "l2", "linf"):
            spec = PenaltySpec(q, self.weights)
            assert_array_equal(prox_penalty(self.M, 0.0, spec), self.M)

    def test_exact_zero(self):
        result = prox_penalty(self.M, 2.0, PenaltySpec("l2", self.weights))
        assert_array_equal(result[:2], 0.0)
        assert_allclose(result[2], [3.0 * 0.6, 4.0 * 0.6])

    def test_weighted_threshold(self):
        spec = PenaltySpec("l2", [1.0, 1.0, 0.1])
        result = prox_penalty(self.M, 2.0, spec)
        assert_allclose(result[2], self.M[2] * (1 - 0.2 / 5.0))

    def test_soft_threshold(self):
        result = prox_penalty(self.M, 1.5, PenaltySpec("l1", self.weights))
        assert_allclose(result, [[0.5, 0.0], [0.0, 0.0], [1.5, 2.5]])

    def test_against_minimization(self):
        rng = np.random.default_rng(0)
        for q in ("l1", "l2", "linf"):
            spec = PenaltySpec(q, np.ones(1))
            for _i in range(5):
                v = rng.standard_normal(4)
                tau = rng.uniform(0.1, 1.5)
                expected = prox_by_minimization(v, tau, spec.q)
                assert_allclose(prox_penalty(v[None, :], tau, spec)[0], expected, atol=1e-4)

    def test_non_expansive(self):
        rng = np.random.default_rng(1)
        for q in ("l1", "l2", "linf"):
            spec = PenaltySpec(q, rng.uniform(0.2, 2.0, 6))
            for _i in range(20):
                A, B = 2.0 * rng.standard_normal((2, 6, 3))
                tau = rng.uniform(0.0, 2.0)
                moved = prox_penalty(A, tau, spec) - prox_penalty(B, tau, spec)
                self.assertLessEqual(np.linalg.norm(moved), np.linalg.norm(A - B) + 1e-12)

    def test_rows_shrink(self):
        rng = np.random.default_rng(3)
        M = 2.0 * rng.standard_normal((50, 4))
        for q in ("l1", "l2", "linf"):
            spec = PenaltySpec(q, rng.uniform(0.2, 2.0, 50))
            result = prox_penalty(M, 0.7, spec)
            self.assertTrue((spec.row_norms(result) <= spec.row_norms(M) + 1e-12).all())
            self.assertTrue(
                (np.linalg.norm(result, axis=1) <= np.linalg.norm(M, axis=1) + 1e-12).all()
            )

    def test_exact_zero_iff_within_threshold(self):
        rng = np.random.default_rng(2)
        weights = rng.uniform(0.5, 1.5, 200)
        M = rng.standard_normal((200, 3))
        result = prox_penalty(M, 1.5, PenaltySpec("l2", weights))
        assert_array_equal(~result.any(axis=1), np.linalg.norm(M, axis=1) <= 1.5 * weights)

    def test_project_l1_ball(self):
        v = np.array([3.0, -1.0, 0.5])
        projected = project_l1_ball(v, 2.0)
        self.assertAlmostEqual(np.abs(projected).sum(), 2.0)
        assert_allclose(projected, [2.0, -0.0, 0.0])
        assert_array_equal(project_l1_ball(v, 10.0), v)
        assert_array_equal(project_l1_ball(v, 0.0), 0.0)

    def test_norms(self):
        self.assertEqual(parse_norm("L2"), 2.0)
        self.assertEqual(parse_norm("inf"), np.inf)
        self.assertRaises(UnsupportedNorm, parse_norm, "l3")
        self.assertRaises(UnsupportedNorm, PenaltySpec, 3, self.weights)
        self.assertRaises(InvalidParameter, PenaltySpec, "l2", [1.0, -1.0])

    def test_shape(self):
        self.assertRaises(ShapeError, prox_penalty, self.M, 1.0, PenaltySpec("l2", [1.0]))


class UtilsTestCase(TreeTestCase):
    def test_first_appearance(self):
        assert_array_equal(first_appearance([3, 1, 3, 0]), [0, 1, 0, 2])

    def test_component_labels(self):
        count, labels = component_labels(4, [0, 2], [1, 3], np.array([True, False]))
        self.assertEqual(count, 3)
        assert_array_equal(labels, [0, 0, 1, 2])

    def test_cluster_means(self):
        values = np.array([[1.0], [3.0], [10.0]])
        assert_array_equal(cluster_means(values, np.array([0, 0, 1])), [[2.0], [2.0], [10.0]])


class TestDebugInfo(TreeTestCase):
    def test_debug_info(self):
        data, _truth = mixture(n_per=4)
        path = carp_path(data, build_weights(data))

        with io.StringIO() as out:
            print_debug_info(path, file=out)
            output = out.getvalue()

        lines = output.splitlines()
        self.assertEqual(lines[0], "k,gamma,clusters,fused_edges,events")
        self.assertEqual(len(lines), len(path.gammas) + 1)
        self.assertTrue(lines[1].startswith("0,"))
        self.assertIn(",1,", lines[-1])


@override_settings(CARP_OUTPUT_DIR="/nonexistent/carp")
class SettingsTestCase(TreeTestCase):
    def test_output_dir(self):
        from carp.settings import get_output_dir

        self.assertEqual(get_output_dir(), "/nonexistent/carp")


@unittest.skipUnless(
    mock_signal_receiver, "Signals tests require mock_django installed"
)
class Signals(TreeTestCase):
    def setUp(self):
        self.data, _truth = mixture(n_per=5)
        self.graph = build_weights(self.data)

    def test_fusion_observed_for_every_event(self):
        with mock_signal_receiver(fusion_observed, sender=CarpPath) as receiver:
            path = carp_path(self.data, self.graph)

            self.assertEqual(receiver.call_count, len(path.events))
            kwargs = receiver.call_args[1]
            self.assertEqual(kwargs["event"], path.events[-1])
            self.assertIs(kwargs["graph"], path.graph)

    def test_path_finished_once(self):
        with mock_signal_receiver(path_finished, sender=CarpPath) as receiver:
            path = carp_path(self.data, self.graph)

            self.assertEqual(receiver.call_count, 1)
            self.assertIs(receiver.call_args[1]["path"], path)
