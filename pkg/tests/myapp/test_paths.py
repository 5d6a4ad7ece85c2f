import time
import warnings

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from carp.dataio import Partition, gen_gaussian_mixture, gen_half_moons
from carp.exceptions import InvalidParameter, IterationCapError, MaxIterWarning
from carp.metrics import adjusted_rand, dendrogram_recovery, normalized_hausdorff
from carp.paths import (
    FUSE,
    UNFUSE,
    PathConfig,
    carp_path,
    carp_step,
    carp_viz_path,
    postprocess_events,
)
from carp.prox import PenaltySpec
from carp.solvers import SolverState, admm_step, default_epsilon, solve_grid
from carp.weights import build_weights


class CarpPathTestCase(SimpleTestCase):
    def setUp(self):
        self.data, self.truth = gen_gaussian_mixture(3, 8, 2, 10.0, seed=5)
        self.X = self.data.values
        self.graph = build_weights(self.data)
        self.path = carp_path(self.data, self.graph, config=PathConfig(t=1.05))

    def test_starts_at_data(self):
        self.assertEqual(self.path.gammas[0], default_epsilon(self.X, self.graph))
        self.assertEqual(self.path.iterate_index[0], 0)
        assert_array_equal(self.path.iterates[0], self.X)
        self.assertEqual(self.path.clusters_per_k[0], self.data.n)

    def test_ends_at_grand_mean(self):
        mean = np.tile(self.X.mean(axis=0), (self.data.n, 1))
        assert_allclose(self.path.final, mean, atol=1e-6 * np.abs(self.X).max())
        self.assertGreater(self.path.settle_steps, 0)
        self.assertEqual(self.path.iterate_index[-1], self.path.steps)
        self.assertEqual(self.path.clusters_per_k[-1], 1)
        self.assertTrue(self.path.masks[-1].all())

    def test_last_iterate_is_the_last_step(self):
        spec = PenaltySpec.for_graph(self.graph)
        state = SolverState.initial(self.X, self.graph)
        for gamma in self.path.gammas[1:]:
            state = admm_step(state, self.X, self.graph, spec, gamma)
        self.assertTrue(state.fused().all())
        assert_array_equal(self.path.iterates[-1], state.U)

    def test_tighter_tolerance_settles_closer(self):
        path = carp_path(self.data, self.graph, config=PathConfig(t=1.05, tol=1e-9))
        mean = np.tile(self.X.mean(axis=0), (self.data.n, 1))
        assert_allclose(path.final, mean, atol=1e-8 * np.abs(self.X).max())
        self.assertGreaterEqual(path.settle_steps, self.path.settle_steps)

    def test_geometric_levels(self):
        gammas = np.array(self.path.gammas)
        expected = gammas[0] * 1.05 ** np.arange(len(gammas))
        assert_allclose(gammas, expected, rtol=1e-9)

    def test_net_fusions(self):
        kinds = [e.kind for e in self.path.events]
        self.assertEqual(kinds.count(FUSE) - kinds.count(UNFUSE), self.data.n - 1)

    def test_events_match_their_step(self):
        for event in self.path.events:
            self.assertGreaterEqual(event.k, 1)
            self.assertEqual(event.gamma, self.path.gammas[event.k])
            self.assertLess(event.source, event.target)
            self.assertEqual(self.graph.sources[event.edge], event.source)

    def test_event_steps_are_stored(self):
        for event in self.path.events:
            self.assertIn(event.k, self.path.iterate_index)

    def test_partitions(self):
        self.assertEqual(self.path.partition_at(0), Partition(np.arange(self.data.n)))
        self.assertEqual(self.path.partition_at(self.path.steps).k, 1)
        # somewhere along the path the true clusters are found
        found = [
            self.path.partition_at(k) == self.truth
            for k, count in enumerate(self.path.clusters_per_k)
            if count == 3
        ]
        self.assertTrue(any(found))

    def test_step_is_one_admm_iteration(self):
        spec = PenaltySpec.for_graph(self.graph)
        state = SolverState.initial(self.X, self.graph)
        expected = admm_step(state, self.X, self.graph, spec, 0.5)
        result = carp_step(state, 0.5, self.graph, spec, self.data)
        assert_array_equal(result.U, expected.U)
        assert_array_equal(result.Z, expected.Z)

    def test_to_dict(self):
        result = self.path.to_dict()
        self.assertEqual(result["kind"], "carp")
        self.assertEqual(len(result["events"]), len(self.path.events))
        self.assertNotIn("iterates", result)
        self.assertIn("iterates", self.path.to_dict(iterates=True))

    def test_deterministic(self):
        again = carp_path(self.data, self.graph, config=PathConfig(t=1.05))
        self.assertEqual(again.events, self.path.events)
        self.assertEqual(again.gammas, self.path.gammas)


class PathConfigTestCase(SimpleTestCase):
    def setUp(self):
        self.data, _truth = gen_gaussian_mixture(2, 5, 2, 8.0, seed=1)
        self.graph = build_weights(self.data)

    def test_invalid(self):
        with self.assertRaisesMessage(InvalidParameter, "t must exceed 1"):
            PathConfig(t=0.9)
        self.assertRaises(InvalidParameter, PathConfig, epsilon=-1.0)
        self.assertRaises(InvalidParameter, PathConfig, store_every=0)
        self.assertRaises(InvalidParameter, PathConfig, burn_in_t=1.0)
        self.assertRaises(InvalidParameter, PathConfig, tol=0.0)

    def test_iteration_cap(self):
        with self.assertRaises(IterationCapError):
            carp_path(self.data, self.graph, config=PathConfig(iteration_cap=3))

    def test_settling_counts_against_the_cap(self):
        path = carp_path(self.data, self.graph, config=PathConfig(t=1.1))
        self.assertGreater(path.settle_steps, 0)
        config = PathConfig(t=1.1, iteration_cap=path.steps)
        with self.assertRaisesMessage(IterationCapError, "settle"):
            carp_path(self.data, self.graph, config=config)

    def test_store_every(self):
        path = carp_path(self.data, self.graph, config=PathConfig(t=1.1, store_every=7))
        event_steps = {e.k for e in path.events}
        for k in path.iterate_index:
            self.assertTrue(k % 7 == 0 or k in event_steps or k == path.steps)
        self.assertLess(len(path.iterates), len(path.gammas))

    def test_keep_duals(self):
        path = carp_path(self.data, self.graph, config=PathConfig(t=1.1, keep_duals=True))
        self.assertEqual(len(path.duals), len(path.iterates))
        self.assertEqual(path.duals[0].shape, (len(self.graph), self.data.p))

    def test_rho(self):
        path = carp_path(self.data, self.graph, config=PathConfig(t=1.1, rho=2.0))
        self.assertEqual(path.graph.rho, 2.0)
        self.assertEqual(self.graph.rho, 1.0)

    def test_norms(self):
        for norm in ("l1", "linf"):
            path = carp_path(self.data, self.graph, config=PathConfig(t=1.1, norm=norm))
            self.assertEqual(path.clusters_per_k[-1], 1)


class CarpVizTestCase(SimpleTestCase):
    def setUp(self):
        self.data, self.truth = gen_gaussian_mixture(4, 5, 2, 10.0, seed=3)
        self.graph = build_weights(self.data)
        self.path = carp_viz_path(self.data, self.graph)

    def test_one_fusion_at_a_time(self):
        fuses = self.path.fuse_events()
        self.assertEqual(len(fuses), self.data.n - 1)
        self.assertEqual(len(self.path.events), self.data.n - 1)
        self.assertEqual(len({e.gamma for e in fuses}), self.data.n - 1)
        self.assertEqual(len({e.k for e in fuses}), self.data.n - 1)
        self.assertFalse(any(e.exhausted for e in fuses))

    def test_complete_recovery(self):
        self.assertEqual(dendrogram_recovery(self.path, self.data.n), 1.0)
        self.assertEqual(self.path.unique_cluster_counts(), list(range(self.data.n, 0, -1)))

    def test_burn_in_reaches_first_fusion_sooner(self):
        plain = carp_path(self.data, self.graph, config=PathConfig(t=1.01))
        first = min(e.k for e in self.path.events)
        self.assertLess(first, min(e.k for e in plain.events))

    def test_viz_path_ends_at_grand_mean(self):
        X = self.data.values
        assert_allclose(
            self.path.final,
            np.tile(X.mean(axis=0), (self.data.n, 1)),
            atol=1e-6 * np.abs(X).max(),
        )

    def test_dendrogram_cut_recovers_clusters(self):
        tree = self.path.to_dendrogram()
        self.assertEqual(len(tree), self.data.n - 1)
        self.assertEqual(tree.cut(4), self.truth)


class PostprocessTestCase(SimpleTestCase):
    def setUp(self):
        self.data, _truth = gen_gaussian_mixture(3, 10, 2, 5.0, seed=8)
        self.path = carp_path(self.data, build_weights(self.data), config=PathConfig(t=4.0))

    def test_spreads_simultaneous_fusions(self):
        processed = postprocess_events(self.path)
        by_step = {}
        for event in processed.fuse_events():
            by_step.setdefault(event.k, []).append(event.gamma)
        self.assertTrue(any(len(g) > 1 for g in self.path_steps().values()))
        for k, gammas in by_step.items():
            self.assertEqual(len(set(gammas)), len(gammas))
            for gamma in gammas:
                self.assertGreater(gamma, self.path.gammas[k - 1])
                self.assertLessEqual(gamma, self.path.gammas[k] * (1 + 1e-12))

    def path_steps(self):
        by_step = {}
        for event in self.path.fuse_events():
            by_step.setdefault(event.k, []).append(event)
        return by_step

    def test_orders_by_score(self):
        processed = postprocess_events(self.path)
        for k, events in self.path_steps().items():
            if len(events) < 2:
                continue
            gammas = {e.edge: e.gamma for e in processed.fuse_events() if e.k == k}
            ordered = sorted(events, key=lambda e: (e.score, e.edge))
            self.assertEqual(
                [e.edge for e in ordered],
                sorted(gammas, key=gammas.get),
            )

    def test_idempotent(self):
        once = postprocess_events(self.path)
        self.assertEqual(postprocess_events(once).events, once.events)

    def test_original_untouched(self):
        postprocess_events(self.path)
        for event in self.path.events:
            self.assertEqual(event.gamma, self.path.gammas[event.k])


class PathAccuracyTestCase(SimpleTestCase):
    def setUp(self):
        self.data, _truth = gen_gaussian_mixture(3, 18, 2, 10.0, seed=1)
        self.graph = build_weights(self.data)

    def test_finer_steps_track_the_exact_path(self):
        reference = carp_path(self.data, self.graph, config=PathConfig(t=1.0005))
        distances = [
            normalized_hausdorff(
                carp_path(self.data, self.graph, config=PathConfig(t=t)),
                reference,
                self.data,
                self.graph,
            ).distance
            for t in (1.1, 1.05, 1.01, 1.005)
        ]
        for coarse, fine in zip(distances, distances[1:]):
            self.assertLessEqual(fine, coarse)
        self.assertLessEqual(3 * distances[-1], distances[0])

    def test_finer_steps_recover_more(self):
        recoveries = [
            dendrogram_recovery(
                carp_path(self.data, self.graph, config=PathConfig(t=t)), self.data.n
            )
            for t in (1.1, 1.05, 1.01, 1.005)
        ]
        for coarse, fine in zip(recoveries, recoveries[1:]):
            self.assertLessEqual(coarse, fine)

    def test_exact_grid_recovers_less(self):
        path = carp_path(self.data, self.graph, config=PathConfig(t=1.01))
        lambdas = np.geomspace(path.epsilon, path.gammas[-1], 100)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MaxIterWarning)
            grid = solve_grid(self.data, self.graph, lambdas, tol=1e-7)
        self.assertLess(
            dendrogram_recovery(grid, self.data.n), dendrogram_recovery(path, self.data.n)
        )


class VizRecoveryTestCase(SimpleTestCase):
    def test_complete_recovery(self):
        for k, n_per, seed in ((4, 5, 3), (5, 10, 6)):
            data, _truth = gen_gaussian_mixture(k, n_per, 2, 10.0, seed=seed)
            with self.subTest(n=data.n):
                path = carp_viz_path(data, build_weights(data))
                self.assertEqual(dendrogram_recovery(path, data.n), 1.0)


class ClusteringAccuracyTestCase(SimpleTestCase):
    def test_noiseless_half_moons(self):
        data, truth = gen_half_moons(50, 2, 0.0, seed=1)
        tree = carp_path(data, build_weights(data)).to_dendrogram()
        self.assertEqual(adjusted_rand(truth, tree.cut(2)), 1.0)

    def test_gaussian_mixture(self):
        data, truth = gen_gaussian_mixture(3, 30, 2, 10.0, seed=2)
        tree = carp_path(data, build_weights(data), config=PathConfig(t=1.01)).to_dendrogram()
        self.assertGreaterEqual(adjusted_rand(truth, tree.cut(3)), 0.9)


class SpeedTestCase(SimpleTestCase):
    def test_path_beats_exact_grid(self):
        data, _truth = gen_gaussian_mixture(4, 25, 10, 10.0, seed=2)
        graph = build_weights(data)
        timings = []
        for _i in range(3):
            started = time.perf_counter()
            path = carp_path(data, graph, config=PathConfig(t=1.05))
            timings.append(time.perf_counter() - started)

        lambdas = np.geomspace(path.epsilon, path.gammas[-1], 100)
        started = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MaxIterWarning)
            solve_grid(data, graph, lambdas, tol=1e-7)
        exact = time.perf_counter() - started
        self.assertGreaterEqual(exact / min(timings), 10.0)
