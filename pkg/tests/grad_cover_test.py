import logging
import unittest

import numpy as np

from polcom.cover_core import coverage_stats, gea
from polcom.CoverError import DivergenceError, ValidationError
from polcom.costs import MAX_ASSIGNMENT_LOGIT
from polcom.grad_cover import (
    OptimizerConfig,
    RelaxState,
    covering_logit,
    initial_state,
    optimize_cover,
    relax_gradient,
    relax_objective,
)
from polcom.instances import planted_tasks, velocity_tasks
from polcom.task_space import TaskSet


def tie_free_state(rng, n=6, d=3, K=2, epsilon=0.5, margin=1e-3):
    """
    A random point of the proxy where every hinge and every max-norm is
    differentiable.
    """
    while True:
        tasks = TaskSet(rng.uniform(0.0, 3.0, size=(n, d)))
        state = RelaxState(rng.uniform(0.0, 3.0, size=(K, d)), rng.normal(size=(n, K)))
        diff = np.abs(state.centers[None, :, :] - tasks.matrix[:, None, :])
        top2 = np.sort(diff, axis=2)[:, :, -2:]
        z = np.sum(state.assignment_weights() * diff.max(axis=2), axis=1) - epsilon
        if np.min(np.abs(z)) > margin and np.min(top2[:, :, 1] - top2[:, :, 0]) > margin:
            return tasks, state


class RelaxationTest(unittest.TestCase):
    def test_objective_is_zero_when_centers_sit_on_tasks(self):
        tasks = velocity_tasks()
        state = RelaxState(tasks.matrix, np.eye(5) * 50.0)
        self.assertAlmostEqual(relax_objective(state, tasks, 1.0), 0.0)
        g = relax_gradient(state, tasks, 1.0)
        self.assertFalse(g.centers.any() or g.logits.any())

    def test_known_value(self):
        tasks = TaskSet([0.0, 4.0])
        # equal weights on both centers: each task sees (0 + 4) / 2 = 2
        state = RelaxState([[0.0], [4.0]], np.zeros((2, 2)))
        self.assertAlmostEqual(relax_objective(state, tasks, 1.0), 2.0)

    def test_uniform_weights_average_the_distances(self):
        # distances eps + 2 and eps under equal weights
        eps = 0.5
        state = RelaxState([[eps + 2.0], [eps]], np.zeros((1, 2)))
        self.assertAlmostEqual(relax_objective(state, TaskSet([0.0]), eps), 1.0)

    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(1234)
        h = 1e-6
        for _ in range(100):
            tasks, state = tie_free_state(rng)
            g = relax_gradient(state, tasks, 0.5)
            for name in ("centers", "logits"):
                analytic = getattr(g, name)
                base = getattr(state, name)
                for idx in np.ndindex(base.shape):
                    plus, minus = state.copy(), state.copy()
                    getattr(plus, name)[idx] += h
                    getattr(minus, name)[idx] -= h
                    fd = (relax_objective(plus, tasks, 0.5) - relax_objective(minus, tasks, 0.5)) / (2 * h)
                    self.assertLessEqual(abs(analytic[idx] - fd), 1e-4 * max(1.0, abs(fd)), (name, idx))

    def test_temperature_scales_logit_gradient(self):
        rng = np.random.default_rng(5)
        tasks, state = tie_free_state(rng)
        hot = RelaxState(state.centers, state.logits * 2.0)
        g1 = relax_gradient(state, tasks, 0.5, temperature=1.0)
        g2 = relax_gradient(hot, tasks, 0.5, temperature=2.0)
        np.testing.assert_allclose(g2.logits, g1.logits / 2.0, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(g2.centers, g1.centers)

    def test_shape_mismatch(self):
        with self.assertRaises(ValidationError):
            RelaxState(np.zeros((2, 1)), np.zeros((3, 3)))
        with self.assertRaises(ValidationError):
            relax_objective(RelaxState(np.zeros((2, 2)), np.zeros((5, 2))), velocity_tasks(), 1.0)


class CoveringLogitTest(unittest.TestCase):
    def test_weighted_distance_stays_inside(self):
        row = np.array([0.9, 50.0])
        logit = covering_logit(row, 0, 1.0, floor=0.0)
        self.assertGreater(logit, 0.0)
        weights = RelaxState([[0.0], [0.0]], [[logit, 0.0]]).assignment_weights()[0]
        self.assertLessEqual(float(weights @ row), 0.95)

    def test_floor_and_cap(self):
        self.assertEqual(covering_logit(np.array([0.9, 50.0]), 0, 1.0, floor=10.0), 10.0)
        # nothing farther away
        self.assertEqual(covering_logit(np.array([0.5, 0.2]), 0, 1.0, floor=10.0), 10.0)
        # no room left below epsilon
        self.assertEqual(covering_logit(np.array([1.0, 5.0]), 0, 1.0, floor=10.0), MAX_ASSIGNMENT_LOGIT)
        self.assertEqual(covering_logit(np.array([1.0, 5.0]), 0, 1.0, floor=10.0, temperature=0.5), MAX_ASSIGNMENT_LOGIT * 0.5)

    def test_temperature_scales_the_logit(self):
        row = np.array([0.9, 50.0])
        self.assertAlmostEqual(covering_logit(row, 0, 1.0, 0.0, temperature=2.0), 2.0 * covering_logit(row, 0, 1.0, 0.0))


class OptimizerConfigTest(unittest.TestCase):
    def test_validation(self):
        for kwargs in (
            dict(step_size=0.0),
            dict(max_iters=0),
            dict(tolerance=-1.0),
            dict(init="spectral"),
            dict(init="explicit"),
            dict(temperature=0.0),
            dict(trace_every=0),
        ):
            with self.assertRaises(ValidationError, msg=str(kwargs)):
                OptimizerConfig(**kwargs)

    def test_explicit_centers_must_match_k(self):
        cfg = OptimizerConfig(init="explicit", initial_centers=[[1.0]])
        with self.assertRaises(ValidationError):
            optimize_cover(velocity_tasks(), 1.0, 2, cfg)


class OptimizeCoverTest(unittest.TestCase):
    def test_planted_instances_are_solved(self):
        solved = 0
        for seed in range(50):
            K = 2 + seed % 2
            tasks, _ = planted_tasks(K, 8, 2, 1.0, seed)
            sol = optimize_cover(tasks, 1.0, K)
            if sol.soft_objective < 1e-9:
                # a vanishing proxy must mean a real cover
                self.assertEqual(sol.miss_rate, 0.0, "seed %d" % seed)
                solved += 1
        self.assertGreaterEqual(solved, 45)

    def test_line_search_is_monotone(self):
        rng = np.random.default_rng(9)
        tasks = TaskSet(rng.uniform(0, 10, size=(30, 2)))
        sol = optimize_cover(tasks, 1.0, 3, OptimizerConfig(max_iters=200))
        softs = [soft for _, soft, _ in sol.trace]
        self.assertTrue(all(b <= a for a, b in zip(softs, softs[1:])))
        self.assertEqual(sol.trace[0][0], 0)
        self.assertEqual(sol.trace[-1][0], sol.iterations)
        self.assertEqual(sol.covered_count, max(hard for _, _, hard in sol.trace))
        self.assertEqual(sol.algorithm, "grad")
        self.assertEqual(sol.K, 3)

    def test_solved_start_stays_solved(self):
        tasks = velocity_tasks()
        cfg = OptimizerConfig(init="explicit", initial_centers=[[11.0], [21.0], [100.0]])
        sol = optimize_cover(tasks, 1.5, 3, cfg)
        self.assertEqual(sol.iterations, 0)
        self.assertEqual(sol.soft_objective, 0.0)
        self.assertEqual(sol.covered_count, 5)

    def test_covering_start_on_the_boundary_does_not_move(self):
        # tasks 10, 12, 20 and 22 sit exactly epsilon from their centers
        tasks = velocity_tasks()
        start = [[11.0], [21.0], [100.0]]
        sol = optimize_cover(tasks, 1.0, 3, OptimizerConfig(init="explicit", initial_centers=start))
        self.assertEqual(sol.iterations, 0)
        self.assertEqual(sol.centers.tolist(), start)
        self.assertEqual(sol.covered_count, 5)
        self.assertAlmostEqual(sol.soft_objective, 0.0)
        self.assertEqual(sol.trace, [(0, sol.soft_objective, 5)])

    def test_result_never_covers_less_than_the_start(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            tasks = TaskSet(rng.uniform(0, 10, size=(15, 2)))
            start = gea(tasks, 1.0, 3).covered_count
            sol = optimize_cover(tasks, 1.0, 3, OptimizerConfig(max_iters=100))
            self.assertGreaterEqual(sol.covered_count, start)
            self.assertEqual(sol.covered_count, max(hard for _, _, hard in sol.trace))

    def test_embedding_sized_instance_terminates(self):
        rng = np.random.default_rng(50)
        tasks = TaskSet(rng.uniform(0, 1, size=(30, 50)))
        sol = optimize_cover(tasks, 0.3, 3, OptimizerConfig(max_iters=200))
        self.assertLessEqual(sol.iterations, 200)
        self.assertEqual(sol.centers.shape, (3, 50))
        self.assertEqual(sol.assignment, coverage_stats(tasks, sol.centers, 0.3).assignment)

    def test_greedy_start_is_padded_to_k(self):
        tasks = TaskSet([0.0, 0.5, 1.0])
        self.assertEqual(gea(tasks, 1.0, 3).K, 1)
        state = initial_state(tasks, 1.0, 3, OptimizerConfig())
        self.assertEqual(state.centers.shape, (3, 1))
        self.assertEqual(state.logits[:, 0].tolist(), [10.0, 10.0, 10.0])

    def test_random_start_is_seeded(self):
        rng = np.random.default_rng(2)
        tasks = TaskSet(rng.uniform(0, 5, size=(20, 2)))
        a = optimize_cover(tasks, 0.5, 2, OptimizerConfig(init="random", seed=4, max_iters=50))
        b = optimize_cover(tasks, 0.5, 2, OptimizerConfig(init="random", seed=4, max_iters=50))
        self.assertEqual(a.centers.tolist(), b.centers.tolist())
        self.assertEqual(a.assignment, b.assignment)

    def test_gia_start_falls_back_to_gea(self):
        rng = np.random.default_rng(0)
        tasks = TaskSet(rng.uniform(0, 5, size=(20, 3)))
        cfg = OptimizerConfig(init="gia", gia_node_budget=1, max_iters=5)
        with self.assertLogs("polcom.grad_cover", logging.WARNING) as cm:
            sol = optimize_cover(tasks, 0.5, 2, cfg)
        self.assertIn("falling back to gea", cm.output[0])
        self.assertEqual(sol.algorithm, "grad")

    def test_fixed_step_stall_is_flagged(self):
        # the center bounces between -1 and 1 around the only task
        tasks = TaskSet([0.0])
        cfg = OptimizerConfig(
            init="explicit", initial_centers=[[3.0]], step_size=2.0, line_search=False, tolerance=0.0, max_iters=60
        )
        with self.assertLogs("polcom.grad_cover", logging.WARNING):
            sol = optimize_cover(tasks, 0.5, 1, cfg)
        self.assertTrue(sol.stalled)
        self.assertEqual(sol.iterations, 60)
        self.assertEqual(sol.covered_count, 0)
        self.assertAlmostEqual(sol.soft_objective, 0.5)

    def test_divergence(self):
        tasks = TaskSet([0.0, 0.1])
        cfg = OptimizerConfig(init="explicit", initial_centers=[[5.0]], step_size=1e308, line_search=False)
        with np.errstate(over="ignore", invalid="ignore"):
            with self.assertRaises(DivergenceError) as cm:
                optimize_cover(tasks, 0.01, 1, cfg)
        self.assertEqual(cm.exception.iteration, 1)

    def test_result_is_scored_with_hard_coverage(self):
        rng = np.random.default_rng(17)
        tasks = TaskSet(rng.uniform(0, 10, size=(25, 2)))
        sol = optimize_cover(tasks, 1.0, 3, OptimizerConfig(max_iters=100))
        again = coverage_stats(tasks, sol.centers, 1.0)
        self.assertEqual(sol.assignment, again.assignment)
