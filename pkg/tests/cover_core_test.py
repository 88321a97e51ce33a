import math
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from polcom.algorithms import CLUSTER_ALGORITHMS, AlgorithmDict, registered_algorithms
from polcom.casts import indices_from_mask, mask_from_indices
from polcom.cover_core import (
    CoverSolution,
    best_intersection,
    build_dimension_lists,
    coverage_stats,
    dimension_lists,
    gea,
    gia,
    max_1_cover_oracle,
    max_k_cover_oracle,
    maximal_groups,
)
from polcom.CoverError import CapacityError, ValidationError
from polcom.instances import complete_graph_tasks, hardness_tasks, velocity_tasks
from polcom.task_space import TaskSet


def random_instance(rng, n_max=12, d_max=2):
    n = int(rng.integers(1, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    tasks = TaskSet(rng.uniform(0.0, 10.0, size=(n, d)))
    return tasks, float(rng.uniform(0.2, 3.0))


class HardnessFixtureTest(unittest.TestCase):
    def setUp(self):
        self.tasks = hardness_tasks(1.0)

    def test_single_cover_is_two(self):
        center, members = max_1_cover_oracle(self.tasks, 1.0)
        self.assertEqual(len(members), 2)
        self.assertEqual(coverage_stats(self.tasks, [center], 1.0).covered_count, 2)

    def test_gia_first_round_is_exact(self):
        sol = gia(self.tasks, 1.0, 1)
        self.assertEqual(sol.rounds, (2,))
        self.assertEqual(sol.covered_count, 2)
        self.assertEqual(sol.summary(), "covered 2/5 (δ̂=0.6000)")

    def test_gea_first_round(self):
        # centers drawn from the tasks cover only themselves: every pair is
        # at least 1.5 epsilon apart
        sol = gea(self.tasks, 1.0, 1)
        self.assertEqual(sol.rounds, (1,))
        self.assertEqual(sol.summary(), "covered 1/5 (δ̂=0.8000)")

    def test_maximal_groups_are_the_edges(self):
        groups = [indices_from_mask(m) for m in maximal_groups(self.tasks, 1.0)]
        self.assertEqual(groups, [[0], [1], [2, 4], [3, 4]])

    def test_k_cover_oracle(self):
        sol = max_k_cover_oracle(self.tasks, 1.0, 2)
        self.assertEqual(sol.covered_count, 3)
        self.assertAlmostEqual(sol.miss_rate, 0.4)
        self.assertEqual(sol.centers.tolist(), [[0, 2.5, 2.5, 2.5, 2.5], [2.5, 2.5, 0.75, 2.0, 0.75]])
        self.assertEqual(sol.algorithm, "oracle")

    def test_scaled_fixture(self):
        tasks = hardness_tasks(0.25)
        self.assertEqual(gia(tasks, 0.25, 1).covered_count, 2)
        self.assertEqual(len(max_1_cover_oracle(tasks, 0.25)[1]), 2)


class CompleteGraphTest(unittest.TestCase):
    def test_one_center_covers_everything(self):
        tasks = complete_graph_tasks(5, 1.0)
        self.assertEqual(gia(tasks, 1.0, 1).covered_count, 5)
        self.assertEqual(len(max_1_cover_oracle(tasks, 1.0)[1]), 5)
        self.assertEqual(max_k_cover_oracle(tasks, 1.0, 1).miss_rate, 0.0)

    def test_gea_is_stuck_on_the_tasks(self):
        self.assertEqual(gea(complete_graph_tasks(5, 1.0), 1.0, 1).covered_count, 1)


class VelocityTest(unittest.TestCase):
    def test_gea_versus_gia(self):
        tasks = velocity_tasks()
        self.assertEqual(gea(tasks, 1.0, 2).covered_count, 2)
        sol = gia(tasks, 1.0, 2)
        self.assertEqual(sol.covered_count, 4)
        self.assertAlmostEqual(sol.miss_rate, 0.2)
        self.assertEqual(sorted(sol.centers[:, 0].tolist()), [11.0, 21.0])
        self.assertEqual(sol.clusters(), [[0, 1], [2, 3]])
        self.assertAlmostEqual(max_k_cover_oracle(tasks, 1.0, 2).miss_rate, 0.2)

    def test_more_centers_than_needed(self):
        tasks = velocity_tasks()
        sol = gia(tasks, 1.0, 10)
        self.assertEqual(sol.covered_count, 5)
        self.assertEqual(sol.K, 3)
        self.assertEqual(max_k_cover_oracle(tasks, 1.0, 5).miss_rate, 0.0)


class DimensionListTest(unittest.TestCase):
    def test_only_maximal_windows_are_kept(self):
        tasks = TaskSet([0.0, 1.0, 2.0, 5.0])
        self.assertEqual(build_dimension_lists(tasks, 0.5, 0), [(0, 1), (1, 2), (3,)])

    def test_two_clusters_on_a_line(self):
        tasks = TaskSet([0.0, 0.3, 0.55, 1.45, 1.8])
        self.assertEqual(build_dimension_lists(tasks, 0.35, 0), [(0, 1, 2), (3, 4)])

    def test_points_exactly_two_epsilon_apart(self):
        tasks = TaskSet([0.0, 1.0, 2.0, 3.0])
        self.assertEqual(build_dimension_lists(tasks, 0.5, 0), [(0, 1), (1, 2), (2, 3)])

    def test_active_subset(self):
        tasks = TaskSet([0.0, 1.0, 2.0, 5.0])
        self.assertEqual(build_dimension_lists(tasks, 0.5, 0, active=[0, 2, 3]), [(0,), (2,), (3,)])

    def test_lists_per_dimension(self):
        lists = dimension_lists(TaskSet([[0.0, 0.0], [1.0, 3.0]]), 0.5)
        self.assertEqual(lists.d, 2)
        self.assertEqual(lists[0], ((0, 1),))
        self.assertEqual(lists.masks(1), [mask_from_indices([0]), mask_from_indices([1])])

    def test_bad_dimension(self):
        with self.assertRaises(ValidationError):
            build_dimension_lists(TaskSet([0.0]), 1.0, 1)

    def test_node_budget(self):
        masks = [[0b011, 0b110], [0b101, 0b011], [0b111]]
        mask, choice, nodes = best_intersection(masks)
        self.assertEqual(indices_from_mask(mask), [0, 1])
        self.assertEqual(choice, (0, 1, 0))
        with self.assertRaises(CapacityError) as cm:
            best_intersection(masks, budget=1)
        self.assertEqual(cm.exception.budget, 1)
        self.assertGreater(cm.exception.nodes, 1)


class GreedyPropertiesTest(unittest.TestCase):
    def test_gia_round_matches_single_cover_oracle(self):
        rng = np.random.default_rng(20240601)
        for _ in range(200):
            tasks, eps = random_instance(rng)
            best = len(max_1_cover_oracle(tasks, eps)[1])
            sol = gia(tasks, eps, 1)
            self.assertEqual(sol.rounds[0], best)
            self.assertEqual(sol.covered_count, best)

    def test_gia_reaches_greedy_fraction_of_optimum(self):
        rng = np.random.default_rng(7)
        for idx in range(100):
            tasks, eps = random_instance(rng, n_max=10)
            K = 2 + idx % 2
            optimum = max_k_cover_oracle(tasks, eps, K).covered_count
            self.assertGreaterEqual(gia(tasks, eps, K).covered_count, (1 - 1 / math.e) * optimum)

    def test_oracle_dominates_greedy(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            tasks, eps = random_instance(rng, n_max=9)
            optimum = max_k_cover_oracle(tasks, eps, 2).covered_count
            self.assertLessEqual(gia(tasks, eps, 2).covered_count, optimum)
            self.assertLessEqual(gea(tasks, eps, 2).covered_count, optimum)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0, 20, allow_nan=False), min_size=1, max_size=10), st.floats(0.1, 3), st.integers(1, 4))
    def test_coverage_grows_with_k(self, xs, eps, K):
        tasks = TaskSet(xs)
        for algorithm in (gea, gia):
            self.assertLessEqual(algorithm(tasks, eps, K).covered_count, algorithm(tasks, eps, K + 1).covered_count)

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.floats(0, 20, allow_nan=False), min_size=1, max_size=8),
        st.floats(0.1, 3),
        st.floats(0, 2),
    )
    def test_coverage_grows_with_epsilon(self, xs, eps, extra):
        tasks = TaskSet(xs)
        wider = eps + extra
        # a single greedy round is exact over its candidates
        for algorithm in (gea, gia):
            self.assertLessEqual(algorithm(tasks, eps, 1).covered_count, algorithm(tasks, wider, 1).covered_count)
        self.assertLessEqual(max_k_cover_oracle(tasks, eps, 2).covered_count, max_k_cover_oracle(tasks, wider, 2).covered_count)

    def test_later_greedy_rounds_can_lose_coverage_as_epsilon_grows(self):
        tasks = TaskSet([4.6, 2.5, 7.2, 1.8, 8.9, 9.0, 7.7])
        self.assertEqual(gia(tasks, 1.8, 2).covered_count, 7)
        # the wider first window grabs 4.6 and strands 9.0
        self.assertEqual(gia(tasks, 2.16, 2).covered_count, 6)
        self.assertEqual(max_k_cover_oracle(tasks, 2.16, 2).covered_count, 7)

    def test_gia_round_dominates_gea_round(self):
        rng = np.random.default_rng(404)
        for _ in range(200):
            tasks, eps = random_instance(rng, d_max=3)
            self.assertGreaterEqual(gia(tasks, eps, 1).rounds[0], gea(tasks, eps, 1).rounds[0])

    def test_zero_epsilon_covers_duplicates(self):
        tasks = TaskSet([1.0, 1.0, 2.0])
        self.assertEqual(gea(tasks, 0.0, 1).covered_count, 2)
        self.assertEqual(gia(tasks, 0.0, 1).covered_count, 2)


class CoverSolutionTest(unittest.TestCase):
    def test_nearest_center_lowest_index_on_ties(self):
        tasks = TaskSet([0.0, 1.0, 5.0])
        sol = coverage_stats(tasks, [[0.5], [0.5], [0.0]], 1.0)
        self.assertEqual(sol.assignment, (2, 0, None))
        self.assertEqual(sol.clusters(), [[1], [], [0]])
        self.assertEqual(sol.covered_mask().tolist(), [True, True, False])

    def test_boundary_at_large_magnitude(self):
        tasks = TaskSet([1e6])
        self.assertEqual(coverage_stats(tasks, [[1e6 + 1.0]], 1.0).covered_count, 1)
        self.assertEqual(coverage_stats(tasks, [[1e6 + 1.0 + 5e-7]], 1.0).covered_count, 0)

    def test_points_just_over_two_epsilon_apart_need_two_centers(self):
        for base in (0.0, 1e6):
            apart = TaskSet([base, base + 2.0 + 5e-7])
            self.assertEqual(gia(apart, 1.0, 1).covered_count, 1)
            self.assertEqual(len(max_1_cover_oracle(apart, 1.0)[1]), 1)
            touching = TaskSet([base, base + 2.0])
            self.assertEqual(gia(touching, 1.0, 1).covered_count, 2)

    def test_no_centers(self):
        sol = coverage_stats(TaskSet([0.0, 1.0]), np.zeros((0, 1)), 1.0)
        self.assertEqual(sol.covered_count, 0)
        self.assertEqual(sol.miss_rate, 1.0)

    def test_dict_round_trip(self):
        sol = gia(velocity_tasks(), 1.0, 2)
        doc = sol.to_dict()
        self.assertEqual(doc["covered_count"], 4)
        again = CoverSolution.from_dict(doc)
        self.assertEqual(again.assignment, sol.assignment)
        self.assertEqual(again.centers.tolist(), sol.centers.tolist())
        doc["covered_count"] = 5
        with self.assertRaises(ValidationError):
            CoverSolution.from_dict(doc)

    def test_bad_arguments(self):
        tasks = velocity_tasks()
        for K in (0, -1, 1.5, True):
            with self.assertRaises(ValidationError):
                gea(tasks, 1.0, K)
        for eps in (-1.0, float("inf"), float("nan")):
            with self.assertRaises(ValidationError):
                gia(tasks, eps, 1)

    def test_oracle_budget(self):
        rng = np.random.default_rng(3)
        tasks = TaskSet(rng.uniform(0, 10, size=(12, 2)))
        with self.assertRaises(CapacityError):
            max_1_cover_oracle(tasks, 1.0, budget=10)
        with self.assertRaises(CapacityError):
            max_k_cover_oracle(hardness_tasks(), 1.0, 2, budget=1)


class AlgorithmDictTest(unittest.TestCase):
    def test_dispatch_by_name(self):
        tasks = velocity_tasks()
        self.assertEqual(sorted(CLUSTER_ALGORITHMS), ["gea", "gia", "grad", "kmeans"])
        self.assertEqual(CLUSTER_ALGORITHMS("gia", tasks, 1.0, 2).covered_count, 4)
        self.assertEqual(CLUSTER_ALGORITHMS("gea", tasks, 1.0, 2, seed=3).algorithm, "gea")

    def test_unknown_name(self):
        with self.assertRaises(ValidationError):
            CLUSTER_ALGORITHMS("lloyd", velocity_tasks(), 1.0, 2)

    def test_registration_skips_missing_functions(self):
        f = lambda tasks, epsilon, K: None
        self.assertEqual(registered_algorithms(["a", "b", "c"], dict(cover_a=f, cover_c=3)), dict(a=f))

    def test_custom_handler(self):
        d = AlgorithmDict({}, unknown_algorithm_handler=lambda name, *args, **kw: name.upper())
        self.assertEqual(d("x", None, 1.0, 1), "X")
        self.assertEqual(len(d), 0)
