"""
Epsilon parameter covers in the max norm.

A set of centers covers a task when some center lies within epsilon of it in
every coordinate. `gea` restricts centers to the tasks themselves; `gia`
builds per-dimension interval lists and intersects them to find, each round,
the box of side 2 epsilon holding the most uncovered tasks. The two oracles
enumerate candidate centers exhaustively and exist to check the greedy
algorithms on small instances.
"""
import itertools
import logging
import math
import typing

import numpy as np

from .casts import indices_from_mask, mask_from_indices, popcount
from .costs import (
    COVER_SLACK_ULPS,
    GIA_NODE_BUDGET,
    JSON_SCHEMA_VERSION,
    MAX_1_COVER_BUDGET,
    MAX_K_COVER_BUDGET,
)
from .CoverError import CapacityError, ValidationError
from .task_space import TaskParams, TaskSet, linf_distances


log = logging.getLogger(__name__)

ALGORITHM_TAGS = ("gea", "gia", "grad", "oracle", "kmeans", "explicit")


def cover_slack(tasks: TaskSet, epsilon: float) -> float:
    scale = float(np.max(np.abs(tasks.matrix))) + float(epsilon)
    return COVER_SLACK_ULPS * float(np.spacing(scale))


def _check_epsilon(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not math.isfinite(epsilon) or epsilon < 0:
        raise ValidationError("epsilon must be a finite non-negative number, got %r" % epsilon, epsilon)
    return epsilon


def _check_k(K: int) -> int:
    if not isinstance(K, (int, np.integer)) or isinstance(K, bool) or K < 1:
        raise ValidationError("K must be a positive integer, got %r" % (K,), K)
    return int(K)


class CoverSolution:
    """
    Centers chosen for a task set, together with the hard coverage they
    achieve: `assignment[i]` is the index of the nearest covering center of
    task i (lowest index on ties) or None when no center is within epsilon.
    """

    def __init__(
        self,
        centers,
        assignment: typing.Sequence[typing.Optional[int]],
        epsilon: float,
        algorithm: str,
        rounds: typing.Sequence[int] = (),
    ):
        self.centers = np.array(centers, dtype=np.float64)
        self.centers.setflags(write=False)
        self.assignment = tuple(None if a is None else int(a) for a in assignment)
        self.epsilon = float(epsilon)
        self.algorithm = algorithm
        self.covered_count = sum(1 for a in self.assignment if a is not None)
        self.miss_rate = 1.0 - self.covered_count / len(self.assignment)
        # per-round count of newly covered tasks for the greedy algorithms
        self.rounds = tuple(int(_) for _ in rounds)
        self.soft_objective: typing.Optional[float] = None
        self.iterations: typing.Optional[int] = None
        self.trace: typing.List[typing.Tuple[int, float, int]] = []
        self.stalled = False

    @property
    def n(self) -> int:
        return len(self.assignment)

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    @property
    def center_params(self) -> typing.List[TaskParams]:
        return [TaskParams(c) for c in self.centers]

    def covered_mask(self) -> np.ndarray:
        return np.array([a is not None for a in self.assignment], dtype=bool)

    def clusters(self) -> typing.List[typing.List[int]]:
        r: typing.List[typing.List[int]] = [[] for _ in range(self.K)]
        for i, a in enumerate(self.assignment):
            if a is not None:
                r[a].append(i)
        return r

    def summary(self) -> str:
        return "covered %d/%d (δ̂=%.4f)" % (self.covered_count, self.n, self.miss_rate)

    def to_dict(self) -> dict:
        d = dict(
            schema_version=JSON_SCHEMA_VERSION,
            epsilon=self.epsilon,
            algorithm=self.algorithm,
            centers=self.centers.tolist(),
            assignment=list(self.assignment),
            covered_count=self.covered_count,
            miss_rate=self.miss_rate,
        )
        if self.soft_objective is not None:
            d["soft_objective"] = self.soft_objective
            d["iterations"] = self.iterations
        return d

    @classmethod
    def from_dict(class_, doc: dict) -> "CoverSolution":
        try:
            centers = np.array(doc["centers"], dtype=np.float64)
            r = class_(centers, doc["assignment"], doc["epsilon"], doc["algorithm"])
        except (KeyError, TypeError, ValueError) as ex:
            raise ValidationError("malformed cover document: %s" % ex, doc)
        if r.covered_count != doc.get("covered_count", r.covered_count):
            raise ValidationError("covered_count disagrees with assignment", doc)
        r.soft_objective = doc.get("soft_objective")
        r.iterations = doc.get("iterations")
        return r

    def __repr__(self):
        return "%s(%s, K=%d, %s)" % (self.__class__.__name__, self.algorithm, self.K, self.summary())


def coverage_stats(tasks: TaskSet, centers, epsilon: float, algorithm: str = "explicit", rounds=()) -> CoverSolution:
    epsilon = _check_epsilon(epsilon)
    if isinstance(centers, (list, tuple)) and centers and isinstance(centers[0], TaskParams):
        centers = [c.theta for c in centers]
    centers = np.array(centers, dtype=np.float64).reshape(-1, tasks.d)
    if centers.shape[0] == 0:
        return CoverSolution(centers, [None] * tasks.n, epsilon, algorithm, rounds)
    dist = linf_distances(tasks.matrix, centers)
    covered = dist <= epsilon + cover_slack(tasks, epsilon)
    masked = np.where(covered, dist, np.inf)
    nearest = np.argmin(masked, axis=1)
    assignment = [int(k) if covered[i, k] else None for i, k in enumerate(nearest)]
    return CoverSolution(centers, assignment, epsilon, algorithm, rounds)


def gea(tasks: TaskSet, epsilon: float, K: int) -> CoverSolution:
    """
    Greedy elimination: K rounds, each adding the task that covers the most
    still-uncovered tasks (lowest index on ties).
    """
    epsilon = _check_epsilon(epsilon)
    K = _check_k(K)
    dist = linf_distances(tasks.matrix, tasks.matrix)
    reach = dist <= epsilon + cover_slack(tasks, epsilon)
    uncovered = np.ones(tasks.n, dtype=bool)
    chosen, rounds = [], []
    for k in range(K):
        if not uncovered.any():
            break
        gains = reach[:, uncovered].sum(axis=1)
        best = int(np.argmax(gains))
        chosen.append(best)
        rounds.append(int(gains[best]))
        uncovered &= ~reach[best]
        log.debug("gea round %d picks task %d covering %d new tasks", k, best, gains[best])
    return coverage_stats(tasks, tasks.matrix[chosen], epsilon, "gea", rounds)


class DimensionLists:
    """
    For every dimension s, the maximal groups of tasks whose s-th coordinates
    fit in one interval of width 2 epsilon. Each group is a tuple of task
    indices in ascending coordinate order.
    """

    def __init__(self, epsilon: float, lists: typing.Sequence[typing.Sequence[typing.Tuple[int, ...]]]):
        self.epsilon = epsilon
        self.lists = tuple(tuple(tuple(g) for g in per_dim) for per_dim in lists)

    @property
    def d(self) -> int:
        return len(self.lists)

    def __getitem__(self, dim: int):
        return self.lists[dim]

    def masks(self, dim: int) -> typing.List[int]:
        return [mask_from_indices(g) for g in self.lists[dim]]


def build_dimension_lists(
    tasks: TaskSet, epsilon: float, dim: int, active: typing.Optional[typing.Sequence[int]] = None
) -> typing.List[typing.Tuple[int, ...]]:
    """
    Scan the sorted coordinates x_1 <= ... <= x_n of dimension `dim`; the
    list of x_i holds every x_j, j <= i, with x_i <= x_j + 2 epsilon. A list
    contained in its successor is dropped, which leaves exactly the maximal
    windows.
    """
    epsilon = _check_epsilon(epsilon)
    if not 0 <= dim < tasks.d:
        raise ValidationError("dimension %r out of range [0, %d)" % (dim, tasks.d), dim)
    idx = np.arange(tasks.n) if active is None else np.asarray(list(active), dtype=np.int64)
    if idx.size == 0:
        return []
    x = tasks.matrix[idx, dim]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    width = 2.0 * epsilon + cover_slack(tasks, epsilon)

    lows = []
    lo = 0
    for i in range(xs.size):
        while xs[i] - xs[lo] > width:
            lo += 1
        lows.append(lo)

    r = []
    for i, lo in enumerate(lows):
        if i + 1 < len(lows) and lows[i + 1] == lo:
            # [lo, i] is a subset of [lo, i + 1]
            continue
        r.append(tuple(int(idx[order[j]]) for j in range(lo, i + 1)))
    return r


def dimension_lists(tasks: TaskSet, epsilon: float, active=None) -> DimensionLists:
    return DimensionLists(epsilon, [build_dimension_lists(tasks, epsilon, s, active) for s in range(tasks.d)])


def best_intersection(
    per_dim_masks: typing.Sequence[typing.Sequence[int]], budget: int = GIA_NODE_BUDGET
) -> typing.Tuple[int, typing.Tuple[int, ...], int]:
    """
    Pick one mask per dimension maximizing the size of their intersection.

    Depth-first over dimensions with an explicit stack; a partial choice is
    abandoned once its running intersection is no larger than the best found,
    and masks disjoint from the running intersection are skipped. Children
    are pushed in reverse so the lexicographically first maximizer wins.

    Returns (intersection mask, chosen list indices, nodes visited).
    """
    d = len(per_dim_masks)
    best_mask, best_size, best_choice = 0, 0, ()
    nodes = 0
    stack: typing.List[typing.Tuple[int, int, typing.Tuple[int, ...]]] = []
    for j in range(len(per_dim_masks[0]) - 1, -1, -1):
        stack.append((1, per_dim_masks[0][j], (j,)))

    while stack:
        depth, running, choice = stack.pop()
        nodes += 1
        if nodes > budget:
            raise CapacityError("greedy intersection search exceeded its node budget; use grad_cover instead", nodes, budget)
        size = popcount(running)
        if size <= best_size:
            continue
        if depth == d:
            best_mask, best_size, best_choice = running, size, choice
            continue
        masks = per_dim_masks[depth]
        for j in range(len(masks) - 1, -1, -1):
            m = running & masks[j]
            if m:
                stack.append((depth + 1, m, choice + (j,)))
    return best_mask, best_choice, nodes


def group_center(tasks: TaskSet, indices: typing.Sequence[int]) -> np.ndarray:
    pts = tasks.matrix[list(indices)]
    return (pts.min(axis=0) + pts.max(axis=0)) / 2.0


def gia(tasks: TaskSet, epsilon: float, K: int, node_budget: int = GIA_NODE_BUDGET) -> CoverSolution:
    """
    Greedy intersection: each of K rounds solves max-1-cover exactly on the
    tasks still uncovered, places the center at the per-dimension midpoint of
    the covered group, and removes the group.
    """
    epsilon = _check_epsilon(epsilon)
    K = _check_k(K)
    active = list(range(tasks.n))
    centers, rounds = [], []
    for k in range(K):
        if not active:
            break
        lists = dimension_lists(tasks, epsilon, active)
        per_dim_masks = [lists.masks(s) for s in range(tasks.d)]
        mask, _, nodes = best_intersection(per_dim_masks, node_budget)
        group = indices_from_mask(mask)
        centers.append(group_center(tasks, group))
        rounds.append(len(group))
        taken = set(group)
        active = [i for i in active if i not in taken]
        log.debug("gia round %d covers %d new tasks after %d search nodes", k, len(group), nodes)
    return coverage_stats(tasks, np.array(centers), epsilon, "gia", rounds)


def _candidate_masks(tasks: TaskSet, epsilon: float, budget: int):
    """
    Yield (mask, center) for every center on the grid whose coordinate s is
    x_{i,s} + epsilon for some task i. Any coverable group can be translated
    so that each lower face of its box touches a covered task, so the grid
    realizes every maximal coverable group.
    """
    slack = cover_slack(tasks, epsilon)
    per_dim = []
    for s in range(tasks.d):
        x = tasks.matrix[:, s]
        cands = np.unique(x + epsilon)
        masks = [mask_from_indices(np.nonzero(np.abs(x - c) <= epsilon + slack)[0]) for c in cands]
        per_dim.append((cands, masks))
    total = 1
    for cands, _ in per_dim:
        total *= len(cands)
    if total > budget:
        raise CapacityError("single-cover oracle grid is too large", total, budget)
    full = (1 << tasks.n) - 1
    for combo in itertools.product(*[range(len(c)) for c, _ in per_dim]):
        m = full
        for s, j in enumerate(combo):
            m &= per_dim[s][1][j]
            if not m:
                break
        yield m, combo, per_dim


def max_1_cover_oracle(
    tasks: TaskSet, epsilon: float, budget: int = MAX_1_COVER_BUDGET
) -> typing.Tuple[TaskParams, typing.FrozenSet[int]]:
    epsilon = _check_epsilon(epsilon)
    best_mask, best_size, best_center = 0, -1, None
    for m, combo, per_dim in _candidate_masks(tasks, epsilon, budget):
        size = popcount(m)
        if size > best_size:
            best_mask, best_size = m, size
            best_center = [per_dim[s][0][j] for s, j in enumerate(combo)]
    return TaskParams(best_center), frozenset(indices_from_mask(best_mask))


def maximal_groups(tasks: TaskSet, epsilon: float, budget: int = MAX_1_COVER_BUDGET) -> typing.List[int]:
    """
    Every inclusion-maximal group of tasks a single center can cover, as
    masks ordered by their sorted member indices.
    """
    seen = set(m for m, _, _ in _candidate_masks(tasks, epsilon, budget) if m)
    kept: typing.List[int] = []
    for m in sorted(seen, key=lambda v: -popcount(v)):
        if not any(m & k == m for k in kept):
            kept.append(m)
    kept.sort(key=indices_from_mask)
    return kept


def max_k_cover_oracle(
    tasks: TaskSet,
    epsilon: float,
    K: int,
    grid_budget: int = MAX_1_COVER_BUDGET,
    budget: int = MAX_K_COVER_BUDGET,
) -> CoverSolution:
    """
    Exact K-center cover: the returned solution's `miss_rate` is the optimal
    miss rate delta* over all K-tuples of centers.
    """
    epsilon = _check_epsilon(epsilon)
    K = _check_k(K)
    groups = maximal_groups(tasks, epsilon, grid_budget)
    full = (1 << tasks.n) - 1
    if K >= len(groups):
        chosen: typing.Tuple[int, ...] = tuple(groups)
    else:
        total = math.comb(len(groups), K)
        if total > budget:
            raise CapacityError("K-cover oracle has too many group combinations", total, budget)
        best_union, chosen = -1, ()
        for combo in itertools.combinations(groups, K):
            u = 0
            for m in combo:
                u |= m
            size = popcount(u)
            if size > best_union:
                best_union, chosen = size, combo
                if u == full:
                    break
    centers = np.array([group_center(tasks, indices_from_mask(m)) for m in chosen])
    return coverage_stats(tasks, centers, epsilon, "oracle", [popcount(m) for m in chosen])
