"""
Differentiable coverage proxy and its subgradient descent.

The proxy replaces the hard count of covered tasks with

    sum_i ReLU( sum_k softmax(w_i)_k * ||theta_k - theta_i||_inf - epsilon )

over centers theta_k and assignment logits w. The optimizer returns the
iterate with the highest hard coverage and scores it with the hard
criterion; the soft objective is a search device only.
"""
import dataclasses
import logging
import math
import typing

import numpy as np
from scipy.special import softmax

from .costs import (
    DEFAULT_ASSIGNMENT_LOGIT,
    DEFAULT_MAX_ITERS,
    DEFAULT_STEP_FRACTION,
    DEFAULT_TOLERANCE,
    GIA_NODE_BUDGET,
    LINE_SEARCH_HALVINGS,
    MAX_ASSIGNMENT_LOGIT,
    STALL_WINDOW,
)
from .cover_core import CoverSolution, _check_epsilon, _check_k, coverage_stats, gea, gia
from .CoverError import CapacityError, DivergenceError, ValidationError
from .task_space import TaskSet, linf_distances


log = logging.getLogger(__name__)

INITS = ("gea", "gia", "random", "explicit")


class RelaxState:
    """
    Decision variables of the proxy: K x d `centers`, n x K `logits`, and the
    objective they were last evaluated at.
    """

    def __init__(self, centers, logits, objective: float = math.nan):
        self.centers = np.array(centers, dtype=np.float64)
        self.logits = np.array(logits, dtype=np.float64)
        if self.centers.ndim != 2 or self.logits.ndim != 2 or self.logits.shape[1] != self.centers.shape[0]:
            raise ValidationError(
                "centers %s and logits %s do not agree on K" % (self.centers.shape, self.logits.shape), self
            )
        self.objective = objective

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    def assignment_weights(self, temperature: float = 1.0) -> np.ndarray:
        return softmax(self.logits / temperature, axis=1)

    def copy(self) -> "RelaxState":
        return RelaxState(self.centers.copy(), self.logits.copy(), self.objective)


class RelaxGradient(typing.NamedTuple):
    centers: np.ndarray
    logits: np.ndarray


@dataclasses.dataclass(frozen=True)
class OptimizerConfig:
    step_size: typing.Optional[float] = None
    max_iters: int = DEFAULT_MAX_ITERS
    tolerance: float = DEFAULT_TOLERANCE
    seed: int = 0
    init: str = "gea"
    initial_centers: typing.Optional[typing.Sequence[typing.Sequence[float]]] = None
    temperature: float = 1.0
    line_search: bool = True
    assignment_logit: float = DEFAULT_ASSIGNMENT_LOGIT
    trace_every: int = 1
    gia_node_budget: int = GIA_NODE_BUDGET

    def __post_init__(self):
        if self.step_size is not None and not self.step_size > 0:
            raise ValidationError("step_size must be positive, got %r" % self.step_size, self)
        if self.max_iters < 1:
            raise ValidationError("max_iters must be at least 1, got %r" % self.max_iters, self)
        if not self.tolerance >= 0:
            raise ValidationError("tolerance must be non-negative, got %r" % self.tolerance, self)
        if self.init not in INITS:
            raise ValidationError("init must be one of %s, got %r" % (", ".join(INITS), self.init), self)
        if self.init == "explicit" and self.initial_centers is None:
            raise ValidationError("init=explicit needs initial_centers", self)
        if not self.temperature > 0:
            raise ValidationError("temperature must be positive, got %r" % self.temperature, self)
        if self.trace_every < 1:
            raise ValidationError("trace_every must be at least 1, got %r" % self.trace_every, self)


def _hinge_terms(state: RelaxState, tasks: TaskSet, epsilon: float, temperature: float):
    dist = linf_distances(tasks.matrix, state.centers)
    weights = state.assignment_weights(temperature)
    z = np.sum(weights * dist, axis=1) - epsilon
    return dist, weights, z


def relax_objective(state: RelaxState, tasks: TaskSet, epsilon: float, temperature: float = 1.0) -> float:
    if state.centers.shape[1] != tasks.d or state.logits.shape[0] != tasks.n:
        raise ValidationError("relaxation state does not match the task set", state)
    _, _, z = _hinge_terms(state, tasks, epsilon, temperature)
    return float(np.sum(np.maximum(z, 0.0)))


def relax_gradient(state: RelaxState, tasks: TaskSet, epsilon: float, temperature: float = 1.0) -> RelaxGradient:
    """
    A subgradient of the proxy. The max-norm term differentiates through its
    largest-magnitude coordinate (lowest index on ties); a hinge contributes
    only while its argument is strictly positive.
    """
    if state.centers.shape[1] != tasks.d or state.logits.shape[0] != tasks.n:
        raise ValidationError("relaxation state does not match the task set", state)
    dist, weights, z = _hinge_terms(state, tasks, epsilon, temperature)
    active = z > 0

    grad_logits = np.zeros_like(state.logits)
    grad_centers = np.zeros_like(state.centers)
    if not active.any():
        return RelaxGradient(grad_centers, grad_logits)

    w = weights[active]
    dd = dist[active]
    mean_dist = np.sum(w * dd, axis=1, keepdims=True)
    grad_logits[active] = w * (dd - mean_dist) / temperature

    # diff[i, k, s] = theta_k,s - theta_i,s over active tasks
    diff = state.centers[None, :, :] - tasks.matrix[active][:, None, :]
    top = np.argmax(np.abs(diff), axis=2)
    picked = np.take_along_axis(diff, top[:, :, None], axis=2)[:, :, 0]
    contrib = w * np.sign(picked)
    K = state.K
    for k in range(K):
        np.add.at(grad_centers[k], top[:, k], contrib[:, k])
    return RelaxGradient(grad_centers, grad_logits)


def data_diameter(tasks: TaskSet) -> float:
    return float(np.max(tasks.matrix.max(axis=0) - tasks.matrix.min(axis=0)))


def _initial_centers(tasks: TaskSet, epsilon: float, K: int, cfg: OptimizerConfig) -> np.ndarray:
    init = cfg.init
    if init == "gia":
        try:
            return gia(tasks, epsilon, K, node_budget=cfg.gia_node_budget).centers
        except CapacityError as ex:
            log.warning("gia initialization failed (%s); falling back to gea", ex)
            init = "gea"
    if init == "gea":
        return gea(tasks, epsilon, K).centers
    if init == "random":
        rng = np.random.default_rng(cfg.seed)
        lo, hi = tasks.matrix.min(axis=0), tasks.matrix.max(axis=0)
        return rng.uniform(lo, hi, size=(K, tasks.d))
    centers = np.array(cfg.initial_centers, dtype=np.float64).reshape(-1, tasks.d)
    if centers.shape[0] != K:
        raise ValidationError("initial_centers has %d rows, expected K=%d" % (centers.shape[0], K), centers)
    return centers


def _pad_centers(tasks: TaskSet, centers: np.ndarray, epsilon: float, K: int) -> np.ndarray:
    # greedy inits stop early once everything is covered; fill up to K with
    # uncovered tasks first, then copies of the first center
    if centers.shape[0] >= K:
        return centers[:K]
    rows = list(centers)
    sol = coverage_stats(tasks, centers, epsilon)
    for i, a in enumerate(sol.assignment):
        if len(rows) >= K:
            break
        if a is None:
            rows.append(tasks.matrix[i])
    while len(rows) < K:
        rows.append(rows[0] if rows else tasks.matrix[0])
    return np.array(rows)


def covering_logit(dist_row: np.ndarray, a: int, epsilon: float, floor: float, temperature: float = 1.0) -> float:
    """
    Logit for center `a` (others at 0) that keeps the weighted distance of a
    task covered by `a` at most halfway between its distance to `a` and
    epsilon. Never below `floor`.
    """
    excess = float(np.sum(np.maximum(dist_row - dist_row[a], 0.0)))
    room = epsilon - float(dist_row[a])
    if excess == 0.0:
        return floor
    if room <= 0.0:
        return MAX_ASSIGNMENT_LOGIT * temperature
    # the other centers share weight below 1 / exp(logit / temperature)
    needed = math.log(max(2.0 * excess / room, 1.0))
    return max(floor, min(needed, MAX_ASSIGNMENT_LOGIT) * temperature)


def initial_state(tasks: TaskSet, epsilon: float, K: int, cfg: OptimizerConfig) -> RelaxState:
    centers = _pad_centers(tasks, _initial_centers(tasks, epsilon, K, cfg), epsilon, K)
    logits = np.zeros((tasks.n, K))
    if cfg.init != "random":
        sol = coverage_stats(tasks, centers, epsilon)
        dist = linf_distances(tasks.matrix, centers)
        for i, a in enumerate(sol.assignment):
            if a is not None:
                logits[i, a] = covering_logit(dist[i], a, epsilon, cfg.assignment_logit, cfg.temperature)
    state = RelaxState(centers, logits)
    state.objective = relax_objective(state, tasks, epsilon, cfg.temperature)
    return state


def optimize_cover(tasks: TaskSet, epsilon: float, K: int, cfg: typing.Optional[OptimizerConfig] = None) -> CoverSolution:
    """
    Subgradient descent on the proxy from a greedy (default), random or
    explicit start. With `line_search` each step is halved until the
    objective does not increase, so accepted iterates are monotone; with a
    fixed step a run whose objective fails to drop over a window of
    STALL_WINDOW iterations is flagged as stalled.

    A start that already covers every task is returned without moving.
    Otherwise the result is the accepted iterate covering the most tasks,
    the latest one on ties, so it is never worse than the start.
    """
    epsilon = _check_epsilon(epsilon)
    K = _check_k(K)
    cfg = cfg or OptimizerConfig()
    diameter = data_diameter(tasks)
    step = cfg.step_size if cfg.step_size is not None else DEFAULT_STEP_FRACTION * max(diameter, epsilon, 1e-12)
    # logits are dimensionless; scale their step so a distance-sized gradient
    # moves them by O(1)
    logit_step = step / max(diameter, epsilon, 1e-12) ** 2

    state = initial_state(tasks, epsilon, K, cfg)
    trace: typing.List[typing.Tuple[int, float, int]] = []
    history = [state.objective]
    stalled = False

    def hard_count(st: RelaxState) -> int:
        return coverage_stats(tasks, st.centers, epsilon).covered_count

    best_hard = hard_count(state)
    best = state
    trace.append((0, state.objective, best_hard))
    it = 0
    # a start that already covers every task is returned unmoved
    while it < cfg.max_iters and state.objective > 0 and best_hard < tasks.n:
        g = relax_gradient(state, tasks, epsilon, cfg.temperature)
        if not (g.centers.any() or g.logits.any()):
            break
        scale = 1.0
        for _ in range(LINE_SEARCH_HALVINGS if cfg.line_search else 1):
            candidate = RelaxState(state.centers - scale * step * g.centers, state.logits - scale * logit_step * g.logits)
            candidate.objective = relax_objective(candidate, tasks, epsilon, cfg.temperature)
            if not math.isfinite(candidate.objective):
                if cfg.line_search:
                    scale /= 2.0
                    continue
                raise DivergenceError("soft objective became non-finite", it + 1)
            if not cfg.line_search or candidate.objective <= state.objective:
                break
            scale /= 2.0
        else:
            # no halving produced a non-increasing step
            log.debug("line search exhausted at iteration %d", it)
            break
        it += 1
        change = abs(state.objective - candidate.objective)
        state = candidate
        history.append(state.objective)
        hard = hard_count(state)
        if hard >= best_hard:
            best_hard, best = hard, state
        if it % cfg.trace_every == 0:
            trace.append((it, state.objective, hard))
        if not cfg.line_search and it >= STALL_WINDOW and state.objective > 0:
            if not state.objective < history[it - STALL_WINDOW] and not stalled:
                stalled = True
                log.warning("soft objective did not decrease over %d iterations (iteration %d)", STALL_WINDOW, it)
        if change < cfg.tolerance:
            break

    if not math.isfinite(state.objective):
        raise DivergenceError("soft objective became non-finite", it)
    if trace[-1][0] != it:
        trace.append((it, state.objective, hard_count(state)))
    if best is not state:
        log.info("keeping an earlier iterate covering %d tasks over the final one", best_hard)
    sol = coverage_stats(tasks, best.centers, epsilon, "grad")
    sol.soft_objective = best.objective
    sol.iterations = it
    sol.trace = trace
    sol.stalled = stalled
    log.info("grad cover: soft objective %.6g after %d iterations, %s", best.objective, it, sol.summary())
    return sol
