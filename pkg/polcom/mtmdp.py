"""
Tabular finite-horizon MDPs that share dynamics across tasks.

A task only changes the reward, r_theta(s, a) = theta . phi(s, a), so every
task of one environment sees the same transitions, horizon, discount and
initial distribution. Planning and evaluation are exact; `rollout_batch`
is the one stochastic primitive.
"""
import itertools
import logging
import typing

import numpy as np

from .costs import JSON_SCHEMA_VERSION, POLICY_ENUMERATION_BUDGET, PROBABILITY_ATOL
from .CoverError import CapacityError, ParseError, ValidationError
from .serialize import read_json, write_json
from .task_space import TaskParams


log = logging.getLogger(__name__)

SeedLike = typing.Union[None, int, np.random.SeedSequence, np.random.Generator]


def _check_distribution(p: np.ndarray, what: str) -> None:
    if np.any(p < 0):
        raise ValidationError("%s has negative probabilities" % what, p)
    bad = np.abs(p.sum(axis=-1) - 1.0) > PROBABILITY_ATOL
    if np.any(bad):
        raise ValidationError("%s does not sum to 1 (within %g)" % (what, PROBABILITY_ATOL), p)


class DynamicEnvironment:
    """
    States, actions, horizon h, discount gamma and initial distribution rho,
    with `transitions[s, a]` the next-state distribution and
    `features[s, a]` the reward features in [0, 1]^d.

    Episodes run over t = 0..h, so they collect h + 1 rewards.
    """

    def __init__(self, transitions, features, initial_dist, horizon: int, discount: float):
        self.transitions = np.array(transitions, dtype=np.float64)
        self.features = np.array(features, dtype=np.float64)
        self.initial_dist = np.array(initial_dist, dtype=np.float64)
        if self.transitions.ndim != 3 or self.transitions.shape[0] != self.transitions.shape[2]:
            raise ValidationError("transitions must have shape (S, A, S), got %s" % (self.transitions.shape,), transitions)
        S, A, _ = self.transitions.shape
        if S < 1 or A < 1:
            raise ValidationError("an environment needs at least one state and one action", transitions)
        if self.features.ndim != 3 or self.features.shape[:2] != (S, A) or self.features.shape[2] < 1:
            raise ValidationError("features must have shape (%d, %d, d), got %s" % (S, A, self.features.shape), features)
        if self.initial_dist.shape != (S,):
            raise ValidationError("initial_dist must have shape (%d,), got %s" % (S, self.initial_dist.shape), initial_dist)
        if not (np.all(np.isfinite(self.features)) and np.all(self.features >= 0) and np.all(self.features <= 1)):
            raise ValidationError("feature entries must lie in [0, 1]", features)
        _check_distribution(self.transitions, "a transition row")
        _check_distribution(self.initial_dist, "initial_dist")
        if isinstance(horizon, bool) or int(horizon) != horizon or horizon < 0:
            raise ValidationError("horizon must be a non-negative integer, got %r" % (horizon,), horizon)
        discount = float(discount)
        if not 0.0 < discount <= 1.0:
            raise ValidationError("discount must lie in (0, 1], got %r" % discount, discount)
        self.horizon = int(horizon)
        self.discount = discount
        for a in (self.transitions, self.features, self.initial_dist):
            a.setflags(write=False)

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def d(self) -> int:
        return self.features.shape[2]

    def discounts(self) -> np.ndarray:
        return self.discount ** np.arange(self.horizon + 1)

    def to_dict(self) -> dict:
        return dict(
            schema_version=JSON_SCHEMA_VERSION,
            num_states=self.num_states,
            num_actions=self.num_actions,
            horizon=self.horizon,
            discount=self.discount,
            initial_dist=self.initial_dist.tolist(),
            transitions=self.transitions.tolist(),
            features=self.features.tolist(),
        )

    @classmethod
    def from_dict(class_, doc) -> "DynamicEnvironment":
        if not isinstance(doc, dict):
            raise ValidationError("an environment document must be a JSON object", doc)
        for field in ("transitions", "features", "initial_dist", "horizon", "discount"):
            if field not in doc:
                raise ValidationError("environment: missing field '%s'" % field, doc)
        try:
            env = class_(doc["transitions"], doc["features"], doc["initial_dist"], doc["horizon"], doc["discount"])
        except (TypeError, ValueError) as ex:
            if isinstance(ex, ValidationError):
                raise
            raise ValidationError("environment: %s" % ex, doc)
        for field, actual in (("num_states", env.num_states), ("num_actions", env.num_actions)):
            if field in doc and doc[field] != actual:
                raise ValidationError("environment: %s is %r but the arrays say %d" % (field, doc[field], actual), doc)
        return env

    def __repr__(self):
        return "%s(S=%d, A=%d, d=%d, h=%d, gamma=%g)" % (
            self.__class__.__name__, self.num_states, self.num_actions, self.d, self.horizon, self.discount
        )


def load_environment(path) -> DynamicEnvironment:
    doc = read_json(path)
    try:
        return DynamicEnvironment.from_dict(doc)
    except ValidationError as ex:
        raise ParseError(str(ex), path=path)


def save_environment(env: DynamicEnvironment, path) -> None:
    write_json(env.to_dict(), path)


class MdpTask:
    __slots__ = ["theta"]

    def __init__(self, theta):
        self.theta = theta if isinstance(theta, TaskParams) else TaskParams(theta)

    def rewards(self, env: DynamicEnvironment) -> np.ndarray:
        if env.d != self.theta.d:
            raise ValidationError("task has dimension %d, environment features %d" % (self.theta.d, env.d), self)
        return env.features @ self.theta.theta

    def __repr__(self):
        return "%s(%r)" % (self.__class__.__name__, self.theta)


def as_task(task) -> MdpTask:
    return task if isinstance(task, MdpTask) else MdpTask(task)


class Policy:
    """
    A deterministic time-indexed policy: `actions[t, s]` for t = 0..h, with
    the value table `values[t, s]` of the task it was evaluated on.
    """

    def __init__(self, actions, values, value: float):
        self.actions = np.array(actions, dtype=np.int64)
        self.values = np.array(values, dtype=np.float64)
        self.value = float(value)
        if self.actions.ndim != 2 or self.actions.shape != self.values.shape:
            raise ValidationError("actions and values must share a (h+1, S) shape", self)
        self.actions.setflags(write=False)
        self.values.setflags(write=False)

    @property
    def horizon(self) -> int:
        return self.actions.shape[0] - 1

    @classmethod
    def from_actions(class_, env: DynamicEnvironment, task, actions) -> "Policy":
        """
        Evaluate an arbitrary action table by backward Bellman recursion.
        """
        actions = np.array(actions, dtype=np.int64)
        _check_actions(env, actions)
        r = as_task(task).rewards(env)
        S = env.num_states
        values = np.zeros((env.horizon + 1, S))
        following = np.zeros(S)
        states = np.arange(S)
        for t in range(env.horizon, -1, -1):
            a = actions[t]
            values[t] = r[states, a] + env.discount * (env.transitions[states, a] @ following)
            following = values[t]
        return class_(actions, values, float(env.initial_dist @ values[0]))

    def __repr__(self):
        return "%s(h=%d, S=%d, value=%g)" % (self.__class__.__name__, self.horizon, self.actions.shape[1], self.value)


def _check_actions(env: DynamicEnvironment, actions: np.ndarray) -> None:
    shape = (env.horizon + 1, env.num_states)
    if actions.shape != shape:
        raise ValidationError("policy has shape %s, environment needs %s" % (actions.shape, shape), actions)
    if np.any(actions < 0) or np.any(actions >= env.num_actions):
        raise ValidationError("policy actions must lie in [0, %d)" % env.num_actions, actions)


def value_iteration(env: DynamicEnvironment, task) -> Policy:
    """
    Backward induction over t = h..0. `np.argmax` returns the first maximizer,
    so ties go to the lowest action index.
    """
    r = as_task(task).rewards(env)
    S = env.num_states
    actions = np.zeros((env.horizon + 1, S), dtype=np.int64)
    values = np.zeros((env.horizon + 1, S))
    following = np.zeros(S)
    for t in range(env.horizon, -1, -1):
        q = r + env.discount * (env.transitions @ following)
        actions[t] = np.argmax(q, axis=1)
        values[t] = q[np.arange(S), actions[t]]
        following = values[t]
    return Policy(actions, values, float(env.initial_dist @ values[0]))


def policy_value(env: DynamicEnvironment, task, policy: Policy) -> float:
    """
    Exact expected discounted return of `policy` on `task`, by pushing the
    state distribution forward from rho.
    """
    _check_actions(env, policy.actions)
    r = as_task(task).rewards(env)
    states = np.arange(env.num_states)
    dist = env.initial_dist
    total = 0.0
    weight = 1.0
    for t in range(env.horizon + 1):
        a = policy.actions[t]
        total += weight * float(dist @ r[states, a])
        dist = dist @ env.transitions[states, a]
        weight *= env.discount
    return total


def bellman_residual(env: DynamicEnvironment, task, policy: Policy) -> float:
    """
    Largest violation of V_t(s) = r(s, a_t(s)) + gamma * E[V_{t+1}] over the
    policy's own value table.
    """
    _check_actions(env, policy.actions)
    r = as_task(task).rewards(env)
    S = env.num_states
    states = np.arange(S)
    worst = 0.0
    following = np.zeros(S)
    for t in range(env.horizon, -1, -1):
        a = policy.actions[t]
        expected = r[states, a] + env.discount * (env.transitions[states, a] @ following)
        worst = max(worst, float(np.max(np.abs(policy.values[t] - expected))))
        following = policy.values[t]
    return worst


def _generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _returns(env: DynamicEnvironment, task, policy: Policy, u: np.ndarray) -> np.ndarray:
    # u[e, t] picks the state of episode e at step t by inverse CDF
    _check_actions(env, policy.actions)
    r = as_task(task).rewards(env)
    last = env.num_states - 1

    def draw(cdf: np.ndarray, col: np.ndarray) -> np.ndarray:
        return np.minimum((col[:, None] >= cdf).sum(axis=1), last)

    episodes = u.shape[0]
    s = draw(np.broadcast_to(np.cumsum(env.initial_dist), (episodes, env.num_states)), u[:, 0])
    returns = np.zeros(episodes)
    weight = 1.0
    for t in range(env.horizon + 1):
        a = policy.actions[t, s]
        returns += weight * r[s, a]
        if t < env.horizon:
            s = draw(np.cumsum(env.transitions[s, a], axis=1), u[:, t + 1])
        weight *= env.discount
    return returns


def rollout_batch(env: DynamicEnvironment, task, policy: Policy, episodes: int, seed: SeedLike = None) -> np.ndarray:
    """
    Sample `episodes` independent episodes and return their discounted
    returns. Each episode reads h + 1 consecutive uniforms of the stream,
    one per state draw, so a seed fixes every return.
    """
    if episodes < 1:
        raise ValidationError("episodes must be at least 1, got %r" % (episodes,), episodes)
    u = _generator(seed).random((episodes, env.horizon + 1))
    return _returns(env, task, policy, u)


def rollout_seeded(env: DynamicEnvironment, task, policy: Policy, seeds: typing.Sequence[int]) -> np.ndarray:
    """
    One episode per seed; entry e equals `rollout(..., seed=seeds[e])`.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValidationError("at least one episode seed is needed", seeds)
    u = np.stack([np.random.default_rng(s).random(env.horizon + 1) for s in seeds])
    return _returns(env, task, policy, u)


def rollout(env: DynamicEnvironment, task, policy: Policy, seed: SeedLike = None) -> float:
    return float(rollout_batch(env, task, policy, 1, seed)[0])


def lipschitz_constant(env: DynamicEnvironment) -> float:
    return float(np.max(np.abs(env.features).sum(axis=2)))


def simulation_bound(env: DynamicEnvironment, epsilon: float, lipschitz: typing.Optional[float] = None) -> float:
    """
    Largest value loss from acting with the optimal policy of a task whose
    parameters are within epsilon in max norm: 2 L epsilon times the summed
    discounts over the h + 1 reward steps.
    """
    if not epsilon >= 0:
        raise ValidationError("epsilon must be non-negative, got %r" % epsilon, epsilon)
    L = lipschitz_constant(env) if lipschitz is None else lipschitz
    return 2.0 * L * float(env.discounts().sum()) * epsilon


def enumerate_policies(env: DynamicEnvironment, budget: int = POLICY_ENUMERATION_BUDGET) -> typing.Iterator[np.ndarray]:
    """
    Yield every deterministic time-indexed action table.
    """
    cells = (env.horizon + 1) * env.num_states
    count = env.num_actions ** cells
    if count > budget:
        raise CapacityError("too many deterministic policies to enumerate", count, budget)
    shape = (env.horizon + 1, env.num_states)
    for flat in itertools.product(range(env.num_actions), repeat=cells):
        yield np.array(flat, dtype=np.int64).reshape(shape)


def random_environment(
    num_states: int, num_actions: int, d: int, horizon: int, discount: float, seed: SeedLike = None
) -> DynamicEnvironment:
    """
    Dirichlet(1) transition rows and initial distribution, uniform [0, 1]
    features.
    """
    rng = _generator(seed)
    transitions = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    initial_dist = rng.dirichlet(np.ones(num_states))
    features = rng.random((num_states, num_actions, d))
    return DynamicEnvironment(transitions, features, initial_dist, horizon, discount)

