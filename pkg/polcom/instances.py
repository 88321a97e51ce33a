"""
Small instances with known answers, shared by the tests and the command line
(`polcom gen-tasks --fixture NAME`).
"""
import typing

import numpy as np

from .mtmdp import DynamicEnvironment, Policy
from .task_space import GmmComponent, GmmSpec, TaskSet


# Five points whose coverable pairs are exactly the edges {2,4} and {3,4}
# (0-based): per-dimension coordinates 0, 1.5 eps or 2.5 eps.
HARDNESS_UNITS = (
    (0.0, 2.5, 2.5, 2.5, 2.5),
    (2.5, 0.0, 2.5, 2.5, 2.5),
    (2.5, 2.5, 0.0, 2.5, 1.5),
    (2.5, 2.5, 2.5, 0.0, 1.5),
    (2.5, 2.5, 1.5, 1.5, 0.0),
)

VELOCITIES = (10.0, 12.0, 20.0, 22.0, 100.0)


def hardness_tasks(epsilon: float = 1.0) -> TaskSet:
    return TaskSet(np.array(HARDNESS_UNITS) * epsilon, ["t%d" % (i + 1) for i in range(5)])


def complete_graph_tasks(n: int = 5, epsilon: float = 1.0) -> TaskSet:
    """
    n points in R^n, pairwise at distance 1.5 epsilon; the all-epsilon
    vector covers every one of them.
    """
    m = np.full((n, n), 1.5 * epsilon)
    np.fill_diagonal(m, 0.0)
    return TaskSet(m)


def velocity_tasks() -> TaskSet:
    return TaskSet(np.array(VELOCITIES)[:, None], ["v%g" % v for v in VELOCITIES])


def planted_tasks(
    K: int, points_per_center: int, d: int, epsilon: float, seed: int
) -> typing.Tuple[TaskSet, np.ndarray]:
    """
    K well separated centers with every point within epsilon / 2 of its
    center in max norm, so K centers cover all tasks.
    """
    rng = np.random.default_rng(seed)
    spacing = 4.0 * epsilon
    centers = rng.uniform(0.0, spacing * K, size=(K, d))
    # shift center k along the first axis so boxes never overlap
    centers[:, 0] = spacing * np.arange(K) + rng.uniform(0.0, epsilon, size=K)
    offsets = rng.uniform(-epsilon / 2, epsilon / 2, size=(K, points_per_center, d))
    thetas = (centers[:, None, :] + offsets).reshape(-1, d)
    return TaskSet(thetas), centers


def five_mode_mixture(stddev: float = 0.2) -> GmmSpec:
    """
    One-dimensional mixture shaped like a target-velocity task family: two
    heavy modes, two lighter ones and a far outlier mode.
    """
    means = (-3.0, -2.0, 2.0, 3.0, 10.0)
    weights = (0.3, 0.3, 0.15, 0.15, 0.1)
    return GmmSpec([GmmComponent(w, [m], [stddev]) for w, m in zip(weights, means)])


def uniform_environment(features, horizon: int, discount: float) -> DynamicEnvironment:
    """
    Every action moves to a uniformly random state; rho is uniform.
    """
    features = np.asarray(features, dtype=np.float64)
    S, A = features.shape[:2]
    transitions = np.full((S, A, S), 1.0 / S)
    return DynamicEnvironment(transitions, features, np.full(S, 1.0 / S), horizon, discount)


def sign_environment(horizon: int = 4, discount: float = 1.0) -> DynamicEnvironment:
    """
    Two states, two actions, one feature: action 0 pays theta, action 1 pays
    nothing. The optimal policy only depends on the sign of theta.
    """
    features = np.zeros((2, 2, 1))
    features[:, 0, 0] = 1.0
    return uniform_environment(features, horizon, discount)


def committee_witness() -> typing.Tuple[DynamicEnvironment, np.ndarray]:
    """
    Two tasks rewarding different actions. Every single policy collects a
    summed value of 1 + 0.9 over both tasks; one policy per task collects
    twice that.
    """
    features = np.zeros((2, 2, 2))
    for a in range(2):
        features[:, a, a] = 1.0
    env = uniform_environment(features, horizon=1, discount=0.9)
    return env, np.array([[1.0, 0.0], [0.0, 1.0]])


def fewshot_instance() -> typing.Tuple[DynamicEnvironment, np.ndarray]:
    """
    Two states, three actions, h = 4, gamma = 1. The constant-action policy
    for action a is worth 3.75 * theta[a] on theta = (0.5, 0.6, 0.7).
    """
    features = np.zeros((2, 3, 3))
    for a in range(3):
        features[0, a, a] = 1.0
        features[1, a, a] = 0.5
    env = uniform_environment(features, horizon=4, discount=1.0)
    return env, np.array([0.5, 0.6, 0.7])


def constant_policies(env: DynamicEnvironment, theta) -> typing.List[Policy]:
    shape = (env.horizon + 1, env.num_states)
    return [Policy.from_actions(env, theta, np.full(shape, a)) for a in range(env.num_actions)]


FIXTURES = dict(
    hardness=hardness_tasks,
    complete=complete_graph_tasks,
    velocity=velocity_tasks,
)
