"""
Policy committees: one planned policy per cluster of a parameter cover, the
exact value of the committee on a task (its best member), cover reports over
task sets, and selection of a member for an unseen task from sampled
episodes.
"""
import concurrent.futures
import dataclasses
import logging
import math
import typing

import numpy as np

from .costs import JSON_SCHEMA_VERSION, VALUE_SLACK
from .cover_core import CoverSolution
from .CoverError import ParseError, ValidationError
from .mtmdp import DynamicEnvironment, MdpTask, Policy, as_task, policy_value, rollout_seeded, simulation_bound, value_iteration
from .serialize import read_json, write_csv, write_json
from .task_space import GmmSpec, TaskParams, TaskSet, sample_tasks


log = logging.getLogger(__name__)

TRAINING_MODES = ("representative", "cluster_sum")


class CommitteeMember(typing.NamedTuple):
    policy: Policy
    center: TaskParams
    cluster_tasks: typing.Tuple[str, ...]
    # parameters the member was planned for
    trained_on: TaskParams


class PolicyCommittee:
    def __init__(self, members: typing.Sequence[CommitteeMember], mode: str = "representative"):
        self.members = tuple(members)
        self.mode = mode
        seen: typing.Set[str] = set()
        for m in self.members:
            overlap = seen.intersection(m.cluster_tasks)
            if overlap:
                raise ValidationError("task %s belongs to more than one member" % sorted(overlap)[0], m)
            seen.update(m.cluster_tasks)

    @property
    def K(self) -> int:
        return len(self.members)

    @property
    def policies(self) -> typing.List[Policy]:
        return [m.policy for m in self.members]

    def to_dict(self) -> dict:
        return dict(
            schema_version=JSON_SCHEMA_VERSION,
            mode=self.mode,
            members=[
                dict(
                    center=m.center.theta.tolist(),
                    trained_on=m.trained_on.theta.tolist(),
                    cluster_tasks=list(m.cluster_tasks),
                    actions=m.policy.actions.tolist(),
                    values=m.policy.values.tolist(),
                    value=m.policy.value,
                )
                for m in self.members
            ],
        )

    @classmethod
    def from_dict(class_, doc) -> "PolicyCommittee":
        try:
            members = [
                CommitteeMember(
                    Policy(m["actions"], m["values"], m["value"]),
                    TaskParams(m["center"]),
                    tuple(str(_) for _ in m["cluster_tasks"]),
                    TaskParams(m.get("trained_on", m["center"])),
                )
                for m in doc["members"]
            ]
        except (KeyError, TypeError) as ex:
            raise ValidationError("malformed committee document: %s" % ex, doc)
        return class_(members, doc.get("mode", "representative"))

    def __repr__(self):
        return "%s(K=%d, mode=%s)" % (self.__class__.__name__, self.K, self.mode)


def save_committee(committee: PolicyCommittee, path) -> None:
    write_json(committee.to_dict(), path)


def load_committee(path) -> PolicyCommittee:
    doc = read_json(path)
    try:
        return PolicyCommittee.from_dict(doc)
    except ValidationError as ex:
        raise ParseError(str(ex), path=path)


def _map(f, items, threads: typing.Optional[int]):
    # results come back in submission order whatever the worker count
    if threads == 1 or len(items) <= 1:
        return [f(_) for _ in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(f, items))


def train_committee(
    env: DynamicEnvironment,
    training_tasks: TaskSet,
    cover: CoverSolution,
    mode: str = "representative",
    threads: typing.Optional[int] = None,
) -> PolicyCommittee:
    """
    Plan one policy per center. `representative` plans for the center itself;
    `cluster_sum` plans for the summed reward of the cluster's tasks, which
    for rewards linear in theta is the MDP of the cluster's mean theta. A
    member with an empty cluster falls back to its center.
    """
    if mode not in TRAINING_MODES:
        raise ValidationError("mode must be one of %s, got %r" % (", ".join(TRAINING_MODES), mode), mode)
    if cover.n != training_tasks.n or cover.centers.shape[1] != training_tasks.d:
        raise ValidationError(
            "cover was computed for %d tasks of dimension %d, got %d of dimension %d"
            % (cover.n, cover.centers.shape[1], training_tasks.n, training_tasks.d),
            cover,
        )
    clusters = cover.clusters()
    targets = []
    for k, members in enumerate(clusters):
        if mode == "cluster_sum" and members:
            targets.append(training_tasks.matrix[members].mean(axis=0))
        else:
            targets.append(cover.centers[k])
    policies = _map(lambda theta: value_iteration(env, MdpTask(theta)), targets, threads)
    committee = PolicyCommittee(
        [
            CommitteeMember(policy, TaskParams(cover.centers[k]), tuple(training_tasks.ids[i] for i in clusters[k]), TaskParams(targets[k]))
            for k, policy in enumerate(policies)
        ],
        mode,
    )
    log.info("trained %d committee members (%s)", committee.K, mode)
    return committee


def member_values(committee: PolicyCommittee, env: DynamicEnvironment, task) -> np.ndarray:
    task = as_task(task)
    return np.array([policy_value(env, task, p) for p in committee.policies])


def committee_value(committee: PolicyCommittee, env: DynamicEnvironment, task) -> typing.Tuple[float, int]:
    """
    The value of the best member on `task` and its index, lowest on ties.
    """
    if committee.K == 0:
        raise ValidationError("committee has no members", committee)
    values = member_values(committee, env, task)
    best = int(np.argmax(values))
    return float(values[best]), best


class TaskValueRow(typing.NamedTuple):
    task_id: str
    v_star: float
    v_committee: float
    best_member: int
    covered: bool


class CoverReport:
    """
    Per-task optimal and committee values. A task counts as covered when the
    committee is within `epsilon_value` of its optimum.
    """

    def __init__(self, epsilon_value: float, rows: typing.Sequence[TaskValueRow]):
        self.epsilon_value = float(epsilon_value)
        self.per_task = list(rows)

    @property
    def delta_hat(self) -> float:
        if not self.per_task:
            return 0.0
        return sum(1 for r in self.per_task if not r.covered) / len(self.per_task)

    @property
    def mean_committee_value(self) -> float:
        return float(np.mean([r.v_committee for r in self.per_task])) if self.per_task else 0.0

    @property
    def mean_optimal_value(self) -> float:
        return float(np.mean([r.v_star for r in self.per_task])) if self.per_task else 0.0

    def summary(self) -> str:
        return "delta_hat=%.4f mean V^Pi=%.6g mean V*=%.6g (%d tasks)" % (
            self.delta_hat, self.mean_committee_value, self.mean_optimal_value, len(self.per_task)
        )

    def to_dict(self) -> dict:
        return dict(
            schema_version=JSON_SCHEMA_VERSION,
            epsilon_value=self.epsilon_value,
            delta_hat=self.delta_hat,
            mean_committee_value=self.mean_committee_value,
            mean_optimal_value=self.mean_optimal_value,
            per_task=[r._asdict() for r in self.per_task],
        )

    def save_json(self, path) -> None:
        write_json(self.to_dict(), path)

    def save_csv(self, path) -> None:
        write_csv(path, TaskValueRow._fields, [tuple(r) for r in self.per_task])


def evaluate_cover(
    committee: PolicyCommittee,
    env: DynamicEnvironment,
    tasks: typing.Union[TaskSet, typing.Tuple[GmmSpec, int, int]],
    epsilon_value: float,
    threads: typing.Optional[int] = None,
) -> CoverReport:
    """
    Score the committee on a task set, or on `m` tasks freshly sampled from
    a mixture when `tasks` is a (gmm, m, seed) triple.
    """
    if not epsilon_value >= 0:
        raise ValidationError("epsilon_value must be non-negative, got %r" % epsilon_value, epsilon_value)
    if committee.K == 0:
        raise ValidationError("committee has no members", committee)
    if not isinstance(tasks, TaskSet):
        gmm, m, seed = tasks
        tasks = sample_tasks(gmm, m, seed)

    def row(i: int) -> TaskValueRow:
        task = MdpTask(tasks.matrix[i])
        v_star = value_iteration(env, task).value
        v, best = committee_value(committee, env, task)
        return TaskValueRow(tasks.ids[i], v_star, v, best, v >= v_star - epsilon_value - VALUE_SLACK)

    report = CoverReport(epsilon_value, _map(row, list(range(tasks.n)), threads))
    log.info("evaluated committee: %s", report.summary())
    return report


@dataclasses.dataclass(frozen=True)
class FewShotConfig:
    episodes_per_policy: int = 1
    span_bound: float = 0.0
    alpha: float = 0.1
    beta: float = 0.1
    seed: int = 0
    # all members replay one random stream instead of independent ones
    common_random_numbers: bool = False

    def __post_init__(self):
        if isinstance(self.episodes_per_policy, bool) or self.episodes_per_policy < 1:
            raise ValidationError("episodes_per_policy must be at least 1, got %r" % (self.episodes_per_policy,), self)
        if not self.span_bound >= 0:
            raise ValidationError("span_bound must be non-negative, got %r" % self.span_bound, self)
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie in (0, 1), got %r" % self.alpha, self)
        if not self.beta > 0:
            raise ValidationError("beta must be positive, got %r" % self.beta, self)
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ValidationError("seed must be a non-negative integer, got %r" % (self.seed,), self)


class FewShotResult(typing.NamedTuple):
    index: int
    means: typing.Tuple[float, ...]
    episodes: int


def episode_seeds(cfg: FewShotConfig, member: int) -> range:
    """
    Seeds of member `member`'s episodes: seed + m p + e for episode e, or
    seed + e for every member with common random numbers.
    """
    p = cfg.episodes_per_policy
    start = cfg.seed + (0 if cfg.common_random_numbers else member * p)
    return range(start, start + p)


def fewshot_select(
    committee: PolicyCommittee,
    env: DynamicEnvironment,
    task,
    cfg: FewShotConfig,
    threads: typing.Optional[int] = None,
) -> FewShotResult:
    """
    Run `episodes_per_policy` episodes of every member on `task` and pick the
    highest empirical mean return, lowest index on ties. Episode e of member
    m is `rollout(..., seed=seed + m p + e)`.
    """
    if committee.K == 0:
        raise ValidationError("committee has no members", committee)
    task = as_task(task)
    p = cfg.episodes_per_policy

    def mean_return(m: int) -> float:
        returns = rollout_seeded(env, task, committee.members[m].policy, episode_seeds(cfg, m))
        return float(returns.mean())

    means = tuple(_map(mean_return, list(range(committee.K)), threads))
    index = int(np.argmax(means))
    log.debug("few-shot means %s, chose member %d", means, index)
    return FewShotResult(index, means, p * committee.K)


def required_episode_count(h: int, H: float, alpha: float, beta: float) -> int:
    """
    Episodes per member after which the empirically best member is within
    beta of the best member with probability 1 - alpha:
    ceil(32 h (H + 1)^2 ln(4 / alpha) / (beta - 2 H)^2), at least 1.
    """
    if h < 0:
        raise ValidationError("horizon must be non-negative, got %r" % (h,), h)
    if not H >= 0:
        raise ValidationError("span bound must be non-negative, got %r" % (H,), H)
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1), got %r" % (alpha,), alpha)
    if not beta > 2.0 * H:
        raise ValidationError("beta must exceed twice the span bound (beta=%r, H=%r)" % (beta, H), (beta, H))
    p = 32.0 * h * (H + 1.0) ** 2 * math.log(4.0 / alpha) / (beta - 2.0 * H) ** 2
    return max(1, int(math.ceil(p)))


def estimate_span_bound(env: DynamicEnvironment, tasks: typing.Union[TaskSet, typing.Sequence[typing.Any]]) -> float:
    """
    Crude span bound h * (max r - min r) over the given tasks. It does not
    check the unichain conditions the episode count assumes.
    """
    thetas = tasks.matrix if isinstance(tasks, TaskSet) else [as_task(t).theta.theta for t in tasks]
    spread = 0.0
    for theta in thetas:
        r = as_task(theta).rewards(env)
        spread = max(spread, float(r.max() - r.min()))
    return env.horizon * spread


def value_epsilon(env: DynamicEnvironment, epsilon_param: float) -> float:
    """
    Value tolerance that a parameter cover of radius `epsilon_param` carries
    over to the committee trained on it.
    """
    return simulation_bound(env, epsilon_param)
