"""
Stage orchestration for a full run: tasks, cover, committee, evaluation and
few-shot selection, with a manifest recording what was run and the digest of
everything written.
"""
import contextlib
import dataclasses
import logging
import pathlib
import time
import typing

from .algorithms import CLUSTER_ALGORITHMS
from .committee import (
    FewShotConfig,
    PolicyCommittee,
    committee_value,
    evaluate_cover,
    fewshot_select,
    save_committee,
    train_committee,
    value_epsilon,
)
from .costs import JSON_SCHEMA_VERSION
from .cover_core import CoverSolution
from .CoverError import CoverError, ParseError, ValidationError
from .grad_cover import OptimizerConfig
from .mtmdp import DynamicEnvironment, MdpTask, policy_value
from .serialize import file_digest, read_json, save_cover, save_trace, write_csv, write_json
from .task_space import GmmSpec, TaskSet, sample_tasks, save_task_set
from .version import __version__


log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class RunManifest:
    """
    The command line, effective configuration, seeds and library version of
    a run, wall-clock seconds per stage, and the sha256 of every output file
    keyed by its path relative to the output directory.
    """

    def __init__(self, command, config=None, seeds=None, version=__version__, stages=None, outputs=None):
        self.command = list(command)
        self.config = dict(config or {})
        self.seeds = dict(seeds or {})
        self.version = version
        self.stages: typing.List[typing.Tuple[str, float]] = list(stages or [])
        self.outputs: typing.Dict[str, str] = dict(outputs or {})

    @contextlib.contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        log.info("stage %s started", name)
        try:
            yield
        except CoverError as ex:
            # partial outputs stay on disk
            ex.stage = name
            log.error("stage %s failed: %s", name, ex)
            raise
        seconds = time.perf_counter() - start
        self.stages.append((name, seconds))
        log.info("stage %s finished in %.3fs", name, seconds)

    def add_output(self, path, base) -> None:
        path = pathlib.Path(path)
        self.outputs[path.relative_to(base).as_posix()] = file_digest(path)

    def to_dict(self) -> dict:
        return dict(
            schema_version=JSON_SCHEMA_VERSION,
            command=self.command,
            config=self.config,
            seeds=self.seeds,
            version=self.version,
            stages=[dict(name=n, seconds=s) for n, s in self.stages],
            outputs=self.outputs,
        )

    @classmethod
    def from_dict(class_, doc) -> "RunManifest":
        try:
            return class_(
                doc["command"],
                doc.get("config"),
                doc.get("seeds"),
                doc.get("version", "unknown"),
                [(s["name"], s["seconds"]) for s in doc.get("stages", [])],
                doc.get("outputs"),
            )
        except (KeyError, TypeError) as ex:
            raise ValidationError("malformed manifest: %s" % ex, doc)

    def save(self, out_dir) -> pathlib.Path:
        path = pathlib.Path(out_dir) / MANIFEST_NAME
        write_json(self.to_dict(), path)
        return path

    @classmethod
    def load(class_, path) -> "RunManifest":
        doc = read_json(path)
        try:
            return class_.from_dict(doc)
        except ValidationError as ex:
            raise ParseError(str(ex), path=path)


@dataclasses.dataclass(frozen=True)
class PipelineConfig:
    epsilon: float
    K: int
    algo: str = "gia"
    mode: str = "representative"
    seed: int = 0
    # training tasks sampled when a mixture is given
    n: typing.Optional[int] = None
    # 0 scores the committee on its training tasks
    eval_samples: int = 0
    eval_seed: typing.Optional[int] = None
    epsilon_value: typing.Optional[float] = None
    # 0 skips few-shot selection
    fewshot_episodes: int = 0
    fewshot_tasks: int = 10
    threads: typing.Optional[int] = None
    optimizer: OptimizerConfig = OptimizerConfig()

    def __post_init__(self):
        if self.eval_samples < 0 or self.fewshot_episodes < 0 or self.fewshot_tasks < 0:
            raise ValidationError("sample and episode counts must be non-negative", self)

    @property
    def effective_eval_seed(self) -> int:
        return self.seed + 1 if self.eval_seed is None else self.eval_seed


class FewShotRow(typing.NamedTuple):
    task_id: str
    chosen: int
    best: int
    chosen_value: float
    best_value: float


class PipelineResult(typing.NamedTuple):
    tasks: TaskSet
    cover: CoverSolution
    committee: PolicyCommittee
    report: typing.Any
    fewshot: typing.List[FewShotRow]


def run_pipeline(
    env: DynamicEnvironment,
    source: typing.Union[TaskSet, GmmSpec],
    cfg: PipelineConfig,
    out_dir,
    manifest: RunManifest,
) -> PipelineResult:
    if cfg.eval_samples and not isinstance(source, GmmSpec):
        raise ValidationError("eval_samples needs a mixture to draw held-out tasks from; a task file is scored on its own tasks", cfg)
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def emit(name: str, writer) -> None:
        path = out_dir / name
        writer(path)
        manifest.add_output(path, out_dir)

    with manifest.stage("tasks"):
        if isinstance(source, GmmSpec):
            if not cfg.n:
                raise ValidationError("sampling training tasks needs n", cfg)
            tasks = sample_tasks(source, cfg.n, cfg.seed)
        else:
            tasks = source
        if tasks.d != env.d:
            raise ValidationError("tasks have dimension %d, environment features %d" % (tasks.d, env.d), tasks)
        emit("tasks.csv", lambda p: save_task_set(tasks, p, "csv"))

    with manifest.stage("cluster"):
        options = dict(seed=cfg.seed, optimizer=cfg.optimizer, node_budget=cfg.optimizer.gia_node_budget)
        cover = CLUSTER_ALGORITHMS(cfg.algo, tasks, cfg.epsilon, cfg.K, **options)
        emit("cover.json", lambda p: save_cover(cover, p))
        if cover.trace:
            emit("trace.csv", lambda p: save_trace(cover, p))
        log.info("%s cover: %s", cfg.algo, cover.summary())

    with manifest.stage("train"):
        committee = train_committee(env, tasks, cover, cfg.mode, cfg.threads)
        emit("committee.json", lambda p: save_committee(committee, p))

    with manifest.stage("evaluate"):
        eps_value = value_epsilon(env, cfg.epsilon) if cfg.epsilon_value is None else cfg.epsilon_value
        if cfg.eval_samples and isinstance(source, GmmSpec):
            eval_tasks = sample_tasks(source, cfg.eval_samples, cfg.effective_eval_seed)
        else:
            eval_tasks = tasks
        report = evaluate_cover(committee, env, eval_tasks, eps_value, cfg.threads)
        emit("report.json", report.save_json)
        emit("report.csv", report.save_csv)

    rows: typing.List[FewShotRow] = []
    if cfg.fewshot_episodes:
        with manifest.stage("fewshot"):
            ids = [r.task_id for r in report.per_task[: cfg.fewshot_tasks]]
            for offset, task_id in enumerate(ids):
                task = MdpTask(eval_tasks.matrix[eval_tasks.index_of(task_id)])
                fs_cfg = FewShotConfig(episodes_per_policy=cfg.fewshot_episodes, seed=cfg.seed + offset)
                picked = fewshot_select(committee, env, task, fs_cfg, cfg.threads)
                best_value, best = committee_value(committee, env, task)
                chosen_value = policy_value(env, task, committee.members[picked.index].policy)
                rows.append(FewShotRow(task_id, picked.index, best, chosen_value, best_value))
            emit("fewshot.csv", lambda p: write_csv(p, FewShotRow._fields, [tuple(r) for r in rows]))

    return PipelineResult(tasks, cover, committee, report, rows)
