"""
The `polcom` command line.

    polcom gen-tasks  sample a task file from a mixture, or write a fixture
    polcom cluster    compute a parameter cover with gea, gia, grad or kmeans
    polcom oracle     exact optimal miss rate for small task files
    polcom train      plan one policy per cover center
    polcom evaluate   score a committee against optimal values
    polcom fewshot    pick a committee member from sampled episodes
    polcom pipeline   all of the above in one run
    polcom replay     rerun a manifest and compare output digests

Exit codes: 0 success, 1 computation or capacity failure, 2 usage or
validation error.
"""
import argparse
import contextlib
import logging
import pathlib
import sys
import tempfile
import typing

from .algorithms import ALGORITHM_NAMES, CLUSTER_ALGORITHMS
from .casts import float_from_text
from .committee import (
    FewShotConfig,
    TRAINING_MODES,
    evaluate_cover,
    fewshot_select,
    load_committee,
    required_episode_count,
    save_committee,
    train_committee,
    value_epsilon,
)
from .cover_core import max_k_cover_oracle
from .costs import GIA_NODE_BUDGET, MAX_1_COVER_BUDGET, MAX_K_COVER_BUDGET
from .CoverError import CoverError, ValidationError
from .grad_cover import INITS, OptimizerConfig
from .instances import FIXTURES
from .mtmdp import MdpTask, load_environment
from .pipeline import MANIFEST_NAME, PipelineConfig, RunManifest, run_pipeline
from .serialize import load_cover, read_json, save_cover, save_trace, write_csv
from .task_space import TaskSet, load_gmm_spec, load_task_set, sample_tasks, save_task_set, write_task_set
from .version import __version__


log = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# namespace entries that are plumbing rather than configuration
NOT_CONFIG = frozenset(["func", "subparser", "config", "verbose", "quiet"])


def positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("%r is not an integer" % text)
    if v < 1:
        raise argparse.ArgumentTypeError("%r is not a positive integer" % text)
    return v


def non_negative_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("%r is not an integer" % text)
    if v < 0:
        raise argparse.ArgumentTypeError("%r is negative" % text)
    return v


def decimal(text: str) -> float:
    try:
        return float_from_text(text)
    except ValidationError as ex:
        raise argparse.ArgumentTypeError(str(ex))


def vector(text: str) -> typing.List[float]:
    try:
        return [float_from_text(_) for _ in text.split(",")]
    except ValidationError as ex:
        raise argparse.ArgumentTypeError(str(ex))


def configure_logging(level: int) -> None:
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def _require(args, *names: str) -> None:
    for name in names:
        if getattr(args, name, None) is None:
            raise ValidationError("--%s is required" % name.replace("_", "-"), name)


def _output_path(args, explicit: typing.Optional[str], default_name: typing.Optional[str]) -> typing.Optional[pathlib.Path]:
    out_dir = pathlib.Path(args.out_dir) if args.out_dir else None
    if explicit:
        p = pathlib.Path(explicit)
        return out_dir / p if out_dir and not p.is_absolute() else p
    if out_dir and default_name:
        return out_dir / default_name
    return None


class Outputs:
    """
    Files written by one command; with --out-dir they are listed in the
    run manifest.
    """

    def __init__(self, args, argv: typing.Sequence[str]):
        self.out_dir = pathlib.Path(args.out_dir) if args.out_dir else None
        config = {k: v for k, v in vars(args).items() if k not in NOT_CONFIG}
        self.manifest = RunManifest(argv, config, dict(seed=args.seed))
        if self.out_dir:
            self.out_dir.mkdir(parents=True, exist_ok=True)

    def wrote(self, path: typing.Optional[pathlib.Path]) -> None:
        if path is None or self.out_dir is None:
            return
        try:
            self.manifest.add_output(path, self.out_dir)
        except ValueError:
            log.warning("%s is outside the output directory and is not listed in the manifest", path)

    def finish(self) -> None:
        if self.out_dir is not None:
            path = self.manifest.save(self.out_dir)
            log.info("wrote manifest %s", path)


def _optimizer_config(args) -> OptimizerConfig:
    return OptimizerConfig(
        step_size=args.step_size,
        max_iters=args.max_iters,
        tolerance=args.tolerance,
        seed=args.seed,
        init=args.init,
        temperature=args.temperature,
        line_search=not args.fixed_step,
        trace_every=args.trace_every,
        gia_node_budget=args.node_budget,
    )


def cmd_gen_tasks(args, argv) -> int:
    if (args.gmm is None) == (args.fixture is None):
        raise ValidationError("give exactly one of --gmm and --fixture", args)
    if args.gmm is not None:
        _require(args, "n")
        tasks = sample_tasks(load_gmm_spec(args.gmm), args.n, args.seed)
    else:
        tasks = FIXTURES[args.fixture]()
    outputs = Outputs(args, argv)
    path = _output_path(args, args.out, "tasks.%s" % args.format)
    if path is None:
        write_task_set(tasks, sys.stdout, args.format)
    else:
        save_task_set(tasks, path, args.format)
        outputs.wrote(path)
        print("wrote %d tasks to %s" % (tasks.n, path))
    outputs.finish()
    return 0


def cmd_cluster(args, argv) -> int:
    _require(args, "epsilon", "K")
    tasks = load_task_set(args.tasks, standardize=args.standardize)
    options = dict(seed=args.seed, optimizer=_optimizer_config(args), node_budget=args.node_budget)
    cover = CLUSTER_ALGORITHMS(args.algo, tasks, args.epsilon, args.K, **options)
    outputs = Outputs(args, argv)
    path = _output_path(args, args.out, "cover.json")
    if path is not None:
        save_cover(cover, path)
        outputs.wrote(path)
    trace_path = _output_path(args, args.trace, "trace.csv" if cover.trace else None)
    if trace_path is not None:
        save_trace(cover, trace_path)
        outputs.wrote(trace_path)
    if cover.stalled:
        print("stalled: soft objective stopped decreasing")
    print(cover.summary())
    outputs.finish()
    return 0


def cmd_oracle(args, argv) -> int:
    _require(args, "epsilon", "K")
    tasks = load_task_set(args.tasks, standardize=args.standardize)
    solution = max_k_cover_oracle(tasks, args.epsilon, args.K, grid_budget=args.grid_budget, budget=args.budget)
    outputs = Outputs(args, argv)
    path = _output_path(args, args.out, "oracle.json")
    if path is not None:
        save_cover(solution, path)
        outputs.wrote(path)
    print("δ*=%.4f (covered %d/%d)" % (solution.miss_rate, solution.covered_count, solution.n))
    for k, center in enumerate(solution.centers):
        print("center %d: %s" % (k, " ".join("%g" % v for v in center)))
    outputs.finish()
    return 0


def cmd_train(args, argv) -> int:
    _require(args, "env", "tasks", "cover")
    env = load_environment(args.env)
    tasks = load_task_set(args.tasks, standardize=args.standardize)
    cover = load_cover(args.cover)
    committee = train_committee(env, tasks, cover, args.mode, args.threads)
    outputs = Outputs(args, argv)
    path = _output_path(args, args.out, "committee.json")
    if path is not None:
        save_committee(committee, path)
        outputs.wrote(path)
    print("trained %d members (%s)" % (committee.K, committee.mode))
    outputs.finish()
    return 0


def _evaluation_tasks(args) -> TaskSet:
    if (args.tasks is None) == (args.gmm is None):
        raise ValidationError("give exactly one of --tasks and --gmm", args)
    if args.tasks is not None:
        return load_task_set(args.tasks, standardize=args.standardize)
    _require(args, "samples")
    eval_seed = args.seed if args.eval_seed is None else args.eval_seed
    return sample_tasks(load_gmm_spec(args.gmm), args.samples, eval_seed)


def cmd_evaluate(args, argv) -> int:
    _require(args, "env", "committee")
    env = load_environment(args.env)
    committee = load_committee(args.committee)
    tasks = _evaluation_tasks(args)
    if args.epsilon_value is not None:
        eps_value = args.epsilon_value
    else:
        _require(args, "epsilon_param")
        eps_value = value_epsilon(env, args.epsilon_param)
    report = evaluate_cover(committee, env, tasks, eps_value, args.threads)
    outputs = Outputs(args, argv)
    for path, writer in (
        (_output_path(args, args.report, "report.json"), report.save_json),
        (_output_path(args, args.csv, "report.csv"), report.save_csv),
    ):
        if path is not None:
            writer(path)
            outputs.wrote(path)
    print(report.summary())
    outputs.finish()
    return 0


def cmd_fewshot(args, argv) -> int:
    _require(args, "env", "committee")
    env = load_environment(args.env)
    committee = load_committee(args.committee)
    if (args.theta is None) == (args.tasks is None):
        raise ValidationError("give exactly one of --theta and --tasks", args)
    tasks = TaskSet([args.theta]) if args.theta is not None else load_task_set(args.tasks)
    episodes = args.episodes
    if episodes is None:
        _require(args, "beta")
        episodes = required_episode_count(env.horizon, args.span_bound, args.alpha, args.beta)
        log.info("using %d episodes per member", episodes)
    rows = []
    for i in range(tasks.n):
        cfg = FewShotConfig(
            episodes_per_policy=episodes,
            span_bound=args.span_bound,
            alpha=args.alpha,
            beta=args.beta if args.beta is not None else 0.1,
            seed=args.seed + i,
            common_random_numbers=args.common_random_numbers,
        )
        picked = fewshot_select(committee, env, MdpTask(tasks.matrix[i]), cfg, args.threads)
        rows.append((tasks.ids[i], picked.index, episodes) + picked.means)
        print("%s: member %d (means %s)" % (tasks.ids[i], picked.index, " ".join("%.6g" % m for m in picked.means)))
    outputs = Outputs(args, argv)
    path = _output_path(args, args.out, "fewshot.csv")
    if path is not None:
        header = ["task_id", "chosen", "episodes"] + ["mean_%d" % k for k in range(committee.K)]
        write_csv(path, header, rows)
        outputs.wrote(path)
    outputs.finish()
    return 0


def cmd_pipeline(args, argv) -> int:
    _require(args, "env", "epsilon", "K", "out_dir")
    env = load_environment(args.env)
    if (args.tasks is None) == (args.gmm is None):
        raise ValidationError("give exactly one of --tasks and --gmm", args)
    source = load_task_set(args.tasks, standardize=args.standardize) if args.tasks else load_gmm_spec(args.gmm)
    cfg = PipelineConfig(
        epsilon=args.epsilon,
        K=args.K,
        algo=args.algo,
        mode=args.mode,
        seed=args.seed,
        n=args.n,
        eval_samples=args.eval_samples,
        eval_seed=args.eval_seed,
        epsilon_value=args.epsilon_value,
        fewshot_episodes=args.fewshot_episodes,
        fewshot_tasks=args.fewshot_tasks,
        threads=args.threads,
        optimizer=_optimizer_config(args),
    )
    outputs = Outputs(args, argv)
    outputs.manifest.seeds.update(eval_seed=cfg.effective_eval_seed)
    result = run_pipeline(env, source, cfg, outputs.out_dir, outputs.manifest)
    print(result.cover.summary())
    print(result.report.summary())
    if result.fewshot:
        agree = sum(1 for r in result.fewshot if r.chosen == r.best)
        print("few-shot picked the best member for %d/%d tasks" % (agree, len(result.fewshot)))
    outputs.finish()
    return 0


def _replace_out_dir(command: typing.Sequence[str], out_dir: str) -> typing.List[str]:
    r, skip = [], False
    for token in command:
        if skip:
            skip = False
            continue
        if token == "--out-dir":
            skip = True
            continue
        if token.startswith("--out-dir="):
            continue
        r.append(token)
    return r + ["--out-dir", out_dir]


def cmd_replay(args, argv) -> int:
    manifest = RunManifest.load(args.manifest)
    out_dir = args.out_dir or tempfile.mkdtemp(prefix="polcom-replay-")
    command = _replace_out_dir(manifest.command, out_dir)
    log.info("replaying %s into %s", " ".join(command), out_dir)
    # the rerun reports on stderr so stdout only carries the comparison
    with contextlib.redirect_stdout(sys.stderr):
        code = main(["polcom"] + command, configure=False)
    if code != 0:
        return code
    replayed = RunManifest.load(pathlib.Path(out_dir) / MANIFEST_NAME)
    mismatches = 0
    for name in sorted(set(manifest.outputs) | set(replayed.outputs)):
        ok = manifest.outputs.get(name) == replayed.outputs.get(name)
        mismatches += not ok
        print("%s %s" % ("ok" if ok else "MISMATCH", name))
    return 1 if mismatches else 0


def common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="Base seed for every random draw")
    common.add_argument("--config", help="JSON document of flag defaults; explicit flags win")
    common.add_argument("--out-dir", help="Directory for outputs and the run manifest")
    common.add_argument("--threads", type=positive_int, help="Worker threads for per-member work")
    common.add_argument("-v", "--verbose", action="count", default=0, help="More logging")
    common.add_argument("-q", "--quiet", action="count", default=0, help="Less logging")
    return common


def add_grad_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--init", choices=INITS[:3], default="gea", help="Starting centers for grad")
    parser.add_argument("--step-size", type=decimal, help="Center step; default 5%% of the data diameter")
    parser.add_argument("--max-iters", type=positive_int, default=OptimizerConfig.max_iters)
    parser.add_argument("--tolerance", type=decimal, default=OptimizerConfig.tolerance)
    parser.add_argument("--temperature", type=decimal, default=OptimizerConfig.temperature)
    parser.add_argument("--fixed-step", action="store_true", help="Disable the backtracking line search")
    parser.add_argument("--trace-every", type=positive_int, default=1)
    parser.add_argument("--node-budget", type=positive_int, default=GIA_NODE_BUDGET, help="gia search node budget")


def create_parser() -> argparse.ArgumentParser:
    common = common_parser()
    parser = argparse.ArgumentParser(
        prog="polcom", description="Parameter covers and policy committees for multi-task MDPs."
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def command(name, func, help):
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(func=func, subparser=p)
        return p

    p = command("gen-tasks", cmd_gen_tasks, "Sample tasks from a mixture or write a fixture")
    p.add_argument("--gmm", help="Mixture JSON")
    p.add_argument("--fixture", choices=sorted(FIXTURES), help="Built-in task set")
    p.add_argument("-n", type=positive_int, help="Number of tasks to sample")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", help="Task file to write; stdout when omitted")

    p = command("cluster", cmd_cluster, "Compute a parameter cover")
    p.add_argument("tasks", help="Task file (CSV or JSON)")
    p.add_argument("--algo", choices=ALGORITHM_NAMES, default="gia")
    p.add_argument("--epsilon", type=decimal)
    p.add_argument("-K", type=positive_int, help="Number of centers")
    p.add_argument("--standardize", action="store_true", help="Rescale each dimension to unit variance")
    p.add_argument("--out", help="Cover JSON to write")
    p.add_argument("--trace", help="Optimizer trace CSV to write (grad)")
    add_grad_flags(p)

    p = command("oracle", cmd_oracle, "Exact optimal K-center miss rate")
    p.add_argument("tasks", help="Task file (CSV or JSON)")
    p.add_argument("--epsilon", type=decimal)
    p.add_argument("-K", type=positive_int, help="Number of centers")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--grid-budget", type=positive_int, default=MAX_1_COVER_BUDGET)
    p.add_argument("--budget", type=positive_int, default=MAX_K_COVER_BUDGET)
    p.add_argument("--out", help="Oracle cover JSON to write")

    p = command("train", cmd_train, "Plan one policy per cover center")
    p.add_argument("--env", help="Environment JSON")
    p.add_argument("--tasks", help="Training task file the cover was computed on")
    p.add_argument("--cover", help="Cover JSON")
    p.add_argument("--mode", choices=TRAINING_MODES, default="representative")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--out", help="Committee JSON to write")

    p = command("evaluate", cmd_evaluate, "Score a committee against optimal values")
    p.add_argument("--env", help="Environment JSON")
    p.add_argument("--committee", help="Committee JSON")
    p.add_argument("--tasks", help="Task file to evaluate on")
    p.add_argument("--gmm", help="Mixture to sample evaluation tasks from")
    p.add_argument("--samples", type=positive_int, help="Evaluation tasks to sample")
    p.add_argument("--eval-seed", type=int, help="Seed for sampled evaluation tasks; defaults to --seed")
    p.add_argument("--epsilon-value", type=decimal, help="Value tolerance")
    p.add_argument("--epsilon-param", type=decimal, help="Parameter radius to derive the value tolerance from")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--report", help="Report JSON to write")
    p.add_argument("--csv", help="Per-task CSV to write")

    p = command("fewshot", cmd_fewshot, "Select a committee member from sampled episodes")
    p.add_argument("--env", help="Environment JSON")
    p.add_argument("--committee", help="Committee JSON")
    p.add_argument("--theta", type=vector, help="Comma separated task parameters")
    p.add_argument("--tasks", help="Task file; one selection per task")
    p.add_argument("--episodes", type=positive_int, help="Episodes per member")
    p.add_argument("--alpha", type=decimal, default=0.1)
    p.add_argument("--beta", type=decimal, help="Target value accuracy when deriving --episodes")
    p.add_argument("--span-bound", type=decimal, default=0.0)
    p.add_argument("--common-random-numbers", action="store_true")
    p.add_argument("--out", help="Selection CSV to write")

    p = command("pipeline", cmd_pipeline, "Sample, cluster, train, evaluate and select in one run")
    p.add_argument("--env", help="Environment JSON")
    p.add_argument("--tasks", help="Training task file")
    p.add_argument("--gmm", help="Mixture to sample training and evaluation tasks from")
    p.add_argument("-n", type=positive_int, help="Training tasks to sample")
    p.add_argument("--epsilon", type=decimal)
    p.add_argument("-K", type=positive_int)
    p.add_argument("--algo", choices=ALGORITHM_NAMES, default="gia")
    p.add_argument("--mode", choices=TRAINING_MODES, default="representative")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--eval-samples", type=non_negative_int, default=0)
    p.add_argument("--eval-seed", type=int)
    p.add_argument("--epsilon-value", type=decimal)
    p.add_argument("--fewshot-episodes", type=non_negative_int, default=0)
    p.add_argument("--fewshot-tasks", type=non_negative_int, default=10)
    add_grad_flags(p)

    p = command("replay", cmd_replay, "Rerun a manifest and compare output digests")
    p.add_argument("manifest", help="manifest.json of an earlier run")

    return parser


def parse_args(parser: argparse.ArgumentParser, argv: typing.Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    doc = read_json(args.config)
    if not isinstance(doc, dict):
        raise ValidationError("%s: a config file must hold a JSON object" % args.config, doc)
    known = set(vars(args)) - NOT_CONFIG
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValidationError("%s: unknown config key %r" % (args.config, unknown[0]), doc)
    args.subparser.set_defaults(**doc)
    return parser.parse_args(argv)


def error_message(ex: Exception) -> str:
    stage = getattr(ex, "stage", None)
    return "error: %s%s" % ("stage %s: " % stage if stage else "", ex)


def main(args=sys.argv, configure: bool = True) -> int:
    parser = create_parser()
    argv = list(args[1:])
    try:
        ns = parse_args(parser, argv)
    except SystemExit as ex:
        return ex.code if isinstance(ex.code, int) else 2
    except ValidationError as ex:
        print("error: %s" % ex, file=sys.stderr)
        return 2
    if configure:
        configure_logging(logging.WARNING if ns.quiet > ns.verbose else logging.DEBUG if ns.verbose > ns.quiet else logging.INFO)
    try:
        return ns.func(ns, argv)
    except (ValidationError, OSError) as ex:
        print(error_message(ex), file=sys.stderr)
        return 2
    except CoverError as ex:
        print(error_message(ex), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
