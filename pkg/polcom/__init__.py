from .task_space import TaskParams, TaskSet, GmmSpec, sample_tasks, load_task_set  # noqa
from .cover_core import CoverSolution, gea, gia, max_1_cover_oracle, max_k_cover_oracle  # noqa
from .grad_cover import OptimizerConfig, optimize_cover  # noqa
from .mtmdp import DynamicEnvironment, MdpTask, Policy, value_iteration, policy_value, rollout  # noqa
from .committee import PolicyCommittee, train_committee, committee_value, evaluate_cover, fewshot_select  # noqa
from .version import __version__  # noqa
