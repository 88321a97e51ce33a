"""
Name-keyed dispatch over the cover algorithms, used by the command line and
the pipeline. Every entry takes (tasks, epsilon, K, **options) and returns a
CoverSolution.
"""
import typing

from . import baselines, cover_core, grad_cover
from .CoverError import ValidationError


ALGORITHM_NAMES = "gea gia grad kmeans".split()


def cover_gea(tasks, epsilon, K, **options):
    return cover_core.gea(tasks, epsilon, K)


def cover_gia(tasks, epsilon, K, node_budget=cover_core.GIA_NODE_BUDGET, **options):
    return cover_core.gia(tasks, epsilon, K, node_budget=node_budget)


def cover_grad(tasks, epsilon, K, optimizer: typing.Optional[grad_cover.OptimizerConfig] = None, **options):
    return grad_cover.optimize_cover(tasks, epsilon, K, optimizer)


def cover_kmeans(tasks, epsilon, K, seed=0, **options):
    return baselines.kmeans_cover(tasks, epsilon, K, seed=seed)


def default_unknown_algorithm(name, tasks, epsilon, K, **options):
    raise ValidationError("unknown cover algorithm %r; expected one of %s" % (name, ", ".join(ALGORITHM_NAMES)), name)


class AlgorithmDict(dict):
    """
    A dict with `__call__`, so algorithms can be registered at run time and
    an unknown name goes through `unknown_algorithm_handler`.
    """

    def __new__(class_, d: typing.Dict, *args, **kwargs):
        self = super(AlgorithmDict, class_).__new__(class_, d)
        self.unknown_algorithm_handler = kwargs.get("unknown_algorithm_handler", default_unknown_algorithm)
        return self

    def __init__(self, d: typing.Dict, *args, **kwargs):
        super().__init__(d)

    def __call__(self, name: str, tasks, epsilon, K, **options):
        f = self.get(name)
        if f is None:
            return self.unknown_algorithm_handler(name, tasks, epsilon, K, **options)
        return f(tasks, epsilon, K, **options)


def registered_algorithms(names: typing.Iterable[str], namespace: typing.Mapping[str, typing.Any]) -> typing.Dict[str, typing.Callable]:
    """
    Map each name to the `cover_<name>` function found in `namespace`;
    names without one are left out.
    """
    return {name: namespace["cover_%s" % name] for name in names if callable(namespace.get("cover_%s" % name))}


CLUSTER_ALGORITHMS = AlgorithmDict(registered_algorithms(ALGORITHM_NAMES, globals()))
