"""
Task parameter vectors, the task sets built from them, and the Gaussian mixture
family tasks are sampled from.

Sampling uses `numpy.random.Generator` with the PCG64 bit generator; normal
deviates come from numpy's ziggurat sampler. Both are fixed by numpy's stream
compatibility policy, so a seed reproduces the same TaskSet on every platform.
"""
import csv
import json
import logging
import math
import pathlib
import typing

import numpy as np

from .casts import float_from_text, float_to_text
from .costs import GMM_WEIGHT_ATOL
from .CoverError import ParseError, ValidationError
from .serialize import read_json, utf8_problem


log = logging.getLogger(__name__)

ArrayLike = typing.Union["TaskParams", np.ndarray, typing.Sequence[float]]


def _frozen_vector(v, what: str) -> np.ndarray:
    a = np.array(v, dtype=np.float64)
    if a.ndim != 1 or a.size < 1:
        raise ValidationError("%s must be a non-empty vector" % what, v)
    if not np.all(np.isfinite(a)):
        raise ValidationError("%s has non-finite entries" % what, v)
    a.setflags(write=False)
    return a


class TaskParams:
    """
    One task, identified with its parameter vector theta.
    """

    __slots__ = ["theta"]

    theta: np.ndarray

    def __init__(self, theta):
        if isinstance(theta, TaskParams):
            theta = theta.theta
        self.theta = _frozen_vector(theta, "theta")

    @property
    def d(self) -> int:
        return self.theta.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, TaskParams):
            return NotImplemented
        return np.array_equal(self.theta, other.theta)

    def __hash__(self):
        return hash(self.theta.tobytes())

    def __repr__(self):
        return "%s(%s)" % (self.__class__.__name__, self.theta.tolist())


def as_vector(v: ArrayLike) -> np.ndarray:
    if isinstance(v, TaskParams):
        return v.theta
    return np.asarray(v, dtype=np.float64)


class TaskSet:
    """
    An ordered, immutable collection of n tasks of common dimension d.

    `matrix` is the read-only n x d array of thetas, which is what every
    algorithm works on; `tasks` materializes TaskParams views.
    """

    def __init__(self, thetas, ids: typing.Optional[typing.Sequence[str]] = None):
        m = np.array(thetas, dtype=np.float64)
        if m.ndim == 1:
            # a flat sequence is n one-dimensional tasks
            m = m.reshape(-1, 1)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise ValidationError("a task set needs at least one task of dimension >= 1", thetas)
        if not np.all(np.isfinite(m)):
            bad = int(np.nonzero(~np.all(np.isfinite(m), axis=1))[0][0])
            raise ValidationError("task %d has non-finite entries" % bad, thetas)
        if ids is None:
            ids = [str(i) for i in range(m.shape[0])]
        ids = tuple(str(_) for _ in ids)
        if len(ids) != m.shape[0]:
            raise ValidationError("%d ids for %d tasks" % (len(ids), m.shape[0]), ids)
        if len(set(ids)) != len(ids):
            raise ValidationError("task ids are not unique", ids)
        m.setflags(write=False)
        self.matrix = m
        self.ids = ids

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    @property
    def tasks(self) -> typing.List[TaskParams]:
        return [TaskParams(row) for row in self.matrix]

    def __len__(self):
        return self.n

    def __getitem__(self, i: int) -> TaskParams:
        return TaskParams(self.matrix[i])

    def __iter__(self):
        return iter(self.tasks)

    def index_of(self, task_id: str) -> int:
        try:
            return self.ids.index(task_id)
        except ValueError:
            raise ValidationError("unknown task id %r" % task_id, task_id)

    def subset(self, indices: typing.Sequence[int]) -> "TaskSet":
        indices = list(indices)
        return TaskSet(self.matrix[indices], [self.ids[i] for i in indices])

    def __eq__(self, other) -> bool:
        if not isinstance(other, TaskSet):
            return NotImplemented
        return self.ids == other.ids and np.array_equal(self.matrix, other.matrix)

    def __repr__(self):
        return "%s(n=%d, d=%d)" % (self.__class__.__name__, self.n, self.d)


class GmmComponent:
    __slots__ = ["weight", "mean", "stddev"]

    def __init__(self, weight: float, mean, stddev):
        self.weight = float(weight)
        self.mean = _frozen_vector(mean, "mean")
        self.stddev = _frozen_vector(stddev, "stddev")
        if not 0.0 <= self.weight <= 1.0:
            raise ValidationError("weight %r is not a probability" % weight, weight)
        if self.mean.size != self.stddev.size:
            raise ValidationError("mean and stddev differ in length", (mean, stddev))
        if np.any(self.stddev <= 0):
            raise ValidationError("stddev entries must be positive", stddev)


class GmmSpec:
    """
    A mixture of axis-aligned Gaussians over task parameters.
    """

    def __init__(self, components: typing.Sequence[GmmComponent]):
        components = list(components)
        if not components:
            raise ValidationError("a mixture needs at least one component", components)
        d = components[0].mean.size
        for idx, c in enumerate(components):
            if c.mean.size != d:
                raise ValidationError("component %d has dimension %d, expected %d" % (idx, c.mean.size, d), c)
        total = math.fsum(c.weight for c in components)
        if abs(total - 1.0) > GMM_WEIGHT_ATOL:
            raise ValidationError("weights sum to %r, not 1" % total, components)
        self.components = tuple(components)

    @property
    def d(self) -> int:
        return self.components[0].mean.size

    @property
    def weights(self) -> np.ndarray:
        w = np.array([c.weight for c in self.components])
        return w / w.sum()

    @classmethod
    def from_dict(class_, doc) -> "GmmSpec":
        if not isinstance(doc, dict) or not isinstance(doc.get("components"), list):
            raise ValidationError("a mixture document needs a 'components' list", doc)
        components = []
        for idx, c in enumerate(doc["components"]):
            for field in ("weight", "mean", "stddev"):
                if not isinstance(c, dict) or field not in c:
                    raise ValidationError("component %d: missing field '%s'" % (idx, field), c)
            try:
                components.append(GmmComponent(c["weight"], c["mean"], c["stddev"]))
            except (TypeError, ValueError) as ex:
                raise ValidationError("component %d: %s" % (idx, ex), c)
        return class_(components)

    def to_dict(self) -> dict:
        return dict(
            components=[
                dict(weight=c.weight, mean=c.mean.tolist(), stddev=c.stddev.tolist())
                for c in self.components
            ]
        )


def load_gmm_spec(path) -> GmmSpec:
    path = pathlib.Path(path)
    doc = read_json(path)
    try:
        return GmmSpec.from_dict(doc)
    except ValidationError as ex:
        raise ParseError(str(ex), path=path)


def sample_tasks_with_labels(gmm: GmmSpec, n: int, seed: int) -> typing.Tuple[TaskSet, np.ndarray]:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValidationError("n must be a positive integer, got %r" % (n,), n)
    rng = np.random.default_rng(seed)
    labels = rng.choice(len(gmm.components), size=n, p=gmm.weights)
    noise = rng.standard_normal((n, gmm.d))
    means = np.stack([c.mean for c in gmm.components])
    stddevs = np.stack([c.stddev for c in gmm.components])
    thetas = means[labels] + stddevs[labels] * noise
    return TaskSet(thetas), labels


def sample_tasks(gmm: GmmSpec, n: int, seed: int) -> TaskSet:
    return sample_tasks_with_labels(gmm, n, seed)[0]


def _standardize(m: np.ndarray) -> np.ndarray:
    mean = m.mean(axis=0)
    std = m.std(axis=0)
    std[std == 0] = 1.0
    return (m - mean) / std


def _rows_from_csv(path: pathlib.Path) -> typing.Tuple[typing.List[str], typing.List[typing.List[float]], bool]:
    try:
        return _read_csv_rows(path)
    except UnicodeDecodeError as ex:
        raise ParseError(utf8_problem(ex), path=path)


def _read_csv_rows(path: pathlib.Path) -> typing.Tuple[typing.List[str], typing.List[typing.List[float]], bool]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header:
            raise ParseError("empty file", path=path)
        has_id = header[0].strip() == "id"
        width = len(header) - (1 if has_id else 0)
        if width < 1:
            raise ParseError("header names no coordinate columns", path=path, row=1)
        ids, rows = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError("expected %d fields, found %d" % (len(header), len(row)), path=path, row=line_no)
            if has_id:
                ids.append(row[0])
                row = row[1:]
            try:
                rows.append([float_from_text(_) for _ in row])
            except ValidationError as ex:
                raise ParseError(str(ex), path=path, row=line_no)
    return ids, rows, has_id


def _rows_from_json(path: pathlib.Path) -> typing.Tuple[typing.List[str], typing.List[typing.List[float]], bool]:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
        if not text.strip():
            raise ParseError("empty file", path=path)
        doc = json.loads(text)
    except json.JSONDecodeError as ex:
        raise ParseError("invalid JSON: %s" % ex, path=path)
    except UnicodeDecodeError as ex:
        raise ParseError(utf8_problem(ex), path=path)
    if not isinstance(doc, list):
        raise ParseError("expected a list of task records", path=path)
    ids, rows = [], []
    has_id = bool(doc) and all(isinstance(r, dict) and "id" in r for r in doc)
    width = None
    for idx, record in enumerate(doc):
        if not isinstance(record, dict) or not isinstance(record.get("theta"), list):
            raise ParseError("record needs a 'theta' list", path=path, row=idx)
        theta = record["theta"]
        if not all(isinstance(_, (int, float)) and not isinstance(_, bool) for _ in theta):
            raise ParseError("theta has non-numeric entries", path=path, row=idx)
        try:
            values = [float(_) for _ in theta]
        except OverflowError:
            values = [math.inf]
        if not all(math.isfinite(_) for _ in values):
            raise ParseError("theta has non-finite entries", path=path, row=idx)
        if width is None:
            width = len(theta)
        elif len(theta) != width:
            raise ParseError("theta has length %d, expected %d" % (len(theta), width), path=path, row=idx)
        if has_id:
            ids.append(str(record["id"]))
        rows.append(values)
    return ids, rows, has_id


def load_task_set(path, format: typing.Optional[str] = None, standardize: bool = False) -> TaskSet:
    """
    Read tasks from CSV (`id,x0,...,x{d-1}` header) or JSON
    (`[{"id": ..., "theta": [...]}, ...]`). Row order is preserved; ids are
    synthesized as row indices when absent. Embeddings are used as they are
    unless `standardize` rescales each dimension to zero mean, unit variance.
    """
    path = pathlib.Path(path)
    if format is None:
        format = "json" if path.suffix.lower() == ".json" else "csv"
    if format == "csv":
        ids, rows, has_id = _rows_from_csv(path)
    elif format == "json":
        ids, rows, has_id = _rows_from_json(path)
    else:
        raise ValidationError("unknown task file format %r" % format, format)
    if not rows:
        raise ParseError("no task rows", path=path)
    width = len(rows[0])
    if width < 1:
        raise ParseError("tasks have no coordinates", path=path, row=0)
    try:
        m = np.array(rows, dtype=np.float64)
        if standardize:
            m = _standardize(m)
        ts = TaskSet(m, ids if has_id else None)
    except ValidationError as ex:
        raise ParseError(str(ex), path=path)
    log.debug("loaded %d tasks of dimension %d from %s", ts.n, ts.d, path)
    return ts


def write_task_set(tasks: TaskSet, f: typing.TextIO, format: str = "csv") -> None:
    if format == "csv":
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["id"] + ["x%d" % s for s in range(tasks.d)])
        for task_id, row in zip(tasks.ids, tasks.matrix):
            writer.writerow([task_id] + [float_to_text(v) for v in row])
    elif format == "json":
        doc = [dict(id=task_id, theta=row.tolist()) for task_id, row in zip(tasks.ids, tasks.matrix)]
        json.dump(doc, f, indent=1)
        f.write("\n")
    else:
        raise ValidationError("unknown task file format %r" % format, format)


def save_task_set(tasks: TaskSet, path, format: typing.Optional[str] = None) -> None:
    path = pathlib.Path(path)
    if format is None:
        format = "json" if path.suffix.lower() == ".json" else "csv"
    if format not in ("csv", "json"):
        raise ValidationError("unknown task file format %r" % format, format)
    with open(path, "w", encoding="utf-8", newline="") as f:
        write_task_set(tasks, f, format)


def linf_distance(a: ArrayLike, b: ArrayLike) -> float:
    va, vb = as_vector(a), as_vector(b)
    if va.shape != vb.shape:
        raise ValidationError("dimension mismatch: %s vs %s" % (va.shape, vb.shape), (a, b))
    return float(np.max(np.abs(va - vb)))


def linf_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """
    Return the n x K matrix of max-norm distances between rows of `points`
    and rows of `centers`.
    """
    points = np.asarray(points, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, points.shape[1])
    return np.max(np.abs(points[:, None, :] - centers[None, :, :]), axis=2)


def required_sample_size(alpha: float, beta: float) -> int:
    """
    Number of i.i.d. tasks after which the greedy intersection cover carries
    its distributional guarantee: ceil(9 ln(5/alpha) / (2 beta^2)).
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1), got %r" % alpha, alpha)
    if not 0.0 < beta < 1.0:
        raise ValidationError("beta must lie in (0, 1), got %r" % beta, beta)
    return int(math.ceil(9.0 * math.log(5.0 / alpha) / (2.0 * beta * beta)))
