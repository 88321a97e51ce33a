import logging

from sklearn.cluster import KMeans

from .cover_core import CoverSolution, _check_epsilon, _check_k, coverage_stats
from .task_space import TaskSet


log = logging.getLogger(__name__)


def kmeans_cover(tasks: TaskSet, epsilon: float, K: int, seed: int = 0) -> CoverSolution:
    """
    Lloyd's k-means centers (k-means++ seeding) scored with the max-norm
    epsilon coverage criterion.
    """
    epsilon = _check_epsilon(epsilon)
    K = min(_check_k(K), tasks.n)
    km = KMeans(n_clusters=K, init="k-means++", n_init=10, random_state=seed)
    km.fit(tasks.matrix)
    log.debug("k-means inertia %.6g after %d iterations", km.inertia_, km.n_iter_)
    return coverage_stats(tasks, km.cluster_centers_, epsilon, "kmeans")
