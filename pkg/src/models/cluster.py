"""K-means over latent codes and the deep-clustering loss term."""

import logging
from dataclasses import dataclass, field

import numpy as np

from src.errors import ClusteringError, ConfigurationError, NumericalError
from src.models.tensor import Tensor, sq_err_loss

logger = logging.getLogger(__name__)

OBJECTIVE_TOLERANCE = 1e-9


@dataclass
class ClusterModel:
    centers: np.ndarray
    assignments: np.ndarray
    objective: float
    history: list = field(default_factory=list)
    iterations: int = 0
    fitted_at: int = 0

    def __repr__(self):
        return f'<ClusterModel K={self.k} objective={self.objective:.6g}>'

    @property
    def k(self):
        return int(self.centers.shape[0])


def squared_distances(points, centers):
    """(n, K) matrix of squared Euclidean distances with a fixed reduction order."""
    diff = points[:, None, :] - centers[None, :, :]
    return np.sum(diff * diff, axis=2)


def _assign(points, centers):
    # argmin returns the first minimum, so ties go to the lowest center index
    dists = squared_distances(points, centers)
    labels = np.argmin(dists, axis=1)
    return labels, dists[np.arange(points.shape[0]), labels]


def _objective(points, centers, labels):
    diff = points - centers[labels]
    return float(np.sum(diff * diff))


def _update_centers(points, labels, centers):
    updated = centers.copy()
    labels = labels.copy()
    for c in range(centers.shape[0]):
        members = labels == c
        if np.any(members):
            updated[c] = points[members].mean(axis=0)
    # empty clusters take the point farthest from its current center as a singleton
    for c in range(centers.shape[0]):
        if np.any(labels == c):
            continue
        residual = np.sum((points - updated[labels]) ** 2, axis=1)
        donors = np.array([np.sum(labels == labels[i]) > 1 for i in range(points.shape[0])])
        residual = np.where(donors, residual, -1.0)
        far = int(np.argmax(residual))
        logger.debug('k-means: cluster %d empty, reseeding from point %d', c, far)
        labels[far] = c
        updated[c] = points[far]
    return updated


def initial_centers(latents, k, seed):
    """K latents sampled without replacement."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    picks = rng.choice(latents.shape[0], size=k, replace=False)
    return latents[np.sort(picks)].copy()


def kmeans_fit(latents, k, init_centers=None, seed=None, max_lloyd_iters=100):
    """
    Lloyd's algorithm from ``init_centers`` (or seeded sampling of the latents).

    The objective is recorded after every assignment step and must never
    increase; stops when assignments are stable or after ``max_lloyd_iters``.
    """
    points = np.asarray(latents, dtype=np.float64)
    if points.ndim != 2:
        raise ConfigurationError(f'latents must be a 2-D array, got shape {points.shape}')
    n = points.shape[0]
    if k < 1 or k > n:
        raise ConfigurationError(f'need 1 <= K <= n, got K={k} for n={n}')
    if not np.all(np.isfinite(points)):
        raise NumericalError('k-means received non-finite latent values')

    if init_centers is None:
        centers = initial_centers(points, k, seed)
    else:
        centers = np.array(init_centers, dtype=np.float64)
        if centers.shape != (k, points.shape[1]):
            raise ConfigurationError(
                f'init centers shape {centers.shape} does not match ({k}, {points.shape[1]})')

    labels, _ = _assign(points, centers)
    history = [_objective(points, centers, labels)]
    iterations = 0
    for _ in range(max_lloyd_iters):
        iterations += 1
        centers = _update_centers(points, labels, centers)
        new_labels, _ = _assign(points, centers)
        objective = _objective(points, centers, new_labels)
        if objective > history[-1] + OBJECTIVE_TOLERANCE * max(1.0, abs(history[-1])):
            raise ClusteringError(
                f'k-means objective increased from {history[-1]} to {objective}')
        history.append(objective)
        stable = np.array_equal(new_labels, labels)
        labels = new_labels
        if stable:
            break

    return ClusterModel(centers=centers, assignments=labels, objective=history[-1],
                        history=history, iterations=iterations)


def nearest_center(z, model):
    """Nearest center to ``z`` and its index; ties go to the lowest index."""
    if model is None or model.centers.shape[0] == 0:
        raise ClusteringError('cluster model has no centers')
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    points = np.atleast_2d(z)
    if points.shape[1] != model.centers.shape[1]:
        raise ConfigurationError(
            f'latent dimension {points.shape[1]} does not match centers {model.centers.shape[1]}')
    labels, _ = _assign(points, model.centers)
    if single:
        return model.centers[labels[0]].copy(), int(labels[0])
    return model.centers[labels].copy(), labels


def dc_loss(z, eta):
    """Half squared distance to the nearest center; eta gets no gradient."""
    z = z if isinstance(z, Tensor) else Tensor(z)
    eta = np.asarray(eta.data if isinstance(eta, Tensor) else eta, dtype=np.float64)
    if z.shape != eta.shape:
        raise ConfigurationError(f'dc_loss dimension mismatch: z {z.shape} vs eta {eta.shape}')
    return sq_err_loss(z, Tensor(eta))
