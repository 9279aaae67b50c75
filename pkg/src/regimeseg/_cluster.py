"""Small deterministic k-means used to seed model initialization."""

import numpy as np


def kmeans_pp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding over rows of x."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[i] = x[rng.integers(n)]
        else:
            centers[i] = x[_weighted_pick(d2 / total, rng.random())]
        d2 = np.minimum(d2, ((x - centers[i]) ** 2).sum(axis=1))
    return centers


def _weighted_pick(p: np.ndarray, u: float) -> int:
    c = np.cumsum(p)
    return min(int(np.searchsorted(c, u * c[-1], side="left")), p.shape[0] - 1)


def kmeans(x: np.ndarray, k: int, rng: np.random.Generator, n_iters: int = 50):
    """Lloyd iterations from a k-means++ start; returns (labels, centers).

    Empty clusters are re-seeded to the point farthest from its center.
    """
    if k <= 1:
        return np.zeros(x.shape[0], dtype=np.int64), x.mean(axis=0, keepdims=True)
    centers = kmeans_pp_centers(x, k, rng)
    labels = np.zeros(x.shape[0], dtype=np.int64)
    for _ in range(n_iters):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        for j in range(k):
            mask = new_labels == j
            if mask.any():
                centers[j] = x[mask].mean(axis=0)
            else:
                worst = int(d2[np.arange(x.shape[0]), new_labels].argmax())
                centers[j] = x[worst]
                new_labels[worst] = j
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centers
