"""k-medoids (PAM) clustering and gap-statistic choice of the cluster count."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist


@dataclass(frozen=True)
class PamResult:
    medoids: np.ndarray  # indices into the input points
    labels: np.ndarray  # position of each point's medoid within ``medoids``
    cost: float
    cost_history: tuple[float, ...]

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


def _nearest_two(dist: np.ndarray, medoids: np.ndarray):
    dm = dist[medoids]  # (k, n)
    if len(medoids) == 1:
        return np.zeros(dist.shape[0], dtype=int), dm[0], np.full(dist.shape[0], np.inf)
    order = np.argsort(dm, axis=0, kind="stable")
    nearest = order[0]
    cols = np.arange(dist.shape[0])
    return nearest, dm[nearest, cols], dm[order[1], cols]


def pam_from_distances(dist: np.ndarray, k: int, max_iter: int = 1000) -> PamResult:
    """PAM on a precomputed symmetric distance matrix.

    BUILD picks medoids greedily; SWAP then applies the best improving
    (medoid, non-medoid) exchange until none lowers the total distance.
    Ties are resolved towards lower indices, so results are deterministic.
    """
    n = dist.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")

    medoids = [int(np.argmin(dist.sum(axis=1)))]
    d1 = dist[medoids[0]].copy()
    for _ in range(1, k):
        gain = np.maximum(d1[None, :] - dist, 0.0).sum(axis=1)
        gain[medoids] = -np.inf
        h = int(np.argmax(gain))
        medoids.append(h)
        d1 = np.minimum(d1, dist[h])
    med = np.array(medoids)

    history = []
    tol = 1e-12 * max(1.0, float(dist.max()))
    for _ in range(max_iter):
        nearest, d1, d2 = _nearest_two(dist, med)
        history.append(float(d1.sum()))
        near_h = np.minimum(dist, d1[None, :])
        base = (near_h - d1[None, :]).sum(axis=1)
        correction = (np.minimum(dist, d2[None, :]) - near_h) @ np.eye(k)[nearest]
        delta = base[:, None] + correction  # (candidate h, medoid slot i)
        delta[med, :] = np.inf
        h, i = np.unravel_index(int(np.argmin(delta)), delta.shape)
        if delta[h, i] >= -tol:
            break
        med = med.copy()
        med[i] = h

    nearest, d1, _ = _nearest_two(dist, med)
    nearest[med] = np.arange(k)
    cost = float(dist[med[nearest], np.arange(n)].sum())
    return PamResult(med, nearest, cost, tuple(history))


def pam_kmedoids(points: np.ndarray, k: int) -> PamResult:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    return pam_from_distances(cdist(points, points), k)


def within_dispersion(points: np.ndarray, labels: np.ndarray) -> float:
    """Sum over clusters of pairwise squared distances / (2 * cluster size)."""
    total = 0.0
    for lab in np.unique(labels):
        x = points[labels == lab]
        total += float(((x - x.mean(axis=0)) ** 2).sum())
    return total


def squared_distances(x: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances through the Gram matrix.

    Several times faster than ``cdist`` on long curves; the cancellation error
    (about 1e-7 relative) is harmless for dispersion comparisons.
    """
    norms = np.einsum("ij,ij->i", x, x)
    sq = norms[:, None] + norms[None, :] - 2.0 * (x @ x.T)
    np.maximum(sq, 0.0, out=sq)
    np.fill_diagonal(sq, 0.0)
    return sq


def dispersion_from_sq(sq_dist: np.ndarray, labels: np.ndarray) -> float:
    """``within_dispersion`` from a matrix of squared pairwise distances."""
    onehot = np.eye(labels.max() + 1)[labels]
    sizes = onehot.sum(axis=0)
    per_cluster = (onehot * (sq_dist @ onehot)).sum(axis=0)
    return float(np.sum(per_cluster[sizes > 0] / (2.0 * sizes[sizes > 0])))


@dataclass(frozen=True)
class GapResult:
    k: int
    ks: np.ndarray
    gap: np.ndarray
    s: np.ndarray
    log_w: np.ndarray


def gap_statistic(
    points: np.ndarray, k_max: int = 10, n_refs: int = 50, seed: int | None = 0
) -> GapResult:
    """Gap statistic with uniform bounding-box references and PAM as clusterer.

    The chosen ``k`` is the smallest with ``gap[k] >= gap[k+1] - s[k+1]``.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    distinct = len(np.unique(x, axis=0))
    # k = n puts every point on its own medoid: zero dispersion for data and references alike
    top = max(1, min(k_max, distinct if distinct < n else n - 1))
    ks = np.arange(1, top + 1)
    if distinct == 1:
        zero = np.zeros(1)
        return GapResult(1, ks, zero, zero, np.array([-np.inf]))

    def log_dispersions(data: np.ndarray) -> np.ndarray:
        sq = squared_distances(data)
        dist = np.sqrt(sq)
        out = np.empty(len(ks))
        for idx, k in enumerate(ks):
            res = pam_from_distances(dist, int(k))
            with np.errstate(divide="ignore"):
                out[idx] = np.log(dispersion_from_sq(sq, res.labels))
        return out

    log_w = log_dispersions(x)
    rng = np.random.default_rng(seed)
    lo, hi = x.min(axis=0), x.max(axis=0)
    ref = np.empty((n_refs, len(ks)))
    for b in range(n_refs):
        sample = lo + (hi - lo) * rng.random((n, x.shape[1]))
        ref[b] = log_dispersions(sample)
    gap = ref.mean(axis=0) - log_w
    s = ref.std(axis=0) * np.sqrt(1.0 + 1.0 / n_refs)

    chosen = int(ks[-1])
    for idx in range(len(ks) - 1):
        if gap[idx] >= gap[idx + 1] - s[idx + 1]:
            chosen = int(ks[idx])
            break
    return GapResult(chosen, ks, gap, s, log_w)


def gap_optimal_k(
    points: np.ndarray, k_max: int = 10, n_refs: int = 50, seed: int | None = 0
) -> int:
    return gap_statistic(points, k_max, n_refs, seed).k
