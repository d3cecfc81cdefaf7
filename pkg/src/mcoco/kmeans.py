import numpy as np


def _sq_dists(x, c):
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _plusplus(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with chosen centers
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centers[j] = x[idx]
        closest = np.minimum(closest, _sq_dists(x, centers[j:j + 1])[:, 0])
    return centers


def _lloyd(x, centers, max_iter, tol):
    k = centers.shape[0]
    prev = np.inf
    for _ in range(max_iter):
        d = _sq_dists(x, centers)
        assign = d.argmin(1)
        wcss = d[np.arange(len(x)), assign].sum()
        for j in range(k):
            members = assign == j
            if members.any():
                centers[j] = x[members].mean(0)
            else:
                # reseed an empty cluster at the point farthest from its center
                far = d[np.arange(len(x)), assign].argmax()
                centers[j] = x[far]
                assign[far] = j
                d[far, :] = 0.0
        if prev - wcss <= tol * max(prev, 1e-300) and np.isfinite(prev):
            break
        prev = wcss
    d = _sq_dists(x, centers)
    assign = d.argmin(1)
    return centers, assign, d[np.arange(len(x)), assign].sum()


def kmeans(x, k, n_restarts=10, max_iter=300, tol=1e-4, seed=0):
    """Lloyd's algorithm with k-means++ seeding; best of ``n_restarts`` by WCSS.

    Returns (centers, labels, wcss).
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds number of points N={n}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_restarts)):
        centers = _plusplus(x, k, rng)
        result = _lloyd(x, centers, max_iter, tol)
        if best is None or result[2] < best[2]:
            best = result
    return best
