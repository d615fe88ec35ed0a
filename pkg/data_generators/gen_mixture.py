import numpy as np


def gen_mixture(n, d, rng, centers=None, scale=1.0, weights=None, components=3, spread=10.0):
    """Gaussian mixture; centers are drawn from [0, spread]^d when not given."""
    if centers is None:
        centers = rng.uniform(0.0, spread, size=(components, d))
    centers = np.asarray(centers, dtype=float).reshape(-1, d)
    if weights is None:
        weights = np.full(len(centers), 1.0 / len(centers))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(centers),) or np.any(weights < 0) or not weights.sum() > 0:
        raise ValueError(f"Mixture weights must be {len(centers)} nonnegative numbers with a positive sum")
    labels = rng.choice(len(centers), size=n, p=weights / weights.sum())
    return centers[labels] + scale * rng.standard_normal((n, d))
