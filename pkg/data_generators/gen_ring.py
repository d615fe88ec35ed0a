import numpy as np


def gen_ring(n, d, rng, center=None, radius=1.0, thickness=0.05, clusters=4, cluster_spread=0.2):
    """Points clustered at evenly spaced angles on a ring in the first two coordinates.

    Extra coordinates are Gaussian with standard deviation thickness.
    """
    if d < 2:
        raise ValueError("Ring data needs at least two dimensions")
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float).reshape(d)
    anchors = 2.0 * np.pi * rng.integers(0, clusters, size=n) / clusters
    angles = anchors + cluster_spread * rng.standard_normal(n)
    radii = radius + thickness * rng.standard_normal(n)
    points = thickness * rng.standard_normal((n, d))
    points[:, 0] = radii * np.cos(angles)
    points[:, 1] = radii * np.sin(angles)
    return points + center
