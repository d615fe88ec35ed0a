import numpy as np


def gen_walk(n, d, rng, steps=50, step_scale=0.02, low=0.0, high=1.0):
    """End points of Gaussian random walks started uniformly in [low, high]^d, reflected into the box."""
    start = rng.uniform(low, high, size=(n, d))
    moves = step_scale * rng.standard_normal((steps, n, d)).sum(axis=0)
    span = high - low
    folded = np.mod(start + moves - low, 2.0 * span)
    return low + np.where(folded > span, 2.0 * span - folded, folded)
