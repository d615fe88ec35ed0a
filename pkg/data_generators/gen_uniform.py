def gen_uniform(n, d, rng, low=0.0, high=1.0):
    """Points drawn uniformly from the box [low, high]^d."""
    return rng.uniform(low, high, size=(n, d))
