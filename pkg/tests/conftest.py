import numpy as np

from collapse_lab.model import Params, ParticleState


def random_state(rng, n: int, log_lo: float = -2.0, log_hi: float = 1.0,
                 zero_mean: bool = True) -> ParticleState:
    """Random increasing configuration with log-uniform gaps."""
    gaps = 10.0 ** rng.uniform(log_lo, log_hi, n - 1)
    x = np.concatenate(([0.0], np.cumsum(gaps)))
    if zero_mean:
        x = x - np.mean(x)
    return ParticleState(x)


def random_params(rng, n: int, gamma=None) -> Params:
    if gamma is None:
        gamma = rng.uniform(0.1, 0.9)
    return Params(gamma=float(gamma), mass=float(rng.uniform(0.5, 3.0)), n=n)
