"""Ground-truth simulation of duration processes with exponential noise.

Serves as the oracle for fitting, forecasting, and coverage tests:
durations are mu_i * eps_i with eps_i ~ Exp(1) drawn from the package's
deterministic generator, and the latent mu path is returned alongside.
"""

from dataclasses import dataclass

import numpy as np

from duracd import _kernels as K
from duracd.acd import AcdParams
from duracd.data import DurationSeries
from duracd.errors import DataError
from duracd.rng import SplitMix64

__all__ = ["SimConfig", "simulate_acd"]


@dataclass
class SimConfig:
    params: AcdParams
    n: int
    burn_in: int = 1000
    seed: int = 0
    with_features: bool = False  # synthesize volume (lognormal) and side (fair coin)


def simulate_acd(config: SimConfig):
    """Simulate ``n`` durations after discarding ``burn_in`` of them.

    The recursion starts from the unconditional mean. Draw order, fixed
    for reproducibility: eps (n + burn_in), then volume normals (n),
    then side uniforms (n). Returns (series, mu_path).
    """
    params = config.params
    if not params.is_stationary():
        raise DataError(f"non-stationary parameters: persistence "
                        f"{params.persistence:.4f} >= 1")
    if config.n <= 0:
        raise DataError("n must be positive")
    rng = SplitMix64(config.seed)
    eps = rng.exponential(config.n + config.burn_in)
    presample = params.unconditional_mean()
    dt, mu = K.acd_simulate(params.omega, params.alphas, params.betas, eps, presample)
    dt = dt[config.burn_in:]
    mu = mu[config.burn_in:]
    features = None
    if config.with_features:
        volume = np.exp(rng.normal(config.n))
        side = np.where(rng.uniform(config.n) < 0.5, 1.0, -1.0)
        features = np.column_stack([dt, volume, side])
    series = DurationSeries(durations=dt, features=features, instrument="sim")
    return series, mu
