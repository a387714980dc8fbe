import numpy as np
import pytest

from geeopt.model import Scenario


def tiny(alpha, xi=0.0, noise=1.0, beta=None, mu=1.0, p_static=1.0, p_max=1.0, r_min=0.0, bandwidth=1.0):
    """Hand-built scenario; scalars broadcast to the shapes implied by ``alpha``."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    K, N = alpha.shape
    if beta is None:
        beta = np.zeros((K, K, N))
    return Scenario(
        bandwidth=bandwidth,
        noise=np.broadcast_to(np.asarray(noise, dtype=float), (N,)),
        alpha=alpha,
        xi=np.broadcast_to(np.asarray(xi, dtype=float), (K, N)),
        beta=beta,
        mu=np.broadcast_to(np.asarray(mu, dtype=float), (K, N)),
        p_static=np.broadcast_to(np.asarray(p_static, dtype=float), (K,)) / K,
        p_max=np.broadcast_to(np.asarray(p_max, dtype=float), (K,)),
        r_min=np.broadcast_to(np.asarray(r_min, dtype=float), (K,)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
