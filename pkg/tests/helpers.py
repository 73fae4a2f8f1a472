"""Random instance generators shared by the test modules."""
import numpy as np

from robustmech.mechanism import FiniteMechanism


def random_mechanism(rng, I, k, pay_low=-0.3, pay_high=1.0):
    """Feasible mechanism with opt-out at message 0 and arbitrary payments."""
    shape = (I,) + (k + 1,) * I
    q = rng.random(shape)
    P = rng.uniform(pay_low, pay_high, shape)
    for i in range(I):
        idx = (i,) + (slice(None),) * i + (0,)
        q[idx] = 0.0
        P[idx] = 0.0
    tot = q.sum(axis=0)
    q = q / np.maximum(tot, 1e-12) * rng.random(tot.shape)
    return FiniteMechanism(q, P)


def random_rates(rng, I, k, scale=1.0):
    alpha = rng.exponential(scale, (I, k + 1, k + 1))
    alpha *= rng.random(alpha.shape) < 0.7
    return alpha
