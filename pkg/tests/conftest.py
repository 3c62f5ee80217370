import math

import numpy as np
import pytest

from gibbsperc.model import Potential


def count_law(z: float, pot: Potential, n_max: int = 7, draws: int = 100_000, seed: int = 0):
    """Law of ``(#plus, #minus)`` for the free-boundary continuum Ising model on the unit square.

    ``P(a, b)`` is proportional to ``z^(a+b) / (a! b!) * E[exp(-H)]`` with the
    expectation over independent uniform positions, estimated by plain Monte
    Carlo.  States with more than ``n_max`` points are dropped.
    """
    rng = np.random.default_rng(seed)
    w = {}
    for a in range(n_max + 1):
        for b in range(n_max + 1 - a):
            if a == 0 or b == 0:
                e = 1.0
            else:
                x = rng.random((draws, a, 2))
                y = rng.random((draws, b, 2))
                d = np.linalg.norm(x[:, :, None, :] - y[:, None, :, :], axis=3)
                e = float(np.exp(-pot.of_distance(d).sum(axis=(1, 2))).mean())
            w[(a, b)] = z ** (a + b) / math.factorial(a) / math.factorial(b) * e
    total = sum(w.values())
    return {k: v / total for k, v in w.items()}


@pytest.fixture(scope="session")
def unit_square_law():
    return count_law(1.0, Potential.soft())


def chisquare_against(law: dict, samples, min_expected: float = 5.0):
    """Chi-square p-value of observed ``(a, b)`` counts against ``law`` (small bins pooled)."""
    from scipy import stats

    n = len(samples)
    obs = {}
    for s in samples:
        obs[s] = obs.get(s, 0) + 1
    keys = sorted(law, key=lambda k: -law[k])
    o, e = [], []
    rest_o, rest_e = 0, 0.0
    for k in keys:
        if law[k] * n >= min_expected:
            o.append(obs.pop(k, 0))
            e.append(law[k] * n)
        else:
            rest_o += obs.pop(k, 0)
            rest_e += law[k] * n
    rest_o += sum(obs.values())
    rest_e = max(rest_e, 1e-12)
    o.append(rest_o)
    e.append(rest_e)
    e = np.array(e) * n / sum(e)
    return stats.chisquare(o, e).pvalue
