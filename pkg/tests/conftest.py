import math

import numpy as np
import pytest

from kamtori.series import FTSeries, Grading

GOLDEN = (1 + math.sqrt(5)) / 2


@pytest.fixture
def g11():
    return Grading(d=1, l=1, K_q=8, K_phi=8, D=4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_real_series(grading, r, s, rng, n_modes=6, max_k=3, max_phi=2,
                       max_deg=2, scale=1.0):
    """Random series with the reality symmetry, bounded mode content."""
    f = FTSeries.zero(grading, r, s)
    for _ in range(n_modes):
        j = tuple(int(rng.integers(-max_phi, max_phi + 1))
                  for _ in range(grading.l))
        k = tuple(int(rng.integers(-max_k, max_k + 1))
                  for _ in range(grading.d))
        alpha = [0] * grading.nz
        deg = int(rng.integers(0, max_deg + 1))
        for _ in range(deg):
            alpha[int(rng.integers(0, grading.nz))] += 1
        c = complex(rng.standard_normal(), rng.standard_normal()) * scale
        key = (j, k, tuple(alpha))
        mirror = (tuple(-v for v in j), tuple(-v for v in k), tuple(alpha))
        f.terms[key] = f.terms.get(key, 0.0) + c
        f.terms[mirror] = f.terms.get(mirror, 0.0) + np.conj(c)
    f._prune()
    return f
