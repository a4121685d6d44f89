import numpy as np
import pytest

from shrinklab import symfun as sf


def catalog(n):
    """Representative members of every catalog family valid in dimension n."""
    fs = [sf.ek_root(k) for k in range(1, n + 1)]
    fs += [sf.quotient(k, l) for k in range(2, n + 1) for l in range(1, k)]
    fs += [sf.power_mean(r) for r in (-2.0, -1.0, -0.5, 0.5, 1.0, 2.0)]
    fs += [
        sf.combo((0.3, 0.7), (sf.ek_root(2), sf.power_mean(-1.0))),
        sf.geomean((0.25, 0.75), (sf.ek_root(n), sf.power_mean(1.0))),
        sf.dual(sf.quotient(2, 1)),
        sf.dual(sf.power_mean(2.0)),
        sf.scaled(2.5, sf.ek_root(2)),
    ]
    return fs


def catalog_ids(n):
    return [f.spec() for f in catalog(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
