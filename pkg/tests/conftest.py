import numpy as np
import pytest

from egrd.basis import pca_train
from egrd.grid import AxisSpec, GrdGrid, desk_axes
from egrd.synth import SynthParams, generate


@pytest.fixture(scope="session")
def desk():
    return desk_axes()


@pytest.fixture(scope="session")
def desk_corpus(desk):
    return generate(SynthParams(seed=7, count=50, axes=desk))


@pytest.fixture(scope="session")
def desk_basis(desk_corpus):
    return pca_train(desk_corpus, 20)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def small_axes(nb=3, nr=2) -> AxisSpec:
    return AxisSpec(tuple(100.0 * (i + 1) for i in range(nb)), tuple(400.0 + 100 * j for j in range(nr)))


def monotone_grid(axes: AxisSpec, rng) -> GrdGrid:
    """Random valid grid: cumulative positive steps, scaled into [0, 100]."""
    nb, nr = axes.shape
    steps = rng.uniform(0.1, 1.0, size=(nb, nr))
    vals = np.cumsum(steps, axis=0)
    vals[-1] = np.maximum.accumulate(vals[-1])
    vals = 90.0 * vals / vals.max()
    # keep the resolution rule at the top row after scaling
    vals[-1] = np.maximum.accumulate(vals[-1])
    return GrdGrid(axes, vals)
