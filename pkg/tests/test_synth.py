import json

import numpy as np
import pytest

from egrd.errors import StructureError
from egrd.grid import AxisSpec, desk_axes, flatten, validate_membership
from egrd.io import grid_to_dict
from egrd.synth import SynthParams, generate, surface


def test_every_surface_is_valid():
    for seed in (0, 1, 42):
        for g in generate(SynthParams(seed=seed, count=40)):
            assert validate_membership(g, 0).passed


def test_same_seed_same_bytes():
    a = generate(SynthParams(seed=5, count=6, axes=desk_axes()))
    b = generate(SynthParams(seed=5, count=6, axes=desk_axes()))
    assert [json.dumps(grid_to_dict(g)) for g in a] == [json.dumps(grid_to_dict(g)) for g in b]
    c = generate(SynthParams(seed=6, count=6, axes=desk_axes()))
    assert not np.array_equal(a[0].values, c[0].values)


def test_streams_are_per_surface():
    # Surface m does not depend on how many surfaces follow it.
    short = generate(SynthParams(seed=9, count=2, axes=desk_axes()))
    long = generate(SynthParams(seed=9, count=5, axes=desk_axes()))
    assert np.array_equal(short[1].values, long[1].values)


def test_step_limit():
    axes = AxisSpec((100.0, 200.0, 300.0), (400.0, 500.0))
    z = surface(axes, [60.0, 80.0], [1e4, 1e4], 1.0)
    assert np.allclose(z, [[60.0, 80.0]] * 3, atol=1e-12)


def test_top_bitrate_hits_saturation():
    axes = desk_axes()
    q = np.linspace(70, 95, 6)
    z = surface(axes, q, np.full(6, 3e-4), 1.3)
    assert np.allclose(z[-1], q, atol=1e-12)


def test_resolution_crossover_occurs():
    # Low resolutions rise faster, so they can beat the top resolution at low rates.
    grids = generate(SynthParams(seed=3, count=30))
    assert any(g.values[0, 0] > g.values[0, -1] for g in grids)


def test_corpus_rank():
    grids = generate(SynthParams(seed=11, count=10, axes=desk_axes()))
    data = np.stack([flatten(g) for g in grids])
    assert np.linalg.matrix_rank(data - data.mean(axis=0)) >= 3


@pytest.mark.parametrize(
    "kwargs",
    [{"count": 0}, {"top_quality": (50.0, 120.0)}, {"gamma": (0.0, 1.0)}, {"rise_rate": (2.0, 1.0)}],
)
def test_parameter_ranges_checked(kwargs):
    with pytest.raises(StructureError):
        SynthParams(**kwargs)


def test_surface_rejects_decreasing_saturation():
    with pytest.raises(StructureError):
        surface(desk_axes(), [90, 80, 85, 86, 87, 88], np.full(6, 1e-3), 1.0)
