import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import PchipInterpolator

from egrd.errors import AxisMismatchError, DomainError, StructureError
from egrd.grid import (
    AxisSpec,
    GrdGrid,
    SampleSet,
    default_axes,
    desk_axes,
    flatten,
    ingest_raw_curves,
    linf_error,
    rmse,
    unflatten,
    validate_membership,
)
from egrd.synth import SynthParams, generate

from conftest import monotone_grid, small_axes


def test_default_axes_labels():
    axes = default_axes()
    assert axes.bitrates[0] == 100 and axes.bitrates[-1] == 9000 and len(axes.bitrates) == 90
    assert axes.resolutions == (400, 480, 640, 865, 1469, 2203)
    assert axes.size == 540
    assert desk_axes().size == 54


@pytest.mark.parametrize(
    "bitrates, resolutions",
    [((100.0,), (400.0, 500.0)), ((100.0, 100.0), (400.0,)), ((200.0, 100.0), (400.0,)), ((0.0, 100.0), (400.0,))],
)
def test_axis_spec_rejects_bad_labels(bitrates, resolutions):
    with pytest.raises(StructureError):
        AxisSpec(bitrates, resolutions)


def test_axis_label_lookup():
    axes = small_axes()
    assert axes.bitrate_index(200) == 1
    assert axes.resolution_index(500) == 1
    with pytest.raises(DomainError):
        axes.bitrate_index(150)
    assert AxisSpec.from_dict(axes.to_dict()) == axes


def test_grid_rejects_bad_shapes():
    axes = small_axes()
    with pytest.raises(StructureError):
        GrdGrid(axes, np.zeros((2, 2)))
    with pytest.raises(StructureError):
        GrdGrid(axes, [[0, 1], [np.nan, 2], [3, 4]])


def test_grid_values_are_read_only():
    g = GrdGrid(small_axes(), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        g.values[0, 0] = 1.0


def test_linear_ramp_passes():
    axes = small_axes(5, 3)
    vals = np.repeat((100.0 * np.arange(5) / 4)[:, None], 3, axis=1)
    assert validate_membership(GrdGrid(axes, vals)).passed


def test_single_bitrate_drop_is_located():
    axes = small_axes(5, 3)
    vals = np.repeat((100.0 * np.arange(5) / 4)[:, None], 3, axis=1)
    vals[3, 0] = vals[2, 0] - 1
    report = validate_membership(GrdGrid(axes, vals), tolerance=0)
    assert not report.passed
    assert [(v.kind, v.location) for v in report.violations] == [("bitrate", (3, 0))]
    assert report.violations[0].amount == pytest.approx(1.0)


def test_resolution_rule_only_at_top_bitrate():
    axes = small_axes(3, 2)
    vals = np.array([[10.0, 5.0], [20.0, 15.0], [30.0, 40.0]])
    assert validate_membership(GrdGrid(axes, vals), 0).passed
    vals[2] = [40.0, 30.0]
    report = validate_membership(GrdGrid(axes, vals), 0)
    assert [v.kind for v in report.violations] == ["resolution"]
    assert report.violations[0].location == (2, 1)


def test_range_rule_and_tolerance():
    axes = small_axes(2, 1)
    g = GrdGrid(axes, [[-1e-7], [100 + 1e-7]])
    assert validate_membership(g, 1e-6).passed
    report = validate_membership(g, 0)
    assert report.count("range") == 2
    with pytest.raises(ValueError):
        validate_membership(g, -1)


def test_synth_output_passes_pairwise_oracle():
    for g in generate(SynthParams(seed=42, count=20)):
        v = g.values
        ok = all(v[i + 1, j] >= v[i, j] for i in range(v.shape[0] - 1) for j in range(v.shape[1]))
        ok &= all(v[-1, j + 1] >= v[-1, j] for j in range(v.shape[1] - 1))
        ok &= bool(np.all((v >= 0) & (v <= 100)))
        assert ok and validate_membership(g, 0).passed


def test_membership_invariant_to_bitrate_scaling(rng):
    axes = small_axes(4, 3)
    vals = rng.uniform(0, 100, (4, 3))
    scaled = AxisSpec(tuple(3.7 * b for b in axes.bitrates), axes.resolutions)
    a = validate_membership(GrdGrid(axes, vals))
    b = validate_membership(GrdGrid(scaled, vals))
    assert a.violations == b.violations


def test_rmse_and_linf_examples(rng):
    axes = small_axes()
    a = GrdGrid(axes, rng.uniform(0, 100, (3, 2)))
    assert rmse(a, a) == 0 and linf_error(a, a) == 0
    b = GrdGrid(axes, a.values + 2)
    assert rmse(a, b) == pytest.approx(2.0)
    c = a.values.copy()
    c[1, 1] += 7
    assert linf_error(a, GrdGrid(axes, c)) == pytest.approx(7.0)
    d = GrdGrid(axes, rng.uniform(0, 100, (3, 2)))
    diff = [(a.values[i, j] - d.values[i, j]) ** 2 for i in range(3) for j in range(2)]
    assert rmse(a, d) == pytest.approx((sum(diff) / 6) ** 0.5, rel=1e-14)
    assert linf_error(a, d) == pytest.approx(max(abs(x) for x in (a.values - d.values).ravel()))


def test_cross_axis_ops_refuse():
    a = GrdGrid(small_axes(3, 2), np.zeros((3, 2)))
    b = GrdGrid(AxisSpec((1.0, 2.0, 3.0), (400.0, 500.0)), np.zeros((3, 2)))
    with pytest.raises(AxisMismatchError):
        rmse(a, b)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=6, max_size=6), st.lists(st.floats(0, 100), min_size=6, max_size=6))
def test_rmse_linf_bounds(xs, ys):
    axes = small_axes()
    a, b = GrdGrid(axes, np.reshape(xs, (3, 2))), GrdGrid(axes, np.reshape(ys, (3, 2)))
    r, l = rmse(a, b), linf_error(a, b)
    assert r <= l + 1e-12
    assert l <= np.sqrt(6) * r + 1e-9


def test_flatten_order_and_round_trip(rng):
    axes = small_axes(2, 2)
    g = GrdGrid(axes, [[1, 2], [3, 4]])
    assert flatten(g).tolist() == [1, 2, 3, 4]
    h = GrdGrid(small_axes(3, 2), rng.uniform(0, 100, (3, 2)))
    assert np.array_equal(unflatten(flatten(h), h.axes).values, h.values)
    with pytest.raises(StructureError):
        unflatten(np.zeros(5), h.axes)


def test_sample_set_invariants():
    axes = small_axes()
    with pytest.raises(DomainError):
        SampleSet(axes, ((3, 0, 10.0),))
    with pytest.raises(StructureError):
        SampleSet(axes, ((0, 0, 10.0), (0, 0, 11.0)))
    with pytest.raises(StructureError):
        SampleSet(axes, ((0, 0, 101.0),))
    g = GrdGrid(axes, [[1, 2], [3, 4], [5, 6]])
    s = SampleSet.from_grid(g, [5, 0])
    assert s.flat_indices.tolist() == [5, 0]
    assert s.qualities.tolist() == [6, 1]


# -- ingestion -------------------------------------------------------------------


def test_ingest_curve_on_grid_is_copied():
    axes = AxisSpec((100.0, 200.0, 300.0, 400.0), (400.0,))
    out = ingest_raw_curves([[(100, 10), (200, 20), (300, 25), (400, 40)]], axes)
    assert out.values[:, 0].tolist() == [10, 20, 25, 40]


def test_ingest_pads_final_quality():
    axes = default_axes().single_resolution(0)
    curve = [(100, 40), (1000, 70), (3000, 88), (5000, 93)]
    out = ingest_raw_curves([curve], axes).values[:, 0]
    above = np.asarray(axes.bitrates) > 5000
    assert np.all(out[above] == 93)


def test_ingest_matches_reference_pchip():
    axes = default_axes().single_resolution(0)
    x = np.array([100.0, 500, 1500, 4000, 9000])
    z = 95 / (1 + np.exp(-(np.log10(x) - 2.8) * 4))
    out = ingest_raw_curves([list(zip(x, z))], axes).values[:, 0]
    ref = PchipInterpolator(x, z)(np.asarray(axes.bitrates))
    assert np.max(np.abs(out - ref)) < 1e-12


def test_ingest_clamps_noise_and_keeps_knots():
    axes = AxisSpec((100.0, 200.0, 300.0, 400.0, 500.0), (400.0,))
    curve = [(100, 10), (200, 30), (300, 28), (400, 35), (500, 36)]
    out = ingest_raw_curves([curve], axes)
    assert out.values[:, 0].tolist() == [10, 30, 30, 35, 36]
    assert validate_membership(out, 0).passed


def test_ingest_errors():
    axes = AxisSpec((100.0, 200.0), (400.0,))
    with pytest.raises(StructureError):
        ingest_raw_curves([[(100, 10)]], axes)
    with pytest.raises(DomainError):
        ingest_raw_curves([[(20, 10), (50, 20)]], axes)
    with pytest.raises(DomainError):
        ingest_raw_curves([[(150, 10), (300, 20)]], axes)
    with pytest.raises(StructureError):
        ingest_raw_curves([[(100, 10), (200, 20)]] * 2, axes)


def test_random_valid_grid_helper(rng):
    axes = small_axes(9, 6)
    for _ in range(20):
        assert validate_membership(monotone_grid(axes, rng), 0).passed
