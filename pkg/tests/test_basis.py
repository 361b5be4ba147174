import warnings

import numpy as np
import pytest

from egrd.basis import (
    EIGEN,
    EigenBasis,
    RankWarning,
    _open_coords,
    approximate,
    build_basis,
    explained_energy,
    pca_train,
    polynomial_basis,
    project,
    synthesize,
    trigonometric_basis,
)
from egrd.errors import AxisMismatchError, StructureError
from egrd.grid import AxisSpec, GrdGrid, desk_axes, flatten, rmse, unflatten

from conftest import small_axes


def _align(ref, got):
    return got * np.sign(ref @ got)


def _brute_pca(grids):
    data = np.stack([flatten(g) for g in grids])
    centered = data - data.mean(axis=0)
    w, v = np.linalg.eigh(centered.T @ centered / len(grids))
    return w[::-1], v[:, ::-1], data.mean(axis=0)


def test_identical_grids_have_no_variance():
    g = GrdGrid(small_axes(), [[1, 2], [3, 4], [5, 6]])
    with pytest.warns(RankWarning):
        b = pca_train([g, g, g], 1)
    assert b.n_max == 0 and b.truncated
    assert np.array_equal(b.mean, flatten(g))
    assert b.total_variance == 0


def test_two_point_pca():
    axes = small_axes()
    f0 = np.array([10.0, 20, 30, 40, 50, 60])
    v = np.array([1.0, -2, 0.5, 0, 3, 1])
    b = pca_train([unflatten(f0 + v, axes), unflatten(f0 - v, axes)], 1)
    assert np.allclose(b.mean, f0)
    assert np.allclose(abs(b.components[:, 0] @ v), np.linalg.norm(v))
    assert b.eigenvalues[0] == pytest.approx(v @ v)
    assert explained_energy(b, 1) == pytest.approx(1.0)


def test_matches_brute_force_on_small_grids(rng):
    axes = small_axes()
    grids = [GrdGrid(axes, rng.uniform(0, 100, (3, 2))) for _ in range(10)]
    w, v, mean = _brute_pca(grids)
    b = pca_train(grids, 6)
    assert np.allclose(b.mean, mean, atol=1e-12)
    assert np.allclose(b.eigenvalues, w, atol=1e-8)
    for k in range(6):
        assert np.max(np.abs(_align(b.components[:, k], v[:, k]) - b.components[:, k])) < 1e-8


@pytest.mark.parametrize("method", ["gram", "covariance"])
def test_routes_agree(desk_corpus, method):
    ref = pca_train(desk_corpus, 10)
    other = pca_train(desk_corpus, 10, method=method)
    assert np.allclose(ref.eigenvalues, other.eigenvalues, rtol=1e-9, atol=1e-9)
    assert np.max(np.abs(ref.components - other.components)) < 1e-8


def test_sign_convention(desk_basis):
    h = desk_basis.components
    pivots = np.argmax(np.abs(h), axis=0)
    assert np.all(h[pivots, np.arange(h.shape[1])] > 0)


def test_structure_invariants(desk_basis, desk_corpus):
    h = desk_basis.components
    assert np.allclose(h.T @ h, np.eye(h.shape[1]), atol=1e-8)
    assert np.all(np.diff(desk_basis.eigenvalues) <= 1e-12)
    assert np.allclose(desk_basis.mean, np.mean([flatten(g) for g in desk_corpus], axis=0))


def test_eigenvalue_sum_is_total_variance(desk_corpus):
    b = pca_train(desk_corpus, 49)
    assert b.eigenvalues.sum() == pytest.approx(b.total_variance, abs=1e-8)
    assert explained_energy(b, b.n_max) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        explained_energy(b, 0)


def test_rank_shortfall_warns(rng):
    axes = small_axes()
    base = rng.uniform(0, 100, 6)
    grids = [unflatten(base + t * np.arange(6), axes) for t in (0.0, 1.0, 2.0, 3.0)]
    with pytest.warns(RankWarning):
        b = pca_train(grids, 3)
    assert b.n_max == 1 and b.truncated


def test_training_argument_checks(desk_corpus):
    with pytest.raises(ValueError):
        pca_train(desk_corpus[:5], 5)
    with pytest.raises(StructureError):
        pca_train(desk_corpus[:1], 1)
    other = GrdGrid(small_axes(), np.zeros((3, 2)))
    with pytest.raises(AxisMismatchError):
        pca_train([desk_corpus[0], other], 1)


def test_permutation_invariance(desk_corpus):
    a = pca_train(desk_corpus, 8)
    b = pca_train(desk_corpus[::-1], 8)
    assert np.max(np.abs(a.components - b.components)) < 1e-8


def test_project_and_synthesize(desk_basis, rng):
    mean = desk_basis.mean_grid
    assert np.allclose(project(desk_basis, mean, 5).coefficients, 0, atol=1e-10)
    g = unflatten(desk_basis.mean + 3 * desk_basis.components[:, 1], desk_basis.axes)
    c = project(desk_basis, g, 4).coefficients
    assert np.allclose(c, [0, 3, 0, 0], atol=1e-10)
    coeffs = rng.normal(size=7)
    out = synthesize(desk_basis, coeffs)
    assert np.allclose(flatten(out), desk_basis.mean + desk_basis.components[:, :7] @ coeffs)
    assert np.array_equal(flatten(synthesize(desk_basis, [])), desk_basis.mean)
    with pytest.raises(ValueError):
        synthesize(desk_basis, np.zeros(desk_basis.n_max + 1))


def test_completeness_on_training_span(desk_corpus):
    b = pca_train(desk_corpus, 49)
    for g in desk_corpus[:5]:
        assert rmse(approximate(b, g, b.n_max), g) < 1e-9


def test_training_error_non_increasing(desk_corpus):
    b = pca_train(desk_corpus, 49)
    for g in desk_corpus[:10]:
        errs = [rmse(approximate(b, g, n), g) for n in range(b.n_max + 1)]
        assert all(e1 <= e0 + 1e-12 for e0, e1 in zip(errs, errs[1:]))


# -- fixed bases ---------------------------------------------------------------


def test_polynomial_constant_first():
    axes = desk_axes()
    b = polynomial_basis(axes, 1)
    assert np.allclose(np.abs(b.components[:, 0]), 1 / np.sqrt(axes.size))
    assert np.array_equal(b.mean, np.zeros(axes.size))


@pytest.mark.parametrize("builder", [polynomial_basis, trigonometric_basis])
def test_fixed_bases_orthonormal(builder):
    b = builder(desk_axes(), 20)
    assert np.allclose(b.components.T @ b.components, np.eye(20), atol=1e-10)


def test_polynomial_span_contains_quadratics(rng):
    axes = desk_axes()
    b = polynomial_basis(axes, 6)
    u = (np.asarray(axes.bitrates) - 1000) / 8000
    v = (np.asarray(axes.resolutions) - 400) / 1803
    U, V = np.meshgrid(u, v, indexing="ij")
    c = rng.normal(size=6)
    quad = c[0] + c[1] * V + c[2] * U + c[3] * V**2 + c[4] * U * V + c[5] * U**2
    g = unflatten(quad.ravel(), axes)
    assert rmse(approximate(b, g, 6), g) < 1e-9


def test_trig_first_mode_is_half_sine():
    axes = desk_axes()
    b = trigonometric_basis(axes, 1)
    u = _open_coords(axes.bitrates)[:, None]
    v = _open_coords(axes.resolutions)[None, :]
    mode = (np.sin(np.pi * u) * np.sin(np.pi * v)).ravel()
    assert np.allclose(b.components[:, 0], mode / np.linalg.norm(mode), atol=1e-12)


def test_open_coords_interior():
    u = _open_coords(np.arange(100.0, 9001.0, 100.0))
    assert u[0] > 0 and u[-1] < 1
    assert u[0] == pytest.approx(100 / 9100)


def test_trig_pure_mode_projects_one_hot():
    # On evenly spaced labels the discrete half-sines are mutually orthogonal.
    axes = AxisSpec(tuple(range(1, 10)), tuple(range(1, 7)))
    b = trigonometric_basis(axes, 6)
    u = _open_coords(axes.bitrates)[:, None]
    v = _open_coords(axes.resolutions)[None, :]
    mode = (np.sin(2 * np.pi * u) * np.sin(np.pi * v)).ravel()  # (p, q) = (2, 1), index 2
    c = project(b, unflatten(mode, axes), 6).coefficients
    expected = np.zeros(6)
    expected[2] = np.linalg.norm(mode)
    assert np.allclose(np.abs(c), expected, atol=1e-10)


def test_dependent_monomial_is_named():
    axes = small_axes(3, 2)  # v takes two values, so v**2 == v
    with pytest.raises(StructureError, match=r"3 \(p=0, q=2\)"):
        polynomial_basis(axes, 4)


def test_fixed_basis_uses_dataset_mean(desk_corpus):
    b = build_basis("polynomial", 8, desk_corpus)
    assert np.allclose(b.mean, np.mean([flatten(g) for g in desk_corpus], axis=0))
    e = build_basis(EIGEN, 8, desk_corpus)
    assert rmse(approximate(b, desk_corpus[0], 0), approximate(e, desk_corpus[0], 0)) == 0
    with pytest.raises(ValueError):
        build_basis("wavelet", 3, desk_corpus)


def test_basis_dict_round_trip(desk_basis):
    again = EigenBasis.from_dict(desk_basis.to_dict())
    assert again.basis_id == desk_basis.basis_id
    assert np.array_equal(again.components, desk_basis.components)
