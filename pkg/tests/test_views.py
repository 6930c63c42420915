import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cmscgc.errors import DataError, ParameterError, RangeError
from cmscgc.hsi_store import HsiCube, extract_samples, synth_multiview
from cmscgc.views import (SPECTRAL_SPATIAL, TEXTURE, EmpConfig, build_views,
                          closing_by_reconstruction, emp_texture, extract_patches,
                          morphological_profile, normalize_bands, opening_by_reconstruction,
                          pca_cube, pca_reduce)


def _cube(data, labels=None):
    data = np.asarray(data, dtype=np.float64)
    if labels is None:
        labels = np.ones(data.shape[:2], dtype=np.int64)
    return HsiCube(data=data, labels=labels)


# --- brute-force morphology oracle -------------------------------------------------

def _disk_offsets(r):
    span = range(-r, r + 1)
    return [(dy, dx) for dy in span for dx in span if dy * dy + dx * dx <= r * r]


def _filter(img, offsets, reduce):
    h, w = img.shape
    out = np.empty_like(img)
    for y in range(h):
        for x in range(w):
            vals = [img[y + dy, x + dx] for dy, dx in offsets
                    if 0 <= y + dy < h and 0 <= x + dx < w]
            out[y, x] = reduce(vals)
    return out


_NEIGH = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]


def _reconstruct(marker, mask, dilate):
    cur = marker.copy()
    while True:
        if dilate:
            nxt = np.minimum(_filter(cur, _NEIGH, max), mask)
        else:
            nxt = np.maximum(_filter(cur, _NEIGH, min), mask)
        if np.array_equal(nxt, cur):
            return cur
        cur = nxt


def _oracle_open(img, r):
    return _reconstruct(_filter(img, _disk_offsets(r), min), img, dilate=True)


def _oracle_close(img, r):
    return _reconstruct(_filter(img, _disk_offsets(r), max), img, dilate=False)


# --- normalisation -----------------------------------------------------------------

def test_normalize_examples():
    out = normalize_bands(_cube([[[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]]]))
    np.testing.assert_allclose(out.data[0, :, 0], [0, 0.5, 1])
    np.testing.assert_array_equal(out.data[0, :, 1], [0, 0, 0])


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 4, 2), elements=st.floats(-1e3, 1e3)))
def test_normalize_range_property(data):
    out = normalize_bands(_cube(data)).data
    for b in range(2):
        band = out[:, :, b]
        if np.ptp(data[:, :, b]) > 0:
            assert band.min() == 0.0 and band.max() == pytest.approx(1.0)
        else:
            assert not band.any()
        assert band.min() >= 0 and band.max() <= 1 + 1e-12


def test_normalize_rejects_non_finite():
    with pytest.raises(DataError):
        normalize_bands(_cube([[[np.inf]]]))


# --- PCA ---------------------------------------------------------------------------

def test_pca_rank_one_axis():
    rng = np.random.default_rng(0)
    t = rng.standard_normal(40)
    X = np.vstack([np.full(40, 3.0), t, np.full(40, -1.0)])
    out = pca_reduce(X, 1)
    np.testing.assert_allclose(np.abs(out[0]), np.abs(t - t.mean()), atol=1e-10)
    # sign convention: the only nonzero loading is on axis 1 and must be positive
    np.testing.assert_allclose(out[0], t - t.mean(), atol=1e-10)


def test_pca_full_dimension_reconstructs():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((4, 30))
    scores = pca_reduce(X, 4)
    centred = X - X.mean(axis=1, keepdims=True)
    # scores are an orthonormal change of basis: Gram matrices agree
    np.testing.assert_allclose(scores.T @ scores, centred.T @ centred, atol=1e-10)
    axes = np.linalg.lstsq(scores.T, centred.T, rcond=None)[0]
    np.testing.assert_allclose(scores.T @ axes, centred.T, atol=1e-10)


def test_pca_variance_matches_eigenvalues():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((5, 50))
    out = pca_reduce(X, 2)
    evals = np.sort(np.linalg.eigvalsh(np.cov(X)))[::-1]
    var = out.var(axis=1, ddof=1)
    np.testing.assert_allclose(var.sum(), evals[:2].sum(), rtol=1e-10)
    assert var[0] >= var[1]


def test_pca_sign_and_errors():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((6, 20))
    out = pca_reduce(X, 3)
    centred = X - X.mean(axis=1, keepdims=True)
    axes = np.linalg.lstsq(centred.T, out.T, rcond=None)[0]
    pivots = np.abs(axes).argmax(axis=0)
    assert np.all(axes[pivots, np.arange(3)] > 0)
    with pytest.raises(RangeError):
        pca_reduce(X, 7)
    with pytest.raises(RangeError):
        pca_reduce(X, 0)


# --- EMP ---------------------------------------------------------------------------

def test_emp_constant_image_is_fixed_point():
    profile = morphological_profile(np.full((6, 7), 0.3), (1, 2, 3))
    np.testing.assert_array_equal(profile, np.full((6, 7, 7), 0.3))


def test_opening_removes_single_peak():
    img = np.zeros((7, 7))
    img[3, 3] = 1.0
    np.testing.assert_array_equal(opening_by_reconstruction(img, 1), np.zeros((7, 7)))
    np.testing.assert_array_equal(_oracle_open(img, 1), np.zeros((7, 7)))


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("radius", [1, 2])
def test_reconstruction_matches_brute_force(seed, radius):
    img = np.random.default_rng(seed).random((8, 9)).round(2)
    np.testing.assert_allclose(opening_by_reconstruction(img, radius), _oracle_open(img, radius),
                               atol=1e-12)
    np.testing.assert_allclose(closing_by_reconstruction(img, radius), _oracle_close(img, radius),
                               atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(0, 1)))
def test_profile_is_ordered(img):
    profile = morphological_profile(img, (1, 2, 3))
    # closings (largest first) >= image >= openings (smallest first)
    assert np.all(np.diff(profile, axis=-1) <= 1e-12)
    np.testing.assert_array_equal(profile[:, :, 3], img)


def test_emp_band_count_and_layout():
    rng = np.random.default_rng(4)
    cube = normalize_bands(_cube(rng.random((6, 6, 5))))
    out = emp_texture(cube, EmpConfig(n_pcs=2, radii=(1, 2)))
    assert out.bands == 10 == EmpConfig(n_pcs=2, radii=(1, 2)).n_layers
    # middle layer of each PC block is the PC image itself
    pcs = pca_cube(cube, 2).data
    np.testing.assert_allclose(out.data[:, :, 2], pcs[:, :, 0])
    np.testing.assert_allclose(out.data[:, :, 7], pcs[:, :, 1])


@pytest.mark.parametrize("kwargs", [{"n_pcs": 0}, {"radii": ()}, {"radii": (2, 1)},
                                    {"radii": (0, 1)}, {"radii": (1, 1)}])
def test_emp_config_validation(kwargs):
    with pytest.raises(ParameterError):
        EmpConfig(**kwargs)


# --- patches -----------------------------------------------------------------------

def test_patch_w1_is_raw_spectra():
    rng = np.random.default_rng(5)
    cube = _cube(rng.random((4, 5, 3)), rng.integers(0, 3, (4, 5)))
    s = extract_samples(cube)
    np.testing.assert_array_equal(extract_patches(cube, s, 1).X, s.features)


def test_patch_corner_reflection():
    img = np.arange(16, dtype=np.float64).reshape(4, 4, 1)
    labels = np.zeros((4, 4), dtype=np.int64)
    labels[0, 0] = 1
    cube = _cube(img, labels)
    patch = extract_patches(cube, extract_samples(cube), 3).X[:, 0]
    # index-arithmetic oracle: mirrored index -1 -> 0
    expect = [img[max(r, 0), max(c, 0), 0] for r in (-1, 0, 1) for c in (-1, 0, 1)]
    np.testing.assert_array_equal(patch, expect)
    assert np.sum(patch == img[0, 0, 0]) == 4


def test_patch_flatten_order_band_major():
    rng = np.random.default_rng(6)
    data = rng.random((5, 5, 2))
    labels = np.zeros((5, 5), dtype=np.int64)
    labels[2, 3] = 1
    cube = _cube(data, labels)
    x = extract_patches(cube, extract_samples(cube), 3).X[:, 0]
    for b in range(2):
        for i, r in enumerate((1, 2, 3)):
            for j, c in enumerate((2, 3, 4)):
                assert x[b * 9 + i * 3 + j] == data[r, c, b]


def test_patch_even_w_rejected():
    cube = _cube(np.zeros((3, 3, 1)))
    with pytest.raises(ParameterError):
        extract_patches(cube, extract_samples(cube), 4)


def test_build_views_dimensions_and_alignment():
    samples, cube = synth_multiview(2, 9, 10, 2, 0.01, seed=0)
    views = build_views(cube, samples, 11, pca_dims=8, emp=EmpConfig(n_pcs=2, radii=(1, 2)))
    assert [v.view_id for v in views] == [SPECTRAL_SPATIAL, TEXTURE]
    assert views[0].d == 121 * 8
    assert views[1].d == 121 * 10
    assert views[0].n == views[1].n == samples.n
    assert all(np.all(np.isfinite(v.X)) for v in views)


def test_pca_invariant_under_increasing_band_rescaling():
    samples, cube = synth_multiview(2, 9, 6, 2, 0.05, seed=3)
    rng = np.random.default_rng(0)
    scale, shift = rng.uniform(0.5, 3.0, 6), rng.uniform(-2, 2, 6)
    warped = HsiCube(data=cube.data * scale + shift, labels=cube.labels)
    a = build_views(cube, samples, 3, pca_dims=4, emp=EmpConfig(n_pcs=2, radii=(1,)))
    b = build_views(warped, samples, 3, pca_dims=4, emp=EmpConfig(n_pcs=2, radii=(1,)))
    for va, vb in zip(a, b):
        np.testing.assert_allclose(va.X, vb.X, atol=1e-10)
