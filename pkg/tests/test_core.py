import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cytoseg import core
from cytoseg.errors import InvalidInputError, InvalidParameterError
from conftest import disc, flood_components, naive_median, plateau_maxima

small_images = arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)))
small_masks = arrays(np.bool_, st.tuples(st.integers(1, 16), st.integers(1, 16)))


# --- median_filter ---------------------------------------------------------

def test_median_constant_image():
    img = np.full((9, 11), 77, np.uint8)
    assert np.array_equal(core.median_filter(img, 5), img)


def test_median_removes_isolated_impulse():
    img = np.zeros((15, 15), np.uint8)
    img[7, 7] = 255
    assert not core.median_filter(img, 5).any()


def test_median_matches_sort_oracle(rng):
    img = rng.integers(0, 256, (7, 7), dtype=np.uint8)
    assert np.array_equal(core.median_filter(img, 3), naive_median(img, 3))


@pytest.mark.parametrize("window", [0, 2, 4, 1])
def test_median_rejects_bad_window(window):
    with pytest.raises(InvalidParameterError):
        core.median_filter(np.zeros((5, 5), np.uint8), window)


@given(small_images)
@settings(max_examples=50, deadline=None)
def test_median_preserves_range(img):
    out = core.median_filter(img, 3)
    assert out.min() >= img.min() and out.max() <= img.max()


# --- adaptive_hist_eq ------------------------------------------------------

@pytest.mark.parametrize("grid,clip", [((1, 1), 1.0), ((4, 4), 0.01), ((3, 2), 0.2)])
def test_clahe_constant_stays_constant(grid, clip):
    out = core.adaptive_hist_eq(np.full((32, 24), 120, np.uint8), grid, clip)
    assert len(np.unique(out)) == 1


def global_equalization(img):
    # independent oracle: map v -> round(255 * #{pixels <= v} / N)
    flat = np.sort(img.ravel())
    n = flat.size
    lut = np.array([np.floor(255.0 * np.searchsorted(flat, v, side="right") / n + 0.5) for v in range(256)])
    return lut[img].astype(np.uint8)


def test_clahe_single_tile_unclipped_is_global_equalization(rng):
    img = rng.integers(30, 200, (40, 50), dtype=np.uint8)
    assert np.array_equal(core.adaptive_hist_eq(img, (1, 1), 1.0), global_equalization(img))


def test_clahe_two_valued_image_stays_ordered():
    img = np.zeros((20, 20), np.uint8)
    img[:, 10:] = 255
    out = core.adaptive_hist_eq(img, (1, 1), 1.0)
    assert len(np.unique(out)) == 2
    assert out[0, 0] < out[0, 19]


def test_clahe_rejects_degenerate_tiles():
    with pytest.raises(InvalidParameterError):
        core.adaptive_hist_eq(np.zeros((8, 8), np.uint8), (8, 8), 0.01)
    with pytest.raises(InvalidParameterError):
        core.adaptive_hist_eq(np.zeros((8, 8), np.uint8), (2, 2), 0.0)


def test_clahe_is_monotone_within_a_tile(rng):
    img = rng.integers(0, 256, (64, 64), dtype=np.uint8)
    out = core.adaptive_hist_eq(img, (1, 1), 0.01)
    order = np.argsort(img.ravel(), kind="stable")
    assert np.all(np.diff(out.ravel()[order].astype(int)) >= 0)


# --- reconstruction ---------------------------------------------------------

def test_reconstruct_marker_equal_mask(rng):
    mask = rng.integers(0, 256, (16, 16), dtype=np.uint8)
    assert np.array_equal(core.reconstruct_by_dilation(mask, mask), mask)


@pytest.mark.parametrize("c", [0, 40, 255])
def test_reconstruct_zero_marker_under_constant_mask(c):
    mask = np.full((10, 10), c, np.uint8)
    out = core.reconstruct_by_dilation(np.zeros_like(mask), mask)
    assert not out.any()


def test_reconstruct_single_peak_matches_naive():
    img = (60 * np.exp(-((np.mgrid[0:21, 0:21] - 10.0) ** 2).sum(0) / 30)).astype(np.uint8) + 20
    marker = np.clip(img.astype(int) - 12, 0, None).astype(np.uint8)
    fast = core.reconstruct_by_dilation(marker, img)
    assert np.array_equal(fast, core.reconstruct_by_dilation_naive(marker, img))
    assert fast.max() == img.max() - 12


def test_reconstruct_rejects_marker_above_mask():
    with pytest.raises(InvalidInputError):
        core.reconstruct_by_dilation(np.full((3, 3), 5, np.uint8), np.full((3, 3), 4, np.uint8))


@given(arrays(np.uint8, st.tuples(st.integers(1, 14), st.integers(1, 14))), st.integers(0, 255))
@settings(max_examples=80, deadline=None)
def test_reconstruct_bounds_and_fixed_point(mask, shift):
    marker = np.clip(mask.astype(int) - shift, 0, None).astype(np.uint8)
    out = core.reconstruct_by_dilation(marker, mask)
    assert np.all(marker <= out) and np.all(out <= mask)
    from scipy import ndimage as ndi
    step = np.minimum(ndi.grey_dilation(out, size=(3, 3), mode="nearest"), mask)
    assert np.array_equal(step, out)
    assert np.array_equal(out, core.reconstruct_by_dilation_naive(marker, mask))


# --- h_maxima ---------------------------------------------------------------

def test_h_maxima_constant():
    assert np.all(core.h_maxima(np.full((6, 6), 50, np.uint8), 7) == 43)


def test_h_maxima_low_plateau_is_suppressed():
    img = np.full((20, 20), 10, np.uint8)
    img[8:12, 8:12] = 14
    expected = core.reconstruct_by_dilation_naive(np.clip(img.astype(int) - 5, 0, None).astype(np.uint8), img)
    out = core.h_maxima(img, 5)
    assert np.array_equal(out, expected)
    assert np.all(out == 9)


def test_h_maxima_high_plateau_survives():
    img = np.full((20, 20), 10, np.uint8)
    img[8:12, 8:12] = 100
    out = core.h_maxima(img, 5)
    expected = core.reconstruct_by_dilation_naive(np.clip(img.astype(int) - 5, 0, None).astype(np.uint8), img)
    assert np.array_equal(out, expected)
    assert np.all(out[8:12, 8:12] == 95)
    assert out[0, 0] == 10


def test_h_maxima_rejects_zero_h():
    with pytest.raises(InvalidParameterError):
        core.h_maxima(np.zeros((4, 4), np.uint8), 0)


@given(small_images, st.integers(1, 60))
@settings(max_examples=60, deadline=None)
def test_h_maxima_height_audit(img, h):
    out = core.h_maxima(img, h)
    assert np.all(out <= img)
    # each surviving maximum sits exactly h below the original peak it came from
    lm = core.connected_components(core.regional_maxima(out))
    for k in range(1, lm.count + 1):
        region = lm.mask(k)
        level = out[region]
        assert level.min() == level.max()
        if level[0] > 0:
            assert int(img[region].max()) == int(level[0]) + h
        else:  # saturated at zero: the original peak was no higher than h
            assert int(img[region].max()) <= h


# --- regional_maxima ---------------------------------------------------------

def test_regional_maxima_ramp():
    img = np.tile(np.arange(10, dtype=np.uint8) * 20, (6, 1))
    out = core.regional_maxima(img)
    assert out[:, -1].all() and not out[:, :-1].any()


@pytest.mark.parametrize("value", [0, 128, 255])
def test_regional_maxima_constant(value):
    assert core.regional_maxima(np.full((5, 7), value, np.uint8)).all()


def test_regional_maxima_matches_plateau_oracle(rng):
    img = rng.integers(0, 6, (16, 16), dtype=np.uint8)  # few levels -> many plateaus
    assert np.array_equal(core.regional_maxima(img), plateau_maxima(img))


# --- components ------------------------------------------------------------

def test_components_empty():
    assert core.connected_components(np.zeros((5, 5), bool)).count == 0


def test_components_scan_order():
    m = np.zeros((12, 12), bool)
    m[1:4, 6:9] = True
    m[6:10, 1:4] = True
    lm = core.connected_components(m)
    assert lm.count == 2
    assert lm.labels[2, 7] == 1 and lm.labels[7, 2] == 2


def test_components_diagonal_is_connected():
    m = np.eye(5, dtype=bool)
    assert core.connected_components(m).count == 1


@given(small_masks)
@settings(max_examples=80, deadline=None)
def test_components_match_bfs_oracle(mask):
    lm = core.connected_components(mask)
    labels, n = flood_components(mask)
    assert lm.count == n
    assert np.array_equal(lm.labels, labels)
    assert set(np.unique(lm.labels[mask])) == set(range(1, n + 1))
    assert not lm.labels[~mask].any()


# --- remove_small_components / fill_holes -----------------------------------

def test_remove_small_zero_area_is_identity(rng):
    m = rng.random((20, 20)) > 0.6
    assert np.array_equal(core.remove_small_components(m, 0), m)


def test_remove_small_clears_small_blob():
    m = np.zeros((10, 10), bool)
    m[2:5, 2:5] = True
    assert not core.remove_small_components(m, 10).any()


def test_remove_small_keeps_large_blob():
    m = np.zeros((80, 80), bool)
    m[1:6, 1:11] = True            # 50 px
    m[20:60, 20:70] = True         # 2000 px
    out = core.remove_small_components(m, 100)
    assert out.sum() == 2000 and out[30, 30] and not out[2, 2]


@given(small_masks, st.integers(0, 20))
@settings(max_examples=50, deadline=None)
def test_remove_small_idempotent(mask, area):
    once = core.remove_small_components(mask, area)
    assert np.array_equal(core.remove_small_components(once, area), once)


def test_fill_holes_disc_unchanged():
    d = disc((30, 30), (15, 15), 8)
    assert np.array_equal(core.fill_holes(d), d)


def test_fill_holes_annulus_becomes_disc():
    outer, inner = disc((30, 30), (15, 15), 10), disc((30, 30), (15, 15), 5)
    assert np.array_equal(core.fill_holes(outer & ~inner), outer)


def test_fill_holes_keeps_open_bay():
    m = np.zeros((20, 20), bool)
    m[5:15, 0:12] = True
    m[8:12, 0:8] = False  # bay open to the left border
    assert np.array_equal(core.fill_holes(m), m)


@given(small_masks)
@settings(max_examples=50, deadline=None)
def test_fill_holes_idempotent_and_extensive(mask):
    out = core.fill_holes(mask)
    assert np.all(out >= mask)
    assert np.array_equal(core.fill_holes(out), out)


def test_as_gray_rejects_out_of_range():
    with pytest.raises(InvalidInputError):
        core.as_gray(np.array([[0, 300]]))
    with pytest.raises(InvalidInputError):
        core.as_gray(np.zeros(5, np.uint8))
