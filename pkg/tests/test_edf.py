import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage as ndi

from cytoseg.edf import FocusParams, focus_measure, fuse_edf
from cytoseg.errors import InvalidInputError, InvalidParameterError


def direct_focus(img, y, x, window):
    """Modified Laplacian summed over the window by explicit loops (test oracle)."""
    h, w = img.shape
    f = img.astype(float)
    at = lambda yy, xx: f[min(max(yy, 0), h - 1), min(max(xx, 0), w - 1)]
    r = window // 2
    total = 0.0
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            cy, cx = min(max(y + dy, 0), h - 1), min(max(x + dx, 0), w - 1)
            c = at(cy, cx)
            total += abs(2 * c - at(cy, cx - 1) - at(cy, cx + 1)) + abs(2 * c - at(cy - 1, cx) - at(cy + 1, cx))
    return total


def checkerboard(n=16):
    return ((np.indices((n, n)).sum(0) % 2) * 255).astype(np.uint8)


def test_focus_constant_is_zero():
    assert not focus_measure(np.full((12, 12), 90, np.uint8), 3).any()


def test_focus_impulse_is_local():
    img = np.zeros((21, 21), np.uint8)
    img[10, 10] = 200
    fm = focus_measure(img, 3)
    assert np.all(fm[9:12, 9:12] > 0)
    assert fm[8, 10] > 0 and fm[12, 10] > 0
    assert fm[0, 0] == 0 and fm[20, 20] == 0 and fm[10, 0] == 0


def test_focus_matches_direct_evaluation(rng):
    img = rng.integers(0, 256, (9, 11), dtype=np.uint8)
    fm = focus_measure(img, 5)
    for y, x in [(0, 0), (4, 5), (8, 10), (2, 9)]:
        assert fm[y, x] == pytest.approx(direct_focus(img, y, x, 5), rel=1e-12)


def test_focus_sharp_checkerboard_beats_blurred_copy():
    sharp = checkerboard()
    blurred = np.rint(ndi.uniform_filter(sharp.astype(float), 3, mode="nearest")).astype(np.uint8)
    fs, fb = focus_measure(sharp, 3), focus_measure(blurred, 3)
    assert np.all(fs[1:-1, 1:-1] > fb[1:-1, 1:-1])
    for y, x in [(3, 3), (7, 12)]:
        assert fs[y, x] == pytest.approx(direct_focus(sharp, y, x, 3))
        assert fb[y, x] == pytest.approx(direct_focus(blurred, y, x, 3))


def test_focus_rejects_even_window():
    with pytest.raises(InvalidParameterError):
        focus_measure(np.zeros((5, 5), np.uint8), 4)


def test_fuse_identical_planes(rng):
    img = rng.integers(0, 256, (20, 20), dtype=np.uint8)
    assert np.array_equal(fuse_edf([img] * 5), img)


def test_fuse_picks_sharp_plane():
    sharp = checkerboard(24)
    blurred = np.rint(ndi.uniform_filter(sharp.astype(float), 3, mode="nearest")).astype(np.uint8)
    assert np.array_equal(fuse_edf([sharp, blurred]), sharp)
    assert np.array_equal(fuse_edf([blurred, sharp]), sharp)


def test_fuse_half_and_half_composite():
    rng = np.random.default_rng(7)
    texture = rng.integers(40, 220, (64, 64)).astype(float)
    sharp = texture.astype(np.uint8)
    soft = np.rint(ndi.gaussian_filter(texture, 2.0, mode="nearest")).astype(np.uint8)
    seam = 32
    plane0 = np.where(np.arange(64)[None, :] < seam, sharp, soft).astype(np.uint8)
    plane1 = np.where(np.arange(64)[None, :] < seam, soft, sharp).astype(np.uint8)
    params = FocusParams()
    out = fuse_edf([plane0, plane1], params)
    far = np.abs(np.arange(64) - seam + 0.5) > params.smooth_window
    assert np.array_equal(out[:, far], sharp[:, far])


def test_fuse_single_plane_is_identity(rng):
    img = rng.integers(0, 256, (13, 17), dtype=np.uint8)
    assert np.array_equal(fuse_edf([img]), img)


def test_fuse_rejects_bad_stacks():
    with pytest.raises(InvalidInputError):
        fuse_edf([])
    with pytest.raises(InvalidInputError):
        fuse_edf([np.zeros((4, 4), np.uint8), np.zeros((5, 4), np.uint8)])


stacks = st.integers(1, 4).flatmap(
    lambda n: arrays(np.uint8, (n, 10, 10), elements=st.integers(0, 255)))


@given(stacks)
@settings(max_examples=40, deadline=None)
def test_fuse_selects_never_blends(stack):
    out = fuse_edf(stack)
    assert np.all(np.any(stack == out[None], axis=0))


@given(stacks, st.randoms(use_true_random=False))
@settings(max_examples=40, deadline=None)
def test_permutation_changes_only_ties(stack, rnd):
    params = FocusParams(window=3, smooth_window=1)
    perm = list(range(len(stack)))
    rnd.shuffle(perm)
    a, b = fuse_edf(stack, params), fuse_edf(stack[perm], params)
    fm = np.stack([focus_measure(p, 3) for p in stack])
    top = fm.max(axis=0)
    unique = (fm == top).sum(axis=0) == 1
    assert np.array_equal(a[unique], b[unique])
