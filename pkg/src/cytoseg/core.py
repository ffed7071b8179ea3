"""
Image primitives used by every pipeline stage.

Gray images are 2-D ``uint8`` arrays, binary masks are 2-D ``bool`` arrays.
All neighbourhood operations use 8-connectivity and clamp coordinates at the
image border (edge replication).
"""

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import ndimage as ndi

from .errors import InvalidInputError, InvalidParameterError

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def as_gray(img, name="image"):
    """Validate ``img`` as a non-empty 2-D 8-bit image and return it as uint8."""
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        return arr
    if arr.dtype == bool or not np.issubdtype(arr.dtype, np.integer):
        raise InvalidInputError(f"{name} must hold integer intensities, got {arr.dtype}")
    if arr.min() < 0 or arr.max() > 255:
        raise InvalidInputError(f"{name} intensities must lie in [0, 255]")
    return arr.astype(np.uint8)


def as_mask(mask, name="mask"):
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-D array, got shape {arr.shape}")
    return arr.astype(bool, copy=False)


def _check_odd_window(window, minimum=3):
    if int(window) != window or window < minimum or window % 2 == 0:
        raise InvalidParameterError(f"window must be an odd integer >= {minimum}, got {window}")
    return int(window)


@dataclass(frozen=True)
class LabelMap:
    """Connected-component labelling: 0 is background, objects are 1..count."""

    labels: np.ndarray
    count: int

    @property
    def shape(self):
        return self.labels.shape

    def mask(self, label):
        return self.labels == label

    def areas(self):
        """Pixel count of every label 1..count (index 0 of the result is label 1)."""
        return np.bincount(self.labels.ravel(), minlength=self.count + 1)[1:]


# ---------------------------------------------------------------------------
# Window filters

def median_filter(img, window=5):
    """Median over a ``window`` x ``window`` neighbourhood with edge replication."""
    img = as_gray(img)
    window = _check_odd_window(window)
    return ndi.median_filter(img, size=window, mode="nearest")


def _tile_edges(length, n):
    return (np.arange(n + 1) * length) // n


def _interp_index(coords, centers):
    """Lower neighbour index and interpolation weight of each coordinate."""
    if len(centers) == 1:
        zeros = np.zeros(len(coords), dtype=int)
        return zeros, zeros, np.zeros(len(coords))
    lo = np.clip(np.searchsorted(centers, coords, side="right") - 1, 0, len(centers) - 2)
    hi = lo + 1
    t = (coords - centers[lo]) / (centers[hi] - centers[lo])
    return lo, hi, np.clip(t, 0.0, 1.0)


def adaptive_hist_eq(img, tile_grid=(8, 8), clip_limit=0.01):
    """
    Contrast-limited adaptive histogram equalization.

    Each tile's histogram is clipped at ``clip_limit * tile_pixels`` counts
    (at least 1), the clipped excess is spread evenly over all 256 bins, and
    the tile mapping is ``255 * cdf / tile_pixels``. Pixels are mapped by
    bilinear interpolation between the four nearest tile centres; pixels
    outside the outermost centres use the nearest tiles only.

    Args:
        img: 2-D uint8 image.
        tile_grid: (rows, cols) of contextual tiles.
        clip_limit: clip height as a fraction of the tile pixel count, in (0, 1].

    Returns:
        uint8 image of the same shape.
    """
    img = as_gray(img)
    rows, cols = (int(v) for v in tile_grid)
    if rows < 1 or cols < 1:
        raise InvalidParameterError(f"tile_grid must be at least 1x1, got {tile_grid}")
    if not 0 < clip_limit <= 1:
        raise InvalidParameterError(f"clip_limit must lie in (0, 1], got {clip_limit}")
    h, w = img.shape
    ry, rx = _tile_edges(h, rows), _tile_edges(w, cols)
    if np.diff(ry).min() < 2 or np.diff(rx).min() < 2:
        raise InvalidParameterError(
            f"tile_grid {rows}x{cols} gives tiles smaller than 2x2 on a {h}x{w} image"
        )

    maps = np.empty((rows, cols, 256))
    for i in range(rows):
        for j in range(cols):
            tile = img[ry[i]:ry[i + 1], rx[j]:rx[j + 1]]
            n = tile.size
            hist = np.bincount(tile.ravel(), minlength=256).astype(float)
            clip = max(1.0, clip_limit * n)
            excess = np.clip(hist - clip, 0.0, None).sum()
            hist = np.minimum(hist, clip) + excess / 256.0
            maps[i, j] = 255.0 * np.cumsum(hist) / n

    cy = (ry[:-1] + ry[1:] - 1) / 2.0
    cx = (rx[:-1] + rx[1:] - 1) / 2.0
    y0, y1, wy = _interp_index(np.arange(h), cy)
    x0, x1, wx = _interp_index(np.arange(w), cx)
    y0, y1, wy = y0[:, None], y1[:, None], wy[:, None]
    x0, x1, wx = x0[None, :], x1[None, :], wx[None, :]
    top = (1 - wx) * maps[y0, x0, img] + wx * maps[y0, x1, img]
    bottom = (1 - wx) * maps[y1, x0, img] + wx * maps[y1, x1, img]
    out = (1 - wy) * top + wy * bottom
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Morphological reconstruction

_FWD_DY = np.array([-1, -1, -1, 0])
_FWD_DX = np.array([-1, 0, 1, -1])
_BWD_DY = np.array([1, 1, 1, 0])
_BWD_DX = np.array([1, 0, -1, 1])
_ALL_DY = np.array([-1, -1, -1, 0, 0, 1, 1, 1])
_ALL_DX = np.array([-1, 0, 1, -1, 1, -1, 0, 1])


@njit(cache=True, nogil=True)
def _reconstruct(marker, mask):
    # Vincent's hybrid algorithm: raster sweep, anti-raster sweep, FIFO finish.
    h, w = mask.shape
    out = marker.copy()
    for y in range(h):
        for x in range(w):
            v = out[y, x]
            for k in range(4):
                ny, nx = y + _FWD_DY[k], x + _FWD_DX[k]
                if 0 <= ny < h and 0 <= nx < w and out[ny, nx] > v:
                    v = out[ny, nx]
            out[y, x] = min(v, mask[y, x])

    n = h * w
    queue = np.empty(n, np.int64)
    queued = np.zeros(n, np.bool_)
    head = 0
    size = 0
    for y in range(h - 1, -1, -1):
        for x in range(w - 1, -1, -1):
            v = out[y, x]
            for k in range(4):
                ny, nx = y + _BWD_DY[k], x + _BWD_DX[k]
                if 0 <= ny < h and 0 <= nx < w and out[ny, nx] > v:
                    v = out[ny, nx]
            v = min(v, mask[y, x])
            out[y, x] = v
            for k in range(4):
                ny, nx = y + _BWD_DY[k], x + _BWD_DX[k]
                if 0 <= ny < h and 0 <= nx < w:
                    if out[ny, nx] < v and out[ny, nx] < mask[ny, nx]:
                        p = y * w + x
                        if not queued[p]:
                            queue[(head + size) % n] = p
                            queued[p] = True
                            size += 1
                        break

    while size > 0:
        p = queue[head]
        head = (head + 1) % n
        size -= 1
        queued[p] = False
        y, x = p // w, p % w
        v = out[y, x]
        for k in range(8):
            ny, nx = y + _ALL_DY[k], x + _ALL_DX[k]
            if 0 <= ny < h and 0 <= nx < w:
                if out[ny, nx] < v and out[ny, nx] != mask[ny, nx]:
                    out[ny, nx] = min(v, mask[ny, nx])
                    q = ny * w + nx
                    if not queued[q]:
                        queue[(head + size) % n] = q
                        queued[q] = True
                        size += 1
    return out


def _check_pair(marker, mask):
    marker, mask = np.asarray(marker), np.asarray(mask)
    if marker.shape != mask.shape or marker.ndim != 2:
        raise InvalidInputError(f"marker {marker.shape} and mask {mask.shape} must be equal 2-D shapes")
    if np.any(marker > mask):
        raise InvalidInputError("marker exceeds mask; reconstruction requires marker <= mask")
    return marker, mask


def reconstruct_by_dilation(marker, mask):
    """
    Grayscale reconstruction of ``marker`` under ``mask`` (8-connected).

    Returns the fixed point of repeated unit dilation of ``marker`` followed by
    the pixelwise minimum with ``mask``, with the dtype of ``mask``.
    """
    marker, mask = _check_pair(marker, mask)
    out = _reconstruct(marker.astype(np.int32), mask.astype(np.int32))
    return out.astype(mask.dtype)


def reconstruct_by_dilation_naive(marker, mask):
    """Reference reconstruction: dilate-and-clip until nothing changes."""
    marker, mask = _check_pair(marker, mask)
    out = marker.astype(np.int32)
    lim = mask.astype(np.int32)
    while True:
        nxt = np.minimum(ndi.grey_dilation(out, size=(3, 3), mode="nearest"), lim)
        if np.array_equal(nxt, out):
            return out.astype(mask.dtype)
        out = nxt


def h_maxima(img, h):
    """Suppress every regional maximum whose height is below ``h``."""
    img = as_gray(img)
    if int(h) != h or h < 1:
        raise InvalidParameterError(f"h must be an integer >= 1, got {h}")
    marker = np.clip(img.astype(np.int32) - int(h), 0, None)
    return _reconstruct(marker, img.astype(np.int32)).astype(np.uint8)


def regional_maxima(img):
    """Mask of the connected plateaus whose outside neighbours are all darker."""
    f = as_gray(img).astype(np.int32)
    return f > _reconstruct(f - 1, f)


# ---------------------------------------------------------------------------
# Binary morphology

def connected_components(mask):
    """8-connected labelling; labels follow the first pixel of each object in raster order."""
    labels, count = ndi.label(as_mask(mask), structure=EIGHT_CONNECTED)
    return LabelMap(labels.astype(np.int32), int(count))


def remove_small_components(mask, min_area):
    if min_area < 0:
        raise InvalidParameterError(f"min_area must be >= 0, got {min_area}")
    mask = as_mask(mask)
    lm = connected_components(mask)
    if lm.count == 0 or min_area == 0:
        return mask.copy()
    keep = np.concatenate([[False], lm.areas() >= min_area])
    return keep[lm.labels]


def fill_holes(mask):
    """Set background regions that cannot reach the image border to foreground."""
    return ndi.binary_fill_holes(as_mask(mask), structure=EIGHT_CONNECTED)
