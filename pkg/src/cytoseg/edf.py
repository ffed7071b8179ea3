"""Extended depth-of-field fusion of a multi-focal stack by per-pixel plane selection."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

from .core import _check_odd_window, as_gray
from .errors import InvalidInputError, InvalidParameterError


@dataclass(frozen=True)
class FocusParams:
    window: int = 9
    smooth_window: int = 9

    def __post_init__(self):
        for name in ("window", "smooth_window"):
            v = getattr(self, name)
            if int(v) != v or v < 1 or v % 2 == 0:
                raise InvalidParameterError(f"{name} must be an odd integer >= 1, got {v}")


def as_stack(stack):
    """Validate a focal stack (sequence of equal-shape 2-D images) as a list."""
    if isinstance(stack, np.ndarray) and stack.ndim == 3:
        stack = list(stack)
    planes = [as_gray(p, name=f"plane {k}") for k, p in enumerate(stack)]
    if not planes:
        raise InvalidInputError("focal stack is empty")
    for k, p in enumerate(planes[1:], start=1):
        if p.shape != planes[0].shape:
            raise InvalidInputError(f"plane {k} has shape {p.shape}, expected {planes[0].shape}")
    return planes


def focus_measure(img, window=9):
    """
    Sum-modified-Laplacian focus measure.

    ``|2I - I_left - I_right| + |2I - I_up - I_down|`` summed over a
    ``window`` x ``window`` box, with edge replication at the borders.
    """
    window = _check_odd_window(window, minimum=1)
    f = np.pad(as_gray(img).astype(np.float64), 1, mode="edge")
    c = f[1:-1, 1:-1]
    ml = np.abs(2 * c - f[1:-1, :-2] - f[1:-1, 2:]) + np.abs(2 * c - f[:-2, 1:-1] - f[2:, 1:-1])
    return ndi.uniform_filter(ml, size=window, mode="nearest") * window * window


def focus_index(stack, params=FocusParams()):
    """Index of the sharpest plane per pixel (ties -> lowest index), median-smoothed."""
    planes = as_stack(stack)
    best = focus_measure(planes[0], params.window)
    index = np.zeros(best.shape, dtype=np.int32)
    for k, plane in enumerate(planes[1:], start=1):
        fm = focus_measure(plane, params.window)
        better = fm > best
        best[better] = fm[better]
        index[better] = k
    if params.smooth_window > 1:
        index = ndi.median_filter(index, size=params.smooth_window, mode="nearest")
    return index


def fuse_edf(stack, params=FocusParams()):
    """All-in-focus image: each pixel is copied from its sharpest plane."""
    planes = as_stack(stack)
    if len(planes) == 1:
        return planes[0].copy()
    index = focus_index(planes, params)
    return np.take_along_axis(np.stack(planes), index[None], axis=0)[0]
