import sys
from collections import deque

import numpy as np
import pytest

NEIGHBOURS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def pytest_addoption(parser):
    parser.addoption("--data", default=None,
                     help="directory of real specimens (planes + gt/cells) for the optional real-data Dice check")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def data_dir(request):
    return request.config.getoption("--data")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def flood_components(mask):
    """BFS 8-connected labelling in raster order of first pixel (test oracle)."""
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=int)
    n = 0
    for y in range(h):
        for x in range(w):
            if mask[y, x] and labels[y, x] == 0:
                n += 1
                labels[y, x] = n
                queue = deque([(y, x)])
                while queue:
                    cy, cx = queue.popleft()
                    for dy, dx in NEIGHBOURS:
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and labels[ny, nx] == 0:
                            labels[ny, nx] = n
                            queue.append((ny, nx))
    return labels, n


def plateau_maxima(img):
    """Regional maxima by enumerating equal-valued 8-connected plateaus (test oracle)."""
    img = np.asarray(img, dtype=int)
    h, w = img.shape
    seen = np.zeros((h, w), dtype=bool)
    out = np.zeros((h, w), dtype=bool)
    for y in range(h):
        for x in range(w):
            if seen[y, x]:
                continue
            v = img[y, x]
            members, queue, is_max = [], deque([(y, x)]), True
            seen[y, x] = True
            while queue:
                cy, cx = queue.popleft()
                members.append((cy, cx))
                for dy, dx in NEIGHBOURS:
                    ny, nx = cy + dy, cx + dx
                    if not (0 <= ny < h and 0 <= nx < w):
                        continue
                    if img[ny, nx] == v and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
                    elif img[ny, nx] > v:
                        is_max = False
            if is_max:
                for cy, cx in members:
                    out[cy, cx] = True
    return out


def naive_median(img, window):
    """Sort-and-pick-middle median with clamped coordinates (test oracle)."""
    h, w = img.shape
    r = window // 2
    out = np.empty_like(img)
    for y in range(h):
        for x in range(w):
            vals = sorted(int(img[min(max(y + dy, 0), h - 1), min(max(x + dx, 0), w - 1)])
                          for dy in range(-r, r + 1) for dx in range(-r, r + 1))
            out[y, x] = vals[len(vals) // 2]
    return out


def disc(shape, center, radius):
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
    return (yy - center[0]) ** 2 + (xx - center[1]) ** 2 <= radius ** 2
