"""
Three-stage segmentation of one specimen.

1. Clumps: median filter, CLAHE, H-maxima, regional maxima, hole filling,
   area filtering and 8-connected labelling of the EDF image.
2. Nuclei: prior-weighted Otsu on each clump's own histogram.
3. Cytoplasm: a clump with one nucleus is one cell; with several nuclei, a
   level set grows outward from a disc around each nucleus, confined to the clump.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy import ndimage as ndi

from . import core
from .edf import FocusParams, as_stack, fuse_edf
from .errors import InvalidParameterError, NoValidThresholdError
from .levelset import DrlseParams, drlse_evolve, edge_indicator, init_phi_disc
from .thresholding import Histogram, ThresholdParams, modified_otsu, otsu_threshold

REFERENCE_AREA = 1024 * 1024


@dataclass(frozen=True)
class PipelineConfig:
    median_window: int = 5
    clahe_tiles: tuple = (8, 8)
    clahe_clip: float = 0.01
    h_maxima_h: int = 30
    # None -> scaled from the 1024x1024 defaults (1000 and 50 px)
    min_clump_area: float | None = None
    min_nucleus_area: float | None = None
    prior_alpha: float = 0.05
    threshold_method: str = "modified"
    # None -> equivalent-area radius of the nucleus + 2 px, at least 5 px
    nucleus_disc_radius: float | None = None
    # "bright_field": cells darker than background (bright plateaus are background)
    # "dark_field": cells brighter than background (bright plateaus are cells)
    polarity: str = "bright_field"
    background_fraction: float = 0.9
    inpaint_nuclei: bool = True
    focus: FocusParams = field(default_factory=FocusParams)
    drlse: DrlseParams = field(default_factory=DrlseParams)

    def __post_init__(self):
        if self.median_window < 3 or self.median_window % 2 == 0:
            raise InvalidParameterError(f"median_window must be odd and >= 3, got {self.median_window}")
        ThresholdParams(self.prior_alpha)
        if self.h_maxima_h < 1:
            raise InvalidParameterError(f"h_maxima_h must be >= 1, got {self.h_maxima_h}")
        for name in ("min_clump_area", "min_nucleus_area"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise InvalidParameterError(f"{name} must be >= 0, got {v}")
        if self.nucleus_disc_radius is not None and not self.nucleus_disc_radius > 0:
            raise InvalidParameterError("nucleus_disc_radius must be positive")
        if self.threshold_method not in ("modified", "otsu"):
            raise InvalidParameterError(f"threshold_method must be 'modified' or 'otsu', got {self.threshold_method!r}")
        if self.polarity not in ("bright_field", "dark_field"):
            raise InvalidParameterError(f"polarity must be 'bright_field' or 'dark_field', got {self.polarity!r}")
        if not 0 < self.background_fraction <= 1:
            raise InvalidParameterError("background_fraction must lie in (0, 1]")

    def clump_area(self, shape):
        if self.min_clump_area is not None:
            return self.min_clump_area
        return 1000.0 * shape[0] * shape[1] / REFERENCE_AREA

    def nucleus_area(self, shape):
        if self.min_nucleus_area is not None:
            return self.min_nucleus_area
        return 50.0 * shape[0] * shape[1] / REFERENCE_AREA

    def to_dict(self):
        d = asdict(self)
        d["clahe_tiles"] = list(self.clahe_tiles)
        return d

    @classmethod
    def from_flat(cls, values):
        """Build from flat keys; ``drlse_<name>`` and ``focus_<name>`` address nested params."""
        top, drlse, focus = {}, {}, {}
        names = {f.name for f in fields(cls)}
        for key, value in values.items():
            if key.startswith("drlse_"):
                drlse[key[len("drlse_"):]] = value
            elif key.startswith("focus_"):
                focus[key[len("focus_"):]] = value
            elif key in names:
                top[key] = value
            else:
                raise InvalidParameterError(f"unknown configuration key {key!r}")
        if "clahe_tiles" in top:
            top["clahe_tiles"] = tuple(top["clahe_tiles"])
        return cls(drlse=DrlseParams(**drlse), focus=FocusParams(**focus), **top)


@dataclass
class NucleusResult:
    mask: np.ndarray
    centroids: list
    areas: list
    flagged: bool = False
    threshold: int | None = None
    ell: int | None = None


@dataclass
class ClumpRecord:
    clump_id: int
    clump_mask: np.ndarray
    nucleus_mask: np.ndarray
    nucleus_centroids: list
    cell_masks: list
    flagged: bool = False
    threshold: int | None = None
    ell: int | None = None


@dataclass
class SpecimenResult:
    edf: np.ndarray
    clump_labels: core.LabelMap
    clumps: list

    @property
    def nucleus_mask(self):
        out = np.zeros(self.edf.shape, dtype=bool)
        for c in self.clumps:
            out |= c.nucleus_mask
        return out

    @property
    def cell_masks(self):
        return [m for c in self.clumps for m in c.cell_masks]

    def summary(self):
        """JSON-ready description (no timestamps, so reruns compare equal)."""
        return {
            "n_clumps": self.clump_labels.count,
            "n_nuclei": sum(len(c.nucleus_centroids) for c in self.clumps),
            "n_cells": sum(len(c.cell_masks) for c in self.clumps),
            "clumps": [
                {
                    "clump_id": c.clump_id,
                    "area": int(c.clump_mask.sum()),
                    "flagged": c.flagged,
                    "threshold": c.threshold,
                    "ell": c.ell,
                    "nucleus_count": len(c.nucleus_centroids),
                    "cell_count": len(c.cell_masks),
                    "nucleus_centroids": [[round(r, 4), round(q, 4)] for r, q in c.nucleus_centroids],
                    "cells": [f"cells/cell_{c.clump_id}_{k}.png" for k in range(len(c.cell_masks))],
                }
                for c in self.clumps
            ],
        }


def clump_mask_from_edf(edf, cfg=PipelineConfig()):
    """Binary clump mask before labelling."""
    x = core.median_filter(edf, cfg.median_window)
    x = core.adaptive_hist_eq(x, cfg.clahe_tiles, cfg.clahe_clip)
    x = core.h_maxima(x, cfg.h_maxima_h)
    plateaus = core.regional_maxima(x)
    # In bright-field the bright plateaus are the empty background, not cells.
    mask = ~plateaus if cfg.polarity == "bright_field" else plateaus
    mask = core.fill_holes(mask)
    lm = core.connected_components(mask)
    if lm.count:
        too_big = np.concatenate([[False], lm.areas() > cfg.background_fraction * mask.size])
        mask = mask & ~too_big[lm.labels]
    return core.remove_small_components(mask, cfg.clump_area(mask.shape))


def segment_clumps(edf, cfg=PipelineConfig()):
    return core.connected_components(clump_mask_from_edf(core.as_gray(edf), cfg))


def segment_nuclei(edf, clump, cfg=PipelineConfig()):
    """Threshold the clump's own histogram and keep dark components as nuclei."""
    edf, clump = core.as_gray(edf), core.as_mask(clump)
    empty = np.zeros_like(clump)
    hist = Histogram.from_image(edf, clump)
    try:
        if cfg.threshold_method == "otsu":
            res = otsu_threshold(hist)
        else:
            res = modified_otsu(hist, ThresholdParams(cfg.prior_alpha))
    except NoValidThresholdError:
        return NucleusResult(empty, [], [], flagged=True)
    mask = clump & (edf <= res.threshold)
    mask = core.fill_holes(mask) & clump
    mask = core.remove_small_components(mask, cfg.nucleus_area(edf.shape))
    lm = core.connected_components(mask)
    labels = range(1, lm.count + 1)
    centroids = [tuple(float(v) for v in c) for c in ndi.center_of_mass(mask, lm.labels, labels)]
    return NucleusResult(mask, centroids, [int(a) for a in lm.areas()], False, res.threshold, res.ell)


def disc_radius(area, cfg=PipelineConfig()):
    if cfg.nucleus_disc_radius is not None:
        return float(cfg.nucleus_disc_radius)
    return max(5.0, math.sqrt(area / math.pi) + 2.0)


def _inpaint(img, holes):
    """Replace ``holes`` with the value of the nearest pixel outside them."""
    if not holes.any() or holes.all():
        return img
    _, (iy, ix) = ndi.distance_transform_edt(holes, return_indices=True)
    return img[iy, ix]


def segment_cytoplasm(edf, clump, centroids, cfg=PipelineConfig(), nucleus_mask=None, areas=None):
    """
    One mask per nucleus centroid.

    Zero centroids give no cells and a single centroid makes the whole clump
    one cell. Otherwise each cell is a level set started from a disc at its
    centroid and grown over the edge indicator of the EDF inside the clump.
    """
    edf, clump = core.as_gray(edf), core.as_mask(clump)
    if len(centroids) == 0:
        return []
    if len(centroids) == 1:
        return [clump.copy()]

    p = cfg.drlse
    margin = 4 + int(math.ceil(4 * p.sigma))
    rows, cols = np.nonzero(clump)
    r0, r1 = max(rows.min() - margin, 0), min(rows.max() + margin + 1, edf.shape[0])
    c0, c1 = max(cols.min() - margin, 0), min(cols.max() + margin + 1, edf.shape[1])
    img = edf[r0:r1, c0:c1].astype(np.float64)
    domain = clump[r0:r1, c0:c1]
    if cfg.inpaint_nuclei and nucleus_mask is not None:
        # nuclear rims would otherwise stop the contour right at its seed
        holes = ndi.binary_dilation(nucleus_mask[r0:r1, c0:c1], iterations=2) & domain
        img = _inpaint(img, holes)
    g = edge_indicator(img, p.sigma)
    if areas is None:
        areas = [0.0] * len(centroids)

    masks = []
    for (cy, cx), area in zip(centroids, areas):
        phi0 = init_phi_disc(c1 - c0, r1 - r0, (cy - r0, cx - c0), disc_radius(area, cfg), p.c0)
        cell = drlse_evolve(phi0, g, p, domain)
        full = np.zeros_like(clump)
        full[r0:r1, c0:c1] = cell
        masks.append(full)
    return masks


def _process_clump(edf, labels, clump_id, cfg):
    clump = labels.mask(clump_id)
    nuc = segment_nuclei(edf, clump, cfg)
    cells = segment_cytoplasm(edf, clump, nuc.centroids, cfg, nuc.mask, nuc.areas)
    return ClumpRecord(clump_id, clump, nuc.mask, nuc.centroids, cells, nuc.flagged, nuc.threshold, nuc.ell)


def segment_edf(edf, cfg=PipelineConfig(), jobs=1, timings=None):
    """
    Run the clump, nucleus and cytoplasm stages on an already fused image.

    Clumps are processed on up to ``jobs`` threads; records are always
    assembled in label order. Stage wall-clock seconds are added to
    ``timings`` when a dict is given.
    """
    timings = {} if timings is None else timings
    edf = core.as_gray(edf)
    t0 = time.perf_counter()
    labels = segment_clumps(edf, cfg)
    t1 = time.perf_counter()
    ids = range(1, labels.count + 1)
    if jobs > 1 and labels.count > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(lambda k: _process_clump(edf, labels, k, cfg), ids))
    else:
        records = [_process_clump(edf, labels, k, cfg) for k in ids]
    timings["clumps"] = t1 - t0
    timings["nuclei_and_cytoplasm"] = time.perf_counter() - t1
    return SpecimenResult(edf, labels, records)


def run_specimen(stack, cfg=PipelineConfig(), jobs=1, timings=None):
    """EDF fusion followed by the three segmentation stages."""
    timings = {} if timings is None else timings
    t0 = time.perf_counter()
    edf = fuse_edf(as_stack(stack), cfg.focus)
    timings["edf"] = time.perf_counter() - t0
    return segment_edf(edf, cfg, jobs, timings)


def with_overrides(cfg, **changes):
    """Copy of ``cfg`` with top-level fields replaced (None values ignored)."""
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
