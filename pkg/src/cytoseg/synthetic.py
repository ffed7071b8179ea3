"""
Seeded synthetic bright-field specimens with per-cell ground truth.

Cells are ellipses with one elliptical nucleus each. Light is attenuated
multiplicatively (optical densities add), so overlapping cytoplasm is darker
than single cytoplasm and nuclei are the darkest structures. Every cell has a
focal plane; plane ``z`` renders it blurred by ``min(0.8 * |z - plane|, 6)``.

When ``overlap_fraction > 0`` cells come in pairs: every odd-indexed cell
overlaps its predecessor so that ``|A & B| / min(|A|, |B|)`` is within 0.1 of
the target; an unpaired last cell stays solitary. Distinct pairs/solitary
cells are kept apart by a background gap.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as ndi

from .errors import GenerationFailureError, InvalidParameterError

MAX_ROUNDS = 10_000
OVERLAP_TOLERANCE = 0.1


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    image_size: int = 256
    cell_count: int = 3
    overlap_fraction: float = 0.3
    plane_count: int = 20
    # (mean, std) of each class in the in-focus image
    background: tuple = (215.0, 2.0)
    cytoplasm: tuple = (176.0, 5.0)
    nucleus: tuple = (60.0, 5.0)
    blur_per_plane: float = 0.8
    blur_cap: float = 6.0
    # sizes at 256 px; scaled linearly with image_size
    cell_major: tuple = (24.0, 34.0)
    cell_minor: tuple = (18.0, 26.0)
    nucleus_radius: tuple = (5.0, 7.0)
    gap: float = 8.0

    def __post_init__(self):
        if not self.nucleus[0] < self.cytoplasm[0] < self.background[0]:
            raise InvalidParameterError("need nucleus mean < cytoplasm mean < background mean")
        if not 0 <= self.overlap_fraction <= 0.6:
            raise InvalidParameterError(f"overlap_fraction must lie in [0, 0.6], got {self.overlap_fraction}")
        if self.cell_count < 0 or self.plane_count < 1 or self.image_size < 16:
            raise InvalidParameterError("cell_count >= 0, plane_count >= 1 and image_size >= 16 required")

    @property
    def scale(self):
        return self.image_size / 256.0


@dataclass(frozen=True)
class Ellipse:
    cy: float
    cx: float
    a: float
    b: float
    theta: float

    def mask(self, shape, grow=0.0):
        yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
        dy, dx = yy - self.cy, xx - self.cx
        c, s = np.cos(self.theta), np.sin(self.theta)
        u = (dx * c + dy * s) / (self.a + grow)
        v = (-dx * s + dy * c) / (self.b + grow)
        return u * u + v * v <= 1.0


@dataclass
class SyntheticSpecimen:
    stack: list
    cells: list
    nuclei: list
    reference: np.ndarray
    cell_planes: list
    cell_shapes: list = field(default_factory=list)
    nucleus_shapes: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.stack, self.cells, self.nuclei))


def overlap_ratio(a, b):
    smaller = min(int(a.sum()), int(b.sum()))
    return int(np.logical_and(a, b).sum()) / smaller if smaller else 0.0


def _random_cell(rng, spec, center=None):
    k = spec.scale
    a = rng.uniform(*spec.cell_major) * k
    b = min(rng.uniform(*spec.cell_minor) * k, a)
    if center is None:
        m = a + 4 * k
        center = rng.uniform(m, spec.image_size - m, size=2)
    return Ellipse(float(center[0]), float(center[1]), a, b, rng.uniform(0, np.pi))


def _inside_frame(mask, margin):
    m = int(np.ceil(margin))
    return not (mask[:m].any() or mask[-m:].any() or mask[:, :m].any() or mask[:, -m:].any())


def _place_cell(rng, spec, shape, cells, masks, partner):
    gap = spec.gap * spec.scale
    target = spec.overlap_fraction
    for _ in range(MAX_ROUNDS):
        if partner is None:
            cand = _random_cell(rng, spec)
        else:
            p = cells[partner]
            reach = rng.uniform(0.3, 1.3) * (p.a + p.b) * 0.75
            ang = rng.uniform(0, 2 * np.pi)
            cand = _random_cell(rng, spec, (p.cy + reach * np.sin(ang), p.cx + reach * np.cos(ang)))
        m = cand.mask(shape)
        if not _inside_frame(m, 4 * spec.scale):
            continue
        grown = cand.mask(shape, grow=gap)
        if any(np.logical_and(grown, om).any() for j, om in enumerate(masks) if j != partner):
            continue
        if partner is not None and abs(overlap_ratio(m, masks[partner]) - target) > OVERLAP_TOLERANCE:
            continue
        return cand, m
    raise GenerationFailureError(f"could not place cell {len(cells)} after {MAX_ROUNDS} rounds")


def _place_nucleus(rng, spec, shape, cell, cell_mask, other_masks, nuclei_masks):
    k = spec.scale
    inner = ndi.binary_erosion(cell_mask, iterations=max(2, int(round(2 * k))))
    for _ in range(MAX_ROUNDS):
        r = rng.uniform(*spec.nucleus_radius) * k
        off_u, off_v = rng.uniform(-0.35, 0.35, size=2)
        c, s = np.cos(cell.theta), np.sin(cell.theta)
        du, dv = off_u * cell.a, off_v * cell.b
        nuc = Ellipse(cell.cy + du * s + dv * c, cell.cx + du * c - dv * s,
                      r * rng.uniform(1.0, 1.2), r, rng.uniform(0, np.pi))
        nm = nuc.mask(shape)
        if not nm.any() or np.any(nm & ~inner):
            continue
        halo = nuc.mask(shape, grow=3 * k)
        # keep the nucleus clear of other cells' rims and of other nuclei
        if any((halo & om).any() and not (halo <= om).all() for om in other_masks):
            continue
        if any((halo & n).any() for n in nuclei_masks):
            continue
        return nuc, nm
    raise GenerationFailureError("could not place a nucleus inside its cell")


def _texture(rng, shape, mask, rel_std):
    t = ndi.gaussian_filter(rng.standard_normal(shape), 1.0)
    t /= t.std() or 1.0
    return t * rel_std * mask


def generate_specimen(spec=SynthSpec()):
    """
    Render a focal stack and its ground truth.

    Returns a ``SyntheticSpecimen``; iterating it yields
    ``(stack, gt_cells, gt_nuclei)``.
    """
    rng = np.random.default_rng(spec.seed)
    shape = (spec.image_size, spec.image_size)
    cells, masks = [], []
    for k in range(spec.cell_count):
        partner = k - 1 if spec.overlap_fraction > 0 and k % 2 == 1 else None
        cell, m = _place_cell(rng, spec, shape, cells, masks, partner)
        cells.append(cell)
        masks.append(m)

    nuclei, nmasks = [], []
    for k, (cell, m) in enumerate(zip(cells, masks)):
        others = [om for j, om in enumerate(masks) if j != k]
        nuc, nm = _place_nucleus(rng, spec, shape, cell, m, others, nmasks)
        nuclei.append(nuc)
        nmasks.append(nm)

    bg, bg_std = spec.background
    cyto, cyto_std = spec.cytoplasm
    nucl, nucl_std = spec.nucleus
    densities = []
    for m, nm in zip(masks, nmasks):
        d = m * np.log(bg / cyto) + _texture(rng, shape, m & ~nm, cyto_std / cyto)
        d += nm * np.log(cyto / nucl) + _texture(rng, shape, nm, nucl_std / nucl)
        densities.append(d)
    planes_of = [int(z) for z in rng.integers(0, spec.plane_count, size=spec.cell_count)]

    def render(blurs):
        total = np.zeros(shape)
        for d, sigma in zip(densities, blurs):
            total += ndi.gaussian_filter(d, sigma, mode="nearest") if sigma > 0 else d
        return bg * np.exp(-total)

    stack = []
    for z in range(spec.plane_count):
        sigmas = [min(spec.blur_per_plane * abs(z - pz), spec.blur_cap) for pz in planes_of]
        img = render(sigmas) + rng.normal(0.0, bg_std, size=shape)
        stack.append(np.clip(np.rint(img), 0, 255).astype(np.uint8))
    reference = np.clip(np.rint(render([0.0] * len(densities))), 0, 255).astype(np.uint8)
    return SyntheticSpecimen(stack, masks, nmasks, reference, planes_of, cells, nuclei)


def corpus_specs(n=8, base_seed=2015, image_size=256, plane_count=20, overlap_fraction=0.3):
    """Specs for an ``n``-specimen corpus cycling through 2..5 cells per specimen."""
    return [SynthSpec(seed=base_seed + i, image_size=image_size, cell_count=2 + i % 4,
                      overlap_fraction=overlap_fraction, plane_count=plane_count)
            for i in range(n)]


def uneven_clump(seed=0, size=128, ramp=(90.0, 210.0), nucleus_mean=55.0, noise=4.0):
    """
    A single cell whose cytoplasm brightness ramps across the clump.

    The dark nucleus is under 5 % of the cell, the regime where plain Otsu
    splits the uneven cytoplasm instead of isolating the nucleus. Returns
    ``(image, cell_mask, nucleus_mask)``.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    c = size / 2.0
    cell = ((yy - c) / (0.43 * size)) ** 2 + ((xx - c) / (0.35 * size)) ** 2 <= 1
    nuc = (yy - c + 4 * size / 128) ** 2 + (xx - c - 2 * size / 128) ** 2 <= (11 * size / 128) ** 2
    img = ramp[0] + (ramp[1] - ramp[0]) * xx / size + rng.normal(0, noise, (size, size))
    img[nuc] = rng.normal(nucleus_mean, 5.0, int(nuc.sum()))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), cell, nuc
