"""Reading and writing images, masks, label maps and focal stacks."""

from pathlib import Path

import numpy as np
from PIL import Image

from .core import as_gray, as_mask
from .errors import InvalidInputError

IMAGE_SUFFIXES = (".png", ".pgm", ".tif", ".tiff")


def read_gray(path):
    """Read an 8-bit grayscale PNG/PGM/TIFF as a uint8 array."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "1", "P"):
                raise InvalidInputError(f"{path}: expected 8-bit grayscale, got mode {im.mode}")
            return np.array(im.convert("L"), dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise InvalidInputError(f"{path}: cannot read image ({exc})") from exc


def write_gray(path, img):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = "PPM" if path.suffix.lower() == ".pgm" else None
    Image.fromarray(as_gray(img), mode="L").save(path, format=fmt)


def read_mask(path):
    return read_gray(path) > 0


def write_mask(path, mask):
    write_gray(path, as_mask(mask).astype(np.uint8) * 255)


def write_labels16(path, labels):
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 65535:
        raise InvalidInputError("label values must fit in 16 bits")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(labels.astype(np.uint16)).save(path)


def read_labels16(path):
    with Image.open(path) as im:
        return np.array(im).astype(np.int32)


def write_float32(path, field):
    """Dump a float field as raw little-endian float32 with a ``.shape`` sidecar."""
    field = np.asarray(field, dtype="<f4")
    path = Path(path)
    field.tofile(path)
    path.with_suffix(path.suffix + ".shape").write_text(" ".join(map(str, field.shape)))


def list_planes(specimen_dir):
    """Plane image files of a specimen directory, in name order."""
    specimen_dir = Path(specimen_dir)
    if not specimen_dir.is_dir():
        raise InvalidInputError(f"{specimen_dir} is not a directory")
    return sorted(p for p in specimen_dir.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def read_stack(specimen_dir):
    """
    Load every plane image of a specimen directory as a list of uint8 arrays.

    Planes are ordered by file name, so zero-padded indices (``plane_00.png``
    ... ``plane_19.png``) give focal order.
    """
    files = list_planes(specimen_dir)
    if not files:
        raise InvalidInputError(f"{specimen_dir} contains no plane images")
    planes = []
    for f in files:
        img = read_gray(f)
        if planes and img.shape != planes[0].shape:
            raise InvalidInputError(
                f"{f}: plane shape {img.shape} differs from {files[0].name} {planes[0].shape}"
            )
        planes.append(img)
    return planes


def write_stack(specimen_dir, planes):
    specimen_dir = Path(specimen_dir)
    specimen_dir.mkdir(parents=True, exist_ok=True)
    width = max(2, len(str(len(planes) - 1)))
    for k, plane in enumerate(planes):
        write_gray(specimen_dir / f"plane_{k:0{width}d}.png", plane)
