"""Image chips: cropping, bilinear rescaling, and the resolution-degradation pipeline.

All pixel math happens on float buffers in [0, 1]. Resampling uses the
half-pixel-center convention: a destination pixel x maps back to source
coordinate (x + 0.5) * (w_in / w_out) - 0.5, clamped to the valid range,
and blends the four enclosing source pixels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import Dataset, Domain

__all__ = [
    "ImageChip",
    "BoundingBox",
    "crop_chip",
    "resize_bilinear",
    "degrade",
    "DEGRADE_COMMON_SIZE",
    "DEGRADE_BOTTLENECK_SIZE",
    "to_grayscale",
    "flatten",
    "scale_then_center_crop",
    "load_image",
    "save_image",
    "load_annotations",
    "chip_dataset_from_annotations",
]

# Degradation first rescales every chip to a common size, then through a
# low-resolution bottleneck, then up to whatever the model needs.
DEGRADE_COMMON_SIZE = (50, 50)
DEGRADE_BOTTLENECK_SIZE = (10, 10)

# ITU-R BT.601 luma weights.
_LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class ImageChip:
    """An image patch as an (height, width, channels) float array in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError("pixels must be (h, w, c) with 1 or 3 channels")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise ValueError("chip must have positive width and height")
        if not np.isfinite(px).all() or px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixel values must be finite and within [0, 1]")
        px = np.ascontiguousarray(px)
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class BoundingBox:
    """Pixel-coordinate box; (xmin, ymin) inclusive, (xmax, ymax) exclusive."""

    xmin: int
    ymin: int
    xmax: int
    ymax: int

    def __post_init__(self):
        if min(self.xmin, self.ymin, self.xmax, self.ymax) < 0:
            raise ValueError("box coordinates must be non-negative")
        if self.xmax <= self.xmin or self.ymax <= self.ymin:
            raise ValueError(f"degenerate box {self}")


def crop_chip(image: ImageChip, box: BoundingBox) -> ImageChip:
    """Copy the boxed region out of ``image``.

    Raises ValueError when the box reaches outside the image.
    """
    if box.xmax > image.width or box.ymax > image.height:
        raise ValueError(
            f"box {box} exceeds image bounds {image.width}x{image.height}"
        )
    return ImageChip(image.pixels[box.ymin : box.ymax, box.xmin : box.xmax].copy())


def _axis_map(out_n: int, in_n: int):
    src = (np.arange(out_n, dtype=np.float64) + 0.5) * (in_n / out_n) - 0.5
    src = np.clip(src, 0.0, in_n - 1.0)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, in_n - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(chip: ImageChip, out_w: int, out_h: int) -> ImageChip:
    """Rescale to (out_w, out_h) with half-pixel-center bilinear interpolation.

    Resizing to the input size reproduces it exactly; every output value
    is a convex combination of input values.
    """
    if out_w <= 0 or out_h <= 0:
        raise ValueError("output dimensions must be positive")
    x0, x1, fx = _axis_map(out_w, chip.width)
    y0, y1, fy = _axis_map(out_h, chip.height)
    p = chip.pixels
    wx = fx[None, :, None]
    wy = fy[:, None, None]
    top = (1.0 - wx) * p[np.ix_(y0, x0)] + wx * p[np.ix_(y0, x1)]
    bottom = (1.0 - wx) * p[np.ix_(y1, x0)] + wx * p[np.ix_(y1, x1)]
    out = (1.0 - wy) * top + wy * bottom
    # Convex blending cannot leave [min, max], but guard against rounding.
    return ImageChip(np.clip(out, 0.0, 1.0))


def degrade(chip: ImageChip, final_w: int, final_h: int, return_stages: bool = False):
    """Synthesize a low-resolution version of ``chip`` at (final_w, final_h).

    The chip is rescaled to the 50x50 common size, down through the 10x10
    bottleneck, then up to the requested final size; every stage is the
    bilinear resampler above.
    """
    common = resize_bilinear(chip, *DEGRADE_COMMON_SIZE)
    bottleneck = resize_bilinear(common, *DEGRADE_BOTTLENECK_SIZE)
    out = resize_bilinear(bottleneck, final_w, final_h)
    if return_stages:
        return out, (common, bottleneck)
    return out


def to_grayscale(chip: ImageChip) -> ImageChip:
    """Collapse a 3-channel chip to single-channel BT.601 luma."""
    if chip.channels != 3:
        raise ValueError("to_grayscale expects a 3-channel chip")
    p = chip.pixels
    # Grouped so the weights sum to exactly 1.0 in float64 and pure white
    # maps to exactly 1.0.
    luma = p[:, :, 0] * _LUMA[0] + (p[:, :, 1] * _LUMA[1] + p[:, :, 2] * _LUMA[2])
    return ImageChip(np.clip(luma, 0.0, 1.0)[:, :, None])


def flatten(chip: ImageChip) -> np.ndarray:
    """Row-major, channel-interleaved feature vector of the chip."""
    return chip.pixels.reshape(-1).copy()


def scale_then_center_crop(chip: ImageChip, scale_wh=(226, 226), crop_wh=(224, 224)) -> ImageChip:
    """Rescale then center-crop; optional recipe, unused by the default pipeline."""
    sw, sh = scale_wh
    cw, ch = crop_wh
    if cw > sw or ch > sh:
        raise ValueError("crop size must not exceed the scaled size")
    scaled = resize_bilinear(chip, sw, sh)
    x0 = (sw - cw) // 2
    y0 = (sh - ch) // 2
    return crop_chip(scaled, BoundingBox(x0, y0, x0 + cw, y0 + ch))


def load_image(path) -> ImageChip:
    """Read an 8-bit PNG/PGM file; values are mapped to [0, 1] by /255."""
    with Image.open(path) as img:
        if img.mode == "L":
            arr = np.asarray(img, dtype=np.float64)[:, :, None]
        else:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return ImageChip(arr / 255.0)


def save_image(chip: ImageChip, path) -> None:
    """Write a chip as an 8-bit image; format follows the file extension."""
    arr = np.round(chip.pixels * 255.0).astype(np.uint8)
    if chip.channels == 1:
        img = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        img = Image.fromarray(arr, mode="RGB")
    img.save(path)


def load_annotations(path):
    """Parse a chip-annotation CSV into (image_path, BoundingBox, class) rows.

    Expected columns: image_path,xmin,ymin,xmax,ymax,class.
    """
    required = ["image_path", "xmin", "ymin", "xmax", "ymax", "class"]
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if reader.fieldnames is None or c not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: annotation file missing columns {missing}")
        for row in reader:
            box = BoundingBox(
                int(row["xmin"]), int(row["ymin"]), int(row["xmax"]), int(row["ymax"])
            )
            out.append((row["image_path"], box, row["class"]))
    return out


def chip_dataset_from_annotations(
    annotations_path,
    chip_w: int,
    chip_h: int,
    domain: Domain = Domain.SOURCE,
    grayscale: bool = False,
    images_root=None,
) -> Dataset:
    """Crop, square-rescale and flatten every annotated box into a Dataset.

    Aspect ratios are distorted to the common square size on purpose;
    grayscale conversion happens after the rescale when requested.
    """
    rows = load_annotations(annotations_path)
    if not rows:
        raise ValueError(f"{annotations_path}: no annotated boxes")
    root = Path(images_root) if images_root is not None else Path(annotations_path).parent
    cache: dict[str, ImageChip] = {}
    features = []
    class_names: list[str] = []
    labels = []
    for image_path, box, cls in rows:
        if image_path not in cache:
            cache[image_path] = load_image(root / image_path)
        chip = resize_bilinear(crop_chip(cache[image_path], box), chip_w, chip_h)
        if grayscale and chip.channels == 3:
            chip = to_grayscale(chip)
        features.append(flatten(chip))
        if cls not in class_names:
            class_names.append(cls)
        labels.append(class_names.index(cls))
    feats = np.vstack(features)
    return Dataset(
        features=feats,
        labels=np.asarray(labels, dtype=np.int64),
        domains=np.full(len(labels), int(domain), dtype=np.int64),
        class_names=tuple(class_names),
    )
