"""Seeded, bit-reproducible augmentations on raw RGB byte images.

Images are uint8 arrays of shape (height, width, 3). All operations return
new arrays, preserve dimensions, and consume generator draws in a fixed
documented order, so equal seeds give byte-equal outputs.
"""

from __future__ import annotations

import math

import numpy as np

from .rng import Rng

# ITU-R BT.601 luma coefficients, round-half-up.
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114

# conventional patch parameters for erasing and grayscale replacement
DEFAULT_PATCH_PROBABILITY = 0.5
DEFAULT_AREA_RANGE = (0.02, 0.4)
DEFAULT_ASPECT_RANGE = (0.3, 3.33)


def check_image(img) -> np.ndarray:
    a = np.asarray(img)
    if a.dtype != np.uint8 or a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"image must be uint8 (H, W, 3), got {a.dtype} {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"image must be at least 1x1, got {a.shape[:2]}")
    return a


def horizontal_flip(img) -> np.ndarray:
    """Mirror columns: output column j takes input column W-1-j."""
    return np.ascontiguousarray(check_image(img)[:, ::-1, :])


def pad_crop_at(img, pad: int, top: int, left: int) -> np.ndarray:
    """Zero-pad all sides by ``pad`` and crop the original-size window with
    its corner at (top, left) in padded coordinates."""
    a = check_image(img)
    if pad < 0:
        raise ValueError(f"pad must be >= 0, got {pad}")
    if pad == 0:
        return a.copy()
    h, w = a.shape[:2]
    if not (0 <= top <= 2 * pad and 0 <= left <= 2 * pad):
        raise ValueError(f"crop corner ({top}, {left}) outside [0, {2 * pad}]")
    padded = np.zeros((h + 2 * pad, w + 2 * pad, 3), dtype=np.uint8)
    padded[pad:pad + h, pad:pad + w] = a
    return np.ascontiguousarray(padded[top:top + h, left:left + w])


def pad_random_crop(img, pad: int, rng: Rng) -> np.ndarray:
    """Zero-pad by ``pad`` and crop a uniformly random original-size window.

    Draw order: top offset, then left offset. pad=0 is the identity.
    """
    a = check_image(img)
    if pad < 0:
        raise ValueError(f"pad must be >= 0, got {pad}")
    if pad == 0:
        return a.copy()
    top = rng.next_int(2 * pad + 1)
    left = rng.next_int(2 * pad + 1)
    return pad_crop_at(a, pad, top, left)


def _check_patch_params(p: float, area_range, aspect_range) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must be in [0, 1], got {p}")
    area_lo, area_hi = area_range
    if not 0.0 < area_lo <= area_hi < 1.0:
        raise ValueError(f"area range must satisfy 0 < lo <= hi < 1, got {area_range}")
    aspect_lo, aspect_hi = aspect_range
    if not 0.0 < aspect_lo <= aspect_hi:
        raise ValueError(f"aspect range must satisfy 0 < lo <= hi, got {aspect_range}")


def _select_patch(h: int, w: int, area_range, aspect_range,
                  rng: Rng) -> tuple[int, int, int, int] | None:
    """Rectangle selection shared by erasing and grayscale replacement.

    Up to 10 attempts; each draws an area ratio then an aspect ratio
    (height/width). Side lengths are rounded to the nearest integer. On a
    fit, the top then left corner are drawn; after 10 misses returns None.
    """
    area_lo, area_hi = area_range
    aspect_lo, aspect_hi = aspect_range
    for _ in range(10):
        area = (area_lo + (area_hi - area_lo) * rng.next_uniform()) * h * w
        aspect = aspect_lo + (aspect_hi - aspect_lo) * rng.next_uniform()
        ph = int(round(math.sqrt(area * aspect)))
        pw = int(round(math.sqrt(area / aspect)))
        if 1 <= ph <= h and 1 <= pw <= w:
            top = rng.next_int(h - ph + 1)
            left = rng.next_int(w - pw + 1)
            return top, left, ph, pw
    return None


def random_erasing(img, p: float, area_range, aspect_range, rng: Rng) -> np.ndarray:
    """With probability p, fill a random rectangle with the per-image channel mean.

    Draw order: one uniform for the probability gate, then the rectangle
    protocol of ``_select_patch``. The fill is each channel's mean over the
    whole input image, rounded half-up. ``DEFAULT_*`` module constants hold
    the conventional parameter choices.
    """
    a = check_image(img)
    _check_patch_params(p, area_range, aspect_range)
    if rng.next_uniform() >= p:
        return a.copy()
    rect = _select_patch(a.shape[0], a.shape[1], area_range, aspect_range, rng)
    if rect is None:
        return a.copy()
    top, left, ph, pw = rect
    fill = np.floor(a.reshape(-1, 3).mean(axis=0) + 0.5).astype(np.uint8)
    out = a.copy()
    out[top:top + ph, left:left + pw] = fill
    return out


def grayscale_patch(img, p: float, area_range, aspect_range, rng: Rng) -> np.ndarray:
    """With probability p, replace a random rectangle's RGB by its luma.

    Same selection protocol as :func:`random_erasing`; inside the rectangle
    each pixel becomes (Y, Y, Y) with Y = round(0.299 R + 0.587 G + 0.114 B),
    round-half-up, clamped to [0, 255]. Pixels outside are untouched.
    """
    a = check_image(img)
    _check_patch_params(p, area_range, aspect_range)
    if rng.next_uniform() >= p:
        return a.copy()
    rect = _select_patch(a.shape[0], a.shape[1], area_range, aspect_range, rng)
    if rect is None:
        return a.copy()
    top, left, ph, pw = rect
    out = a.copy()
    region = out[top:top + ph, left:left + pw].astype(np.float64)
    y = np.floor(_LUMA_R * region[..., 0] + _LUMA_G * region[..., 1]
                 + _LUMA_B * region[..., 2] + 0.5)
    y = np.clip(y, 0.0, 255.0).astype(np.uint8)
    out[top:top + ph, left:left + pw] = y[..., None]
    return out


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM (P6, maxval 255) into a uint8 (H, W, 3) array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":  # comment runs to end of line
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PPM header")
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    need = width * height * 3
    raster = data[pos:pos + need]
    if len(raster) != need:
        raise ValueError(f"{path}: expected {need} raster bytes, got {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(path, img) -> None:
    """Write a uint8 (H, W, 3) array as binary PPM (P6, maxval 255)."""
    a = check_image(img)
    h, w = a.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(a).tobytes())
