"""Pixel-level primitives: color conversion, masking, crop/paste, resampling.

Images are numpy arrays in [0, 1]: RGB and Lab images are (H, W, 3),
grayscale images are (H, W). Grayscale is defined as CIELab lightness
L / 100 (not a luma weighted sum) so the same channel serves both the
shape-completion target and the lightness input of the colorizer.

Colorimetry is fixed to sRGB primaries, D65 white point, standard sRGB
transfer function. Bilinear resampling uses the half-pixel-centers
convention (same as OpenCV INTER_LINEAR).
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

# D65 reference white in XYZ, 2-degree observer.
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])

# sRGB (linear) -> XYZ and its inverse.
_RGB2XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ2RGB = np.linalg.inv(_RGB2XYZ)

_LAB_DELTA = 6.0 / 29.0


@dataclass(frozen=True)
class Box:
    """Axis-aligned integer rectangle in image coordinates (top-left origin)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box must have positive size, got w={self.w} h={self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"box origin must be non-negative, got x={self.x} y={self.y}")

    def validate_inside(self, height: int, width: int) -> None:
        if self.x + self.w > width or self.y + self.h > height:
            raise ValueError(
                f"box {self} exceeds image bounds {height}x{width}"
            )

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)


def _srgb_to_linear(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c: np.ndarray) -> np.ndarray:
    # abs/sign keeps the power branch defined for slightly negative
    # out-of-gamut intermediates; callers clip afterwards.
    return np.where(
        c <= 0.0031308,
        12.92 * c,
        1.055 * np.sign(c) * np.abs(c) ** (1.0 / 2.4) - 0.055,
    )


def rgb_to_lab(img: np.ndarray) -> np.ndarray:
    """Convert an sRGB image in [0,1] to CIELab (L in [0,100], ab in +-110)."""
    rgb = np.asarray(img, dtype=np.float64)
    xyz = _srgb_to_linear(rgb) @ _RGB2XYZ.T
    t = xyz / _WHITE_D65
    f = np.where(
        t > _LAB_DELTA**3,
        np.cbrt(t),
        t / (3.0 * _LAB_DELTA**2) + 4.0 / 29.0,
    )
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def lab_to_rgb(img: np.ndarray) -> np.ndarray:
    """Convert CIELab to sRGB in [0,1]; out-of-gamut values are clipped."""
    lab = np.asarray(img, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    t = np.where(
        f > _LAB_DELTA,
        f**3,
        3.0 * _LAB_DELTA**2 * (f - 4.0 / 29.0),
    )
    xyz = t * _WHITE_D65
    rgb = _linear_to_srgb(xyz @ _XYZ2RGB.T)
    return np.clip(rgb, 0.0, 1.0)


def rgb_to_gray(img: np.ndarray) -> np.ndarray:
    """Lightness channel L/100 of the image, in [0,1]."""
    return np.clip(rgb_to_lab(img)[..., 0] / 100.0, 0.0, 1.0)


def make_mask(box: Box, height: int, width: int) -> np.ndarray:
    """Binary (H, W) float mask: 1 inside the box, 0 outside."""
    box.validate_inside(height, width)
    mask = np.zeros((height, width), dtype=np.float64)
    mask[box.slices] = 1.0
    return mask


def erase(img: np.ndarray, mask: np.ndarray, fill: float) -> np.ndarray:
    """Replace masked pixels with a constant; all other pixels untouched."""
    img = np.asarray(img)
    if img.shape[:2] != mask.shape:
        raise ValueError(f"mask shape {mask.shape} does not match image {img.shape[:2]}")
    out = img.copy()
    m = mask > 0.5
    out[m] = fill
    return out


def crop_patch(img: np.ndarray, box: Box) -> np.ndarray:
    img = np.asarray(img)
    box.validate_inside(img.shape[0], img.shape[1])
    ys, xs = box.slices
    return img[ys, xs].copy()


def paste_patch(img: np.ndarray, patch: np.ndarray, box: Box) -> np.ndarray:
    img = np.asarray(img)
    box.validate_inside(img.shape[0], img.shape[1])
    if patch.shape[:2] != (box.h, box.w):
        raise ValueError(
            f"patch shape {patch.shape[:2]} does not match box {box.h}x{box.w}"
        )
    out = img.copy()
    ys, xs = box.slices
    out[ys, xs] = patch
    return out


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel-centers sampling."""
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be positive")
    img = np.asarray(img)
    if img.shape[:2] == (out_h, out_w):
        return img.copy()
    out = cv2.resize(
        img.astype(np.float64), (out_w, out_h), interpolation=cv2.INTER_LINEAR
    )
    return out


def resize_area(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Area-averaging downsample (used for building coarse training targets)."""
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be positive")
    img = np.asarray(img)
    if img.shape[:2] == (out_h, out_w):
        return img.copy()
    return cv2.resize(img.astype(np.float64), (out_w, out_h), interpolation=cv2.INTER_AREA)


def roi_resize(img: np.ndarray, box: Box, out_h: int = 64, out_w: int = 64) -> np.ndarray:
    """Crop the box and bilinearly resize the patch to a fixed size."""
    return resize_bilinear(crop_patch(img, box), out_h, out_w)


def alpha_blend(
    composed: np.ndarray, original: np.ndarray, box: Box, band: int
) -> np.ndarray:
    """Linear cross-fade over a band-wide frame just inside the box border.

    Pixels deeper than `band` inside the box come from `composed`; pixels
    outside the box come from `original`; within the band the weight ramps
    linearly from 0 at the border to 1 at depth `band`. A band larger than
    half the box's minimum dimension is clamped to that value.
    """
    if band < 0:
        raise ValueError("band must be non-negative")
    composed = np.asarray(composed, dtype=np.float64)
    original = np.asarray(original, dtype=np.float64)
    if composed.shape != original.shape:
        raise ValueError("image shapes differ")
    box.validate_inside(composed.shape[0], composed.shape[1])
    out = original.copy()
    if band == 0:
        ys, xs = box.slices
        out[ys, xs] = composed[ys, xs]
        return out
    band = min(band, box.w // 2, box.h // 2)
    # depth of each in-box pixel from the nearest box border, in pixels
    iy = np.arange(box.h)
    ix = np.arange(box.w)
    depth_y = np.minimum(iy, box.h - 1 - iy) + 1
    depth_x = np.minimum(ix, box.w - 1 - ix) + 1
    depth = np.minimum(depth_y[:, None], depth_x[None, :]).astype(np.float64)
    # depth band+0.5 and beyond is fully composed; depth 0.5 (border pixel
    # center at band=... ) ramps linearly
    alpha = np.clip((depth - 0.5) / band, 0.0, 1.0)
    if composed.ndim == 3:
        alpha = alpha[..., None]
    ys, xs = box.slices
    out[ys, xs] = alpha * composed[ys, xs] + (1.0 - alpha) * original[ys, xs]
    return out


def load_image(path: str) -> np.ndarray:
    """Read a PNG/JPEG file as an RGB image in [0,1]."""
    bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise IOError(f"cannot read image: {path}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB).astype(np.float64) / 255.0


def save_image(path: str, img: np.ndarray) -> None:
    """Write an RGB (or grayscale) image in [0,1] as PNG."""
    arr = np.clip(np.asarray(img), 0.0, 1.0)
    u8 = np.round(arr * 255.0).astype(np.uint8)
    if u8.ndim == 3:
        u8 = cv2.cvtColor(u8, cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(str(path), u8):
        raise IOError(f"cannot write image: {path}")
