"""Pure image operations for the hand preprocessing pipeline.

Array conventions used throughout the package:

* depth image      -- 2D integer array (row-major, shape ``(h, w)``),
  values in millimeters, 0 means "no reading" and is never a valid depth.
* intensity image  -- 2D array; an integer dtype marks the [0, 255]
  domain, a float dtype marks the normalized [0, 1] domain.
* binary image     -- 2D ``uint8`` array with values in {0, 1}.

All functions are pure: inputs are never modified and a fresh array is
returned.  Nearest-neighbor sampling rounds half away from zero
(``floor(x + 0.5)``); bounding-box centering places odd leftover margins
on the right/bottom.  Both conventions are fixed here and relied on by
the feature extractors.
"""

from dataclasses import dataclass

import numpy as np

from fingerspell.errors import (
    AllZeroImageError,
    ContentLargerThanTargetError,
    DimensionMismatchError,
    WrongInputSizeError,
)

DEFAULT_MAX_HAND_DEPTH_MM = 120


@dataclass(frozen=True)
class MaskAlignment:
    """Scaling + translation mapping intensity pixel coords into mask coords.

    Output pixel (x, y) of :func:`align_mask` samples the source mask at
    ``(x * scale_x + offset_x, y * scale_y + offset_y)``.  The default is
    the identity (registered cameras / synthetic data).
    """

    scale_x: float = 1.0
    scale_y: float = 1.0
    offset_x: float = 0.0
    offset_y: float = 0.0

    def __post_init__(self):
        if self.scale_x <= 0 or self.scale_y <= 0:
            raise ValueError("alignment scales must be positive")


def min_nonzero_depth(img: np.ndarray) -> int:
    """Smallest nonzero value in a depth image (the closest hand surface).

    Raises :class:`AllZeroImageError` when every pixel is 0.
    """
    nonzero = img[img > 0]
    if nonzero.size == 0:
        raise AllZeroImageError("depth image has no nonzero pixel")
    return int(nonzero.min())


def remove_background(img: np.ndarray, t: int, d: int) -> np.ndarray:
    """Zero every pixel farther than ``t + d`` (background elimination).

    ``d`` is the closest hand depth (see :func:`min_nonzero_depth`) and
    ``t`` the maximum hand depth in millimeters.
    """
    if t <= 0:
        raise ValueError("maximum hand depth t must be positive")
    out = img.copy()
    out[out > t + d] = 0
    return out


def normalize_depth(img: np.ndarray, d: int) -> np.ndarray:
    """Subtract ``d - 1`` from every nonzero pixel.

    With ``d`` the minimum nonzero depth of the image, the closest pixel
    of the result is always exactly 1, making images depth-independent.
    """
    out = img.copy()
    out[out > 0] -= d - 1
    return out


def make_mask(img: np.ndarray) -> np.ndarray:
    """Binary mask: 1 where the image is nonzero (hand), 0 elsewhere."""
    return (img > 0).astype(np.uint8)


def align_mask(mask: np.ndarray, a: MaskAlignment, target_w: int, target_h: int) -> np.ndarray:
    """Resample a mask through a scale+offset map with nearest-neighbor lookup.

    Out-of-bounds samples become 0.  With the identity alignment and
    matching target size the output equals the input.
    """
    h, w = mask.shape
    xs = np.arange(target_w) * a.scale_x + a.offset_x
    ys = np.arange(target_h) * a.scale_y + a.offset_y
    ix = np.floor(xs + 0.5).astype(np.int64)
    iy = np.floor(ys + 0.5).astype(np.int64)
    ok_x = (ix >= 0) & (ix < w)
    ok_y = (iy >= 0) & (iy < h)
    out = np.zeros((target_h, target_w), dtype=np.uint8)
    if ok_x.any() and ok_y.any():
        out[np.ix_(ok_y, ok_x)] = mask[np.ix_(iy[ok_y], ix[ok_x])]
    return out


def apply_mask(img: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Element-wise multiply an image by a {0,1} mask (hand segmentation)."""
    if img.shape != mask.shape:
        raise DimensionMismatchError(
            f"image {img.shape} and mask {mask.shape} differ in size"
        )
    return img * mask.astype(img.dtype)


def bounding_box_center(img: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    """Center the nonzero content on a ``target_h x target_w`` zero canvas.

    The tight bounding box of nonzero pixels is pasted with its top-left
    corner at ``((target - box) // 2)``, so odd leftover margins get the
    extra pixel on the right/bottom.  An image with no nonzero pixel
    yields an all-zero canvas.
    """
    rows = np.any(img != 0, axis=1)
    cols = np.any(img != 0, axis=0)
    canvas = np.zeros((target_h, target_w), dtype=img.dtype)
    if not rows.any():
        return canvas
    y0, y1 = np.nonzero(rows)[0][[0, -1]]
    x0, x1 = np.nonzero(cols)[0][[0, -1]]
    bh = int(y1 - y0 + 1)
    bw = int(x1 - x0 + 1)
    if bh > target_h or bw > target_w:
        raise ContentLargerThanTargetError(
            f"content {bw}x{bh} exceeds target {target_w}x{target_h}"
        )
    oy = (target_h - bh) // 2
    ox = (target_w - bw) // 2
    canvas[oy : oy + bh, ox : ox + bw] = img[y0 : y1 + 1, x0 : x1 + 1]
    return canvas


def resize(img: np.ndarray, target_w: int, target_h: int, mode: str = "bilinear") -> np.ndarray:
    """Resize to ``target_w x target_h`` with bilinear or nearest sampling.

    Bilinear is meant for depth/intensity images, nearest for binary ones
    (the output then stays in {0, 1}).  Integer inputs are rounded back to
    their integer dtype; float inputs stay float.  Pixel centers are
    aligned: source coordinate of output pixel ``i`` is
    ``(i + 0.5) * in/out - 0.5`` (bilinear) or ``floor((i + 0.5) * in/out)``
    (nearest).
    """
    if target_w <= 0 or target_h <= 0:
        raise ValueError("target dimensions must be positive")
    if mode not in ("bilinear", "nearest"):
        raise ValueError(f"unknown resize mode {mode!r}")
    h, w = img.shape
    if (w, h) == (target_w, target_h):
        return img.copy()

    if mode == "nearest":
        ix = np.floor((np.arange(target_w) + 0.5) * (w / target_w)).astype(np.int64)
        iy = np.floor((np.arange(target_h) + 0.5) * (h / target_h)).astype(np.int64)
        np.clip(ix, 0, w - 1, out=ix)
        np.clip(iy, 0, h - 1, out=iy)
        return img[np.ix_(iy, ix)].copy()

    fx = np.clip((np.arange(target_w) + 0.5) * (w / target_w) - 0.5, 0, w - 1)
    fy = np.clip((np.arange(target_h) + 0.5) * (h / target_h) - 0.5, 0, h - 1)
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = fx - x0
    wy = (fy - y0)[:, None]

    src = img.astype(np.float64)
    # lerp form keeps constant regions exactly constant in float arithmetic
    top = src[np.ix_(y0, x0)] + wx * (src[np.ix_(y0, x1)] - src[np.ix_(y0, x0)])
    bot = src[np.ix_(y1, x0)] + wx * (src[np.ix_(y1, x1)] - src[np.ix_(y1, x0)])
    out = top + wy * (bot - top)

    if np.issubdtype(img.dtype, np.integer):
        out = np.rint(out)
        info = np.iinfo(img.dtype)
        out = np.clip(out, info.min, info.max).astype(img.dtype)
    return out


def deinterlace(img: np.ndarray) -> np.ndarray:
    """Drop the odd scan lines of a 128x128 image and resize back to 64x64.

    Keeps rows 0, 2, ..., 126 (interlacing artifacts live on the dropped
    field), giving a 128x64 image that is then bilinearly resized to 64x64.
    """
    if img.shape != (128, 128):
        raise WrongInputSizeError(f"deinterlace expects 128x128, got {img.shape}")
    kept = img[0::2, :]
    return resize(kept, 64, 64, mode="bilinear")


def equalize_histogram(img: np.ndarray) -> np.ndarray:
    """Histogram-equalize the hand (nonzero) pixels of a [0,255] image.

    Background zeros are excluded from the histogram and stay 0; hand
    pixels are remapped with the standard 256-bin rule
    ``v -> round(255 * (cdf(v) - cdf_min) / (n_hand - cdf_min))``, clamped
    to at least 1 so the hand/background partition survives (the textbook
    rule would send the darkest hand bin to 0).  When all hand pixels
    share a single value the rule degenerates (0/0) and they map to 255.
    An image without hand pixels is returned unchanged.
    """
    if not np.issubdtype(img.dtype, np.integer):
        raise ValueError("equalize_histogram expects the integer [0,255] domain")
    hand = img[img > 0]
    if hand.size == 0:
        return img.copy()
    hist = np.bincount(hand.astype(np.int64).ravel(), minlength=256)
    cdf = hist.cumsum()
    vmin = int(np.nonzero(hist)[0][0])
    cdf_min = cdf[vmin]
    n_hand = hand.size
    lut = np.zeros(256, dtype=img.dtype)
    if n_hand == cdf_min:
        lut[hist > 0] = 255
    else:
        mapped = np.floor(255.0 * (cdf - cdf_min) / (n_hand - cdf_min) + 0.5)
        lut[:] = np.clip(mapped, 1, 255).astype(img.dtype)
    lut[0] = 0
    return lut[img]


def normalize_unit(img: np.ndarray) -> np.ndarray:
    """Map the integer [0,255] domain to the normalized [0,1] float domain."""
    if not np.issubdtype(img.dtype, np.integer):
        raise ValueError("normalize_unit expects the integer [0,255] domain")
    return img.astype(np.float64) / 255.0
