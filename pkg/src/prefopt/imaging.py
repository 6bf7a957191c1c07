"""Deterministic 12-parameter color enhancement.

Parameter vector layout (all in [0, 1], 0.5 everywhere is the exact
identity):

    0 brightness   1 contrast   2 saturation
    3-5 shadows RGB offsets   6-8 midtones RGB offsets   9-11 highlights RGB

Transfer functions, applied per pixel in this fixed order on channels
linearized with a gamma 2.2 approximation:

    1. brightness:  v += (b - 0.5)                       [2(b-0.5) * 0.5]
    2. contrast:    v  = 0.5 + (v - 0.5) * tan((0.9c + 0.05) * pi/2)
                    (denominator tan(pi/4) = 1, so c = 0.5 is identity)
    3. tonal RGB:   v_ch += 2(t - 0.5) * 0.3 * w_region(L), where L is the
                    pre-adjustment (linear, Rec.709) luminance and the
                    region weights are the quadratic Bernstein hats
                    w_sh = (1-L)^2, w_mid = 2L(1-L), w_hi = L^2 (sum = 1)
    4. saturation:  v = L' + 2s * (v - L') with L' the current luminance
    5. clamp to [0, 1], de-linearize, quantize round-half-up to 8 bits.

All constants above are the published contract; the pipeline is pure and
bit-exact for a given input and parameter vector.
"""

import numpy as np

from .errors import InvalidInputError
from .plane import GRID_SIZE

PARAM_COUNT = 12
GAMMA = 2.2
LUMA = np.array([0.2126, 0.7152, 0.0722])
TONAL_STRENGTH = 0.3
THUMBNAIL_MAX_SIDE = 256


def _check_params(p):
    arr = np.asarray(p, dtype=np.float64).reshape(-1)
    if arr.size != PARAM_COUNT:
        raise InvalidInputError(f"enhancement needs exactly {PARAM_COUNT} parameters, got {arr.size}")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise InvalidInputError("enhancement parameters must lie in [0, 1]")
    return arr


def _check_image(image):
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8 or arr.size == 0:
        raise InvalidInputError("expected a non-empty 8-bit RGB raster (H, W, 3)")
    return arr


def render(image, params):
    """Apply the 12-parameter enhancement; same bytes in, same bytes out."""
    img = _check_image(image)
    p = _check_params(params)
    v = (img.astype(np.float64) / 255.0) ** GAMMA

    lum_pre = v @ LUMA
    v = v + (p[0] - 0.5)

    # Normalized so the gain is exactly 1.0 (same tan bits) at c = 0.5, and
    # written as an offset from v so the identity stays bit-exact.
    gain = np.tan((0.9 * p[1] + 0.05) * np.pi / 2.0) / np.tan((0.9 * 0.5 + 0.05) * np.pi / 2.0)
    v = v + (gain - 1.0) * (v - 0.5)

    w_shadow = (1.0 - lum_pre) ** 2
    w_high = lum_pre**2
    w_mid = 1.0 - w_shadow - w_high
    offsets = 2.0 * (p[3:12].reshape(3, 3) - 0.5) * TONAL_STRENGTH
    v = v + (
        w_shadow[..., None] * offsets[0]
        + w_mid[..., None] * offsets[1]
        + w_high[..., None] * offsets[2]
    )

    lum_now = (v @ LUMA)[..., None]
    v = v + (2.0 * p[2] - 1.0) * (v - lum_now)

    np.clip(v, 0.0, 1.0, out=v)
    v **= 1.0 / GAMMA
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def downscale(image, max_side=THUMBNAIL_MAX_SIDE):
    """Area-average downscale so the longest side is at most max_side."""
    from PIL import Image

    img = _check_image(image)
    h, w = img.shape[:2]
    scale = max(h, w) / max_side
    if scale <= 1.0:
        return img.copy()
    new_w = max(1, round(w / scale))
    new_h = max(1, round(h / scale))
    resized = Image.fromarray(img).resize((new_w, new_h), Image.BOX)
    return np.asarray(resized)


def thumbnail_grid(image, plane):
    """25 rendered thumbnails for the plane's grid, row-major."""
    if plane.dimension != PARAM_COUNT:
        raise InvalidInputError(
            f"image planes need dimension {PARAM_COUNT}, got {plane.dimension}"
        )
    small = downscale(image)
    return [render(small, plane.grid[i]) for i in range(GRID_SIZE)]
