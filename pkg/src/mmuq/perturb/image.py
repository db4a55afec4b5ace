"""Image perturbation operators: rotation, brightness, Gaussian blur.

All three preserve resolution and return valid 8-bit RGB rasters. Degree 0
is a bit-exact identity.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import gaussian_filter1d

from ..errors import InvariantViolation
from ..media import ImageContent
from .kinds import DEFAULT_PARAMS, ImageKind, PerturbParams, check_degree


def _to_uint8(arr: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(arr), 0, 255).astype(np.uint8)


def rotate(
    img: ImageContent, degree: float, params: PerturbParams = DEFAULT_PARAMS
) -> ImageContent:
    """Rotate about the image center by ``degree * max_rotation_deg`` degrees.

    Bilinear resampling; source coordinates outside the raster clamp to the
    nearest edge pixel, so the output never contains fill color.
    """
    degree = check_degree(degree)
    if degree == 0.0:
        return img
    theta = math.radians(degree * params.max_rotation_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    h, w = img.height, img.width
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    # Inverse mapping: each output pixel samples the input at -theta.
    src_x = np.clip(cos_t * dx + sin_t * dy + cx, 0.0, w - 1.0)
    src_y = np.clip(-sin_t * dx + cos_t * dy + cy, 0.0, h - 1.0)
    x0 = np.floor(src_x).astype(np.intp)
    y0 = np.floor(src_y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (src_x - x0)[..., None]
    fy = (src_y - y0)[..., None]
    pix = img.to_array().astype(np.float64)
    top = pix[y0, x0] * (1 - fx) + pix[y0, x1] * fx
    bottom = pix[y1, x0] * (1 - fx) + pix[y1, x1] * fx
    return ImageContent.from_array(_to_uint8(top * (1 - fy) + bottom * fy))


def brightness(
    img: ImageContent, degree: float, params: PerturbParams = DEFAULT_PARAMS
) -> ImageContent:
    """Scale all channels by ``1 + degree * brightness_gain``, clamped."""
    degree = check_degree(degree)
    if degree == 0.0:
        return img
    gain = 1.0 + degree * params.brightness_gain
    return ImageContent.from_array(_to_uint8(img.to_array().astype(np.float64) * gain))


def blur(
    img: ImageContent, degree: float, params: PerturbParams = DEFAULT_PARAMS
) -> ImageContent:
    """Gaussian blur with sigma ``degree * blur_sigma_px`` pixels.

    Separable kernel truncated at three sigma; borders replicate the edge
    pixel so overall brightness is preserved near the frame.
    """
    degree = check_degree(degree)
    if degree == 0.0:
        return img
    sigma = degree * params.blur_sigma_px
    arr = img.to_array().astype(np.float64)
    arr = gaussian_filter1d(arr, sigma, axis=0, mode="nearest", truncate=3.0)
    arr = gaussian_filter1d(arr, sigma, axis=1, mode="nearest", truncate=3.0)
    return ImageContent.from_array(_to_uint8(arr))


def perturb_image(
    img: ImageContent,
    kind: ImageKind,
    degree: float,
    params: PerturbParams = DEFAULT_PARAMS,
) -> ImageContent:
    if kind is ImageKind.ROTATE:
        return rotate(img, degree, params)
    if kind is ImageKind.BRIGHTNESS:
        return brightness(img, degree, params)
    if kind is ImageKind.BLUR:
        return blur(img, degree, params)
    raise InvariantViolation(f"unknown image kind {kind!r}")
