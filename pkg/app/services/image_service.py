"""
Pixel-level primitives: disk PSFs, convolution, luma and forward differences.

Borders are handled with half-sample reflection (d c b a | a b c d), the scipy
"reflect" convention, everywhere in the package.
"""
import math

import numpy as np
from scipy import ndimage

from app.core.errors import InvalidArgumentError
from app.models.image import Image, Kernel, as_image, as_kernel

DISK_SUBSAMPLES = 16
MAX_DISK_RADIUS = 16.0
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def disk_coverage(radius: float, subsamples: int = DISK_SUBSAMPLES) -> np.ndarray:
    """
    Fraction of each pixel's area inside a disk centered on the middle pixel,
    estimated on a uniform subsamples x subsamples grid per pixel.
    """
    half = math.ceil(radius)
    side = 2 * half + 1
    # sub-pixel offsets are symmetric about the pixel center, so coverage is exactly
    # invariant under flips and 90 degree rotations
    offsets = (np.arange(subsamples) + 0.5) / subsamples - 0.5
    coords = (np.arange(side) - half)[:, np.newaxis] + offsets[np.newaxis, :]
    coords = coords.reshape(-1)
    inside = coords[:, np.newaxis] ** 2 + coords[np.newaxis, :] ** 2 <= radius * radius
    counts = inside.reshape(side, subsamples, side, subsamples).sum(axis=(1, 3))
    return counts / float(subsamples * subsamples)


def disk_kernel(radius: float) -> Kernel:
    """Normalized anti-aliased disk PSF of the given radius, side 2*ceil(radius)+1."""
    if not math.isfinite(radius) or radius <= 0:
        raise InvalidArgumentError(f"disk radius must be positive and finite, got {radius}")
    if radius > MAX_DISK_RADIUS:
        raise InvalidArgumentError(f"disk radius must be at most {MAX_DISK_RADIUS}, got {radius}")
    coverage = disk_coverage(radius)
    return coverage / coverage.sum()


def convolve(img: Image, kernel: Kernel) -> Image:
    """Per-channel 2D convolution with reflected borders; output has the input's shape."""
    img = as_image(img)
    kernel = as_kernel(kernel)
    side = kernel.shape[0]
    if side > min(img.shape[0], img.shape[1]):
        raise InvalidArgumentError(
            f"kernel side {side} exceeds image size {img.shape[0]}x{img.shape[1]}"
        )
    if side == 1:
        return img * kernel[0, 0]
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = ndimage.convolve(img[:, :, c], kernel, mode="reflect")
    return out


def blur(img: Image, radius: float) -> Image:
    """Disk blur; radius 0 is the identity."""
    img = as_image(img)
    if radius == 0:
        return img.copy()
    return convolve(img, disk_kernel(radius))


def to_grayscale(img: Image) -> Image:
    img = as_image(img)
    if img.shape[2] == 1:
        return img.copy()
    return (img @ LUMA_WEIGHTS)[:, :, np.newaxis]


def gradient(img: Image) -> tuple[Image, Image]:
    """Forward differences; zero on the last column (gx) and last row (gy)."""
    img = as_image(img)
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :-1, :] = img[:, 1:, :] - img[:, :-1, :]
    gy[:-1, :, :] = img[1:, :, :] - img[:-1, :, :]
    return gx, gy
