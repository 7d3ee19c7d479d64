"""
Canny edge detection and multi-scale patch extraction at edge pixels.
"""
import logging

import numpy as np
from pydantic import ValidationError
from scipy import ndimage

from app.core.errors import InvalidArgumentError
from app.models.edge_map import EdgeLabel, EdgeMap, PatchSet
from app.models.image import Image, as_image
from app.schemas.params import CannyParams
from app.services.image_service import to_grayscale

logger = logging.getLogger(__name__)

PATCH_SIDES = (41, 27, 15)
PATCH_REACH = PATCH_SIDES[0] // 2

# (dy, dx) of the neighbor along the gradient for the four direction bins
_DIRECTION_STEPS = ((0, 1), (1, 1), (1, 0), (1, -1))


def canny(img: Image, sigma: float = 1.0, low_frac: float = 0.1, high_frac: float = 0.2) -> EdgeMap:
    """
    Binary-stage Canny edges: Gaussian smoothing, Sobel gradients, non-maximum
    suppression and hysteresis with thresholds relative to the maximum magnitude.
    """
    try:
        params = CannyParams(sigma=sigma, low_frac=low_frac, high_frac=high_frac)
    except ValidationError as exc:
        raise InvalidArgumentError(f"invalid canny parameters: {exc.errors()[0]['msg']}") from exc
    gray = to_grayscale(as_image(img))[:, :, 0]
    smooth = ndimage.gaussian_filter(gray, params.sigma, mode="reflect")
    gx = ndimage.sobel(smooth, axis=1, mode="reflect")
    gy = ndimage.sobel(smooth, axis=0, mode="reflect")
    magnitude = np.hypot(gx, gy)
    max_mag = float(magnitude.max())
    if max_mag <= 0.0:
        return EdgeMap.empty(*gray.shape)

    thin = _non_maximum_suppression(magnitude, gx, gy, tol=1e-9 * max_mag)
    strong = thin >= params.high_frac * max_mag
    weak = thin >= params.low_frac * max_mag
    components, count = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    keep = np.zeros(count + 1, dtype=bool)
    keep[np.unique(components[strong])] = True
    keep[0] = False
    edges = keep[components]
    logger.debug("canny: %d edge pixels of %d", int(edges.sum()), edges.size)
    return EdgeMap.from_binary(edges)


def _non_maximum_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray, tol: float) -> np.ndarray:
    """
    Keep pixels that are a local maximum across the edge. Ties are broken toward the
    pixel further along the gradient, so a symmetric ridge yields a single line.
    """
    h, w = mag.shape
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    bins = (((angle + 22.5) // 45.0) % 4).astype(np.int64)
    padded = np.pad(mag, 1)
    keep = np.zeros((h, w), dtype=bool)
    for b, (dy, dx) in enumerate(_DIRECTION_STEPS):
        forward = padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        backward = padded[1 - dy:1 - dy + h, 1 - dx:1 - dx + w]
        local = (mag - forward > tol) & (mag - backward >= -tol)
        keep |= (bins == b) & local
    keep &= mag > 0
    return np.where(keep, mag, 0.0)


def reflect_index(idx: np.ndarray, size: int) -> np.ndarray:
    """Half-sample symmetric reflection of (possibly out of range) indices."""
    period = 2 * size
    m = np.mod(idx, period)
    return np.where(m < size, m, period - 1 - m)


def extract_patchset(img: Image, center: tuple[int, int]) -> PatchSet:
    img = as_image(img)
    h, w = img.shape[:2]
    x, y = int(center[0]), int(center[1])
    if not (0 <= x < w and 0 <= y < h):
        raise InvalidArgumentError(f"patch center {center} outside {w}x{h} image")
    patches = []
    for side in PATCH_SIDES:
        half = side // 2
        rows = reflect_index(np.arange(y - half, y + half + 1), h)
        cols = reflect_index(np.arange(x - half, x + half + 1), w)
        patches.append(img[np.ix_(rows, cols)])
    return PatchSet(p41=patches[0], p27=patches[1], p15=patches[2], center=(x, y))


def extract_patchsets(img: Image, centers: list[tuple[int, int]]) -> list[PatchSet]:
    img = as_image(img)
    return [extract_patchset(img, c) for c in centers]


def stack_patchsets(patchsets: list[PatchSet], channels: int = 3) -> dict[str, np.ndarray]:
    """Network feed for a list of patch sets; grayscale patches are replicated to RGB."""
    feeds = {}
    for side in PATCH_SIDES:
        arr = np.stack([getattr(ps, f"p{side}") for ps in patchsets]) if patchsets else \
            np.zeros((0, side, side, channels))
        if arr.shape[-1] == 1 and channels == 3:
            arr = np.repeat(arr, 3, axis=-1)
        feeds[f"p{side}"] = arr
    return feeds


def edge_pixels(em: EdgeMap, label: EdgeLabel = EdgeLabel.EDGE) -> list[tuple[int, int]]:
    """(x, y) coordinates carrying `label`, in row-major order."""
    ys, xs = np.nonzero(em.mask(label))
    return list(zip(xs.tolist(), ys.tolist()))
