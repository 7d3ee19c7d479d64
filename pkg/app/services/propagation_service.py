"""
Edge-aware sparse-to-dense propagation.

The filter is the normalized box variant of the domain transform: every row (then
every column) is mapped to 1D coordinates that grow with guide-image variation and
with a fixed penalty at depth-edge pixels, and values are averaged over a window of
fixed radius in those coordinates. Window sums come from per-line prefix sums and the
window ends from a two-pointer sweep, so a pass is linear in the pixel count.
"""
import logging
import math
from typing import Optional, Union

import numpy as np
import numpy.typing as npt
from numba import njit

from app.core.errors import EmptyInputError, InvalidArgumentError
from app.models.blur_map import BlurMap
from app.models.edge_map import EdgeLabel, EdgeMap
from app.models.image import Image, as_image
from app.schemas.params import SIMPLIFY_PARAMS, DtParams, propagation_params

logger = logging.getLogger(__name__)

COVERAGE_EPS = 1e-8

DepthLike = Union[EdgeMap, npt.ArrayLike, None]


def ct_transform(line: npt.ArrayLike, depth_mask: npt.ArrayLike, p: DtParams) -> np.ndarray:
    """
    Transformed coordinates of one line of guide samples (n or n x C values):
    ct[0] = 0, ct[i] = ct[i-1] + 1 + psi*depth[i] + sigma_s/sigma_r * sum_k |I_k(i) - I_k(i-1)|.
    """
    samples = np.asarray(line, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, np.newaxis]
    depth = np.asarray(depth_mask, dtype=bool).reshape(-1)
    if samples.shape[0] < 1:
        raise InvalidArgumentError("line must hold at least one sample")
    if depth.shape[0] != samples.shape[0]:
        raise InvalidArgumentError(f"depth mask length {depth.shape[0]} != line length {samples.shape[0]}")
    return _domain_coordinates(samples[np.newaxis], depth[np.newaxis], p.sigma_s / p.sigma_r, p.psi)[0]


def _domain_coordinates(lines: np.ndarray, depth: np.ndarray, ratio: float, psi: float) -> np.ndarray:
    """Row-wise `ct_transform` over an (L, n, C) stack of lines."""
    n_lines, n = lines.shape[:2]
    ct = np.zeros((n_lines, n), dtype=np.float64)
    if n > 1:
        step = 1.0 + psi * depth[:, 1:] + ratio * np.abs(np.diff(lines, axis=1)).sum(axis=2)
        np.cumsum(step, axis=1, out=ct[:, 1:])
    return ct


@njit(cache=True)
def _box_lines(values: np.ndarray, ct: np.ndarray, radius: float) -> np.ndarray:
    """
    Average of `values` (L, n, C) over the samples w of the same line with
    |ct(u) - ct(w)| <= radius. Windows that hold a single value return it unchanged.
    """
    n_lines, n, channels = values.shape
    out = np.empty_like(values)
    sums = np.empty((n + 1, channels))
    changed = np.empty((n, channels), dtype=np.int64)
    for line in range(n_lines):
        coords = ct[line]
        for c in range(channels):
            sums[0, c] = 0.0
            changed[0, c] = 0
        for i in range(n):
            for c in range(channels):
                sums[i + 1, c] = sums[i, c] + values[line, i, c]
                if i > 0:
                    changed[i, c] = changed[i - 1, c]
                    if values[line, i, c] != values[line, i - 1, c]:
                        changed[i, c] += 1
        # both window ends only move forward along a sorted line
        lo = 0
        hi = 0
        for i in range(n):
            while coords[i] - coords[lo] > radius:
                lo += 1
            while hi < n and coords[hi] - coords[i] <= radius:
                hi += 1
            for c in range(channels):
                if changed[hi - 1, c] == changed[lo, c]:
                    out[line, i, c] = values[line, i, c]
                else:
                    out[line, i, c] = (sums[hi, c] - sums[lo, c]) / (hi - lo)
    return out


def _depth_raster(depth: DepthLike, shape: tuple[int, int]) -> np.ndarray:
    if depth is None:
        return np.zeros(shape, dtype=bool)
    mask = depth.mask(EdgeLabel.DEPTH) if isinstance(depth, EdgeMap) else np.asarray(depth, dtype=bool)
    if mask.shape != shape:
        raise InvalidArgumentError(f"depth mask shape {mask.shape} does not match image {shape}")
    return mask


def pass_radii(p: DtParams) -> list[float]:
    """Box radius of each iteration: sigma_i * sqrt(3) with a geometric sigma_i schedule."""
    n = p.iterations
    radii = []
    for i in range(1, n + 1):
        sigma_i = p.sigma_s * math.sqrt(3.0) * 2.0 ** (n - i) / math.sqrt(4.0 ** n - 1.0)
        radii.append(sigma_i * math.sqrt(3.0))
    return radii


def dt_filter(J: Image, guide: Image, depth: DepthLike, p: DtParams) -> Image:
    """
    Depth-edge-aware domain-transform filtering of `J` steered by `guide`.
    Each iteration runs a horizontal and then a vertical pass.
    """
    J = as_image(J, name="J")
    guide = _check_guide(guide, J.shape[:2])
    return _run_passes(J, guide, _depth_raster(depth, J.shape[:2]), p)


def _check_guide(guide: Image, shape: tuple[int, int]) -> Image:
    guide = as_image(guide, name="guide")
    if guide.shape[:2] != shape:
        raise InvalidArgumentError(f"guide {guide.shape[:2]} and J {shape} differ in size")
    return guide


def _run_passes(J: np.ndarray, guide: Image, mask: np.ndarray, p: DtParams) -> np.ndarray:
    """`dt_filter` on validated inputs; J may carry any number of channels."""
    ratio = p.sigma_s / p.sigma_r
    ct_rows = _domain_coordinates(guide, mask, ratio, p.psi)
    ct_cols = _domain_coordinates(guide.transpose(1, 0, 2), mask.T, ratio, p.psi)

    out = np.ascontiguousarray(J, dtype=np.float64)
    for i, radius in enumerate(pass_radii(p), start=1):
        logger.debug("dt pass %d/%d radius %.4f", i, p.iterations, radius)
        out = _box_lines(out, ct_rows, float(radius))
        columns = np.ascontiguousarray(out.transpose(1, 0, 2))
        out = np.ascontiguousarray(_box_lines(columns, ct_cols, float(radius)).transpose(1, 0, 2))
    # convex averaging stays within the input range; clip away rounding
    return np.clip(out, J.min(axis=(0, 1)), J.max(axis=(0, 1)))


def simplify(Ib: Image, params: DtParams = SIMPLIFY_PARAMS) -> Image:
    """Edge-aware smoothing of the blurry input, used as propagation guide."""
    Ib = as_image(Ib)
    return dt_filter(Ib, Ib, None, params)


def _pattern_raster(E_pattern, shape: tuple[int, int]) -> np.ndarray:
    if isinstance(E_pattern, EdgeMap):
        mask = E_pattern.mask(EdgeLabel.PATTERN)
    else:
        mask = np.asarray(E_pattern, dtype=bool)
    if mask.shape != shape:
        raise InvalidArgumentError(f"pattern mask shape {mask.shape} does not match sparse map {shape}")
    return mask


def interpolate_sparse(Is: BlurMap, E_pattern, depth: DepthLike, guide: Image,
                       p: Optional[DtParams] = None) -> tuple[BlurMap, np.ndarray]:
    """
    Dense blur map B = F(Is) / F(E) with pixels whose denominator is at most 1e-8
    set to 0. Returns (B, coverage mask).
    """
    sparse = np.asarray(Is, dtype=np.float64)
    if sparse.ndim == 3 and sparse.shape[2] == 1:
        sparse = sparse[:, :, 0]
    if sparse.ndim != 2:
        raise InvalidArgumentError(f"sparse map must be 2D, got shape {sparse.shape}")
    pattern = _pattern_raster(E_pattern, sparse.shape)
    if not pattern.any():
        raise EmptyInputError("no pattern edges to propagate from")
    if np.any(sparse[~pattern] != 0):
        raise InvalidArgumentError("sparse map must be 0 wherever the pattern-edge indicator is 0")
    if p is None:
        p = propagation_params(*sparse.shape)

    guide = _check_guide(guide, sparse.shape)
    # numerator and normalizer share one filtering run as two channels
    stacked = np.stack([sparse, pattern.astype(np.float64)], axis=2)
    filtered = _run_passes(stacked, guide, _depth_raster(depth, sparse.shape), p)
    numerator, denominator = filtered[:, :, 0], filtered[:, :, 1]
    coverage = denominator > COVERAGE_EPS
    dense = np.zeros_like(sparse)
    dense[coverage] = numerator[coverage] / denominator[coverage]
    values = sparse[pattern]
    dense[coverage] = np.clip(dense[coverage], values.min(), values.max())

    uncovered = int(coverage.size - coverage.sum())
    if uncovered:
        logger.warning("%d of %d pixels unreachable from any pattern edge", uncovered, coverage.size)
    return dense, coverage
