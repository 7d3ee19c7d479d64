from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from app.models.edge_map import EdgeMap

# Quantized blur levels: R_i = 0.5 + 0.25 * (i - 1), i = 1..23
NUM_BLUR_LEVELS = 23
RADIUS_MIN = 0.5
RADIUS_STEP = 0.25
RADIUS_MAX = RADIUS_MIN + RADIUS_STEP * (NUM_BLUR_LEVELS - 1)

# Blur radii used for foreground/background composites; 0 means no blur
FGBG_LEVELS = (0.0, 1.0, 3.0, 5.0)

BlurMap = npt.NDArray[np.float64]


def level_radius(level: int) -> float:
    """Radius of the 1-based quantization level."""
    return RADIUS_MIN + RADIUS_STEP * (level - 1)


def class_radius(index: int) -> float:
    """Radius of the 0-based class index."""
    return RADIUS_MIN + RADIUS_STEP * index


def radius_class(radius: npt.ArrayLike) -> npt.NDArray[np.int64]:
    """Nearest class index for radii, clipped to the valid range."""
    idx = np.rint((np.asarray(radius, dtype=np.float64) - RADIUS_MIN) / RADIUS_STEP)
    return np.clip(idx, 0, NUM_BLUR_LEVELS - 1).astype(np.int64)


@dataclass(frozen=True)
class EstimateResult:
    dense: BlurMap
    edges: EdgeMap
    sparse: BlurMap
    coverage: npt.NDArray[np.bool_]
