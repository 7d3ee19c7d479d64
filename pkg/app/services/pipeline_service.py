"""
End-to-end blur map estimation: edges, edge classification, sparse blur estimation
at pattern edges, guide simplification and depth-aware propagation.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np
from scipy import ndimage

from app.core.errors import EmptyInputError
from app.models.blur_map import NUM_BLUR_LEVELS, BlurMap, EstimateResult, radius_class
from app.models.edge_map import EdgeLabel, EdgeMap
from app.models.image import Image, as_image
from app.nn import WeightStore, load_weights
from app.schemas.pipeline import PipelineConfig
from app.services.edge_service import canny, edge_pixels, extract_patchset
from app.services.network_service import (
    EDGE_CLASSES,
    Architecture,
    bnet_forward,
    build_architecture,
    enet_forward,
    infer_widths,
    predict_blur,
)
from app.services.propagation_service import interpolate_sparse, simplify

logger = logging.getLogger(__name__)

Center = tuple[int, int]


class Predictor(Protocol):
    """Anything that turns edge pixels of an image into class posteriors (N x K)."""

    def posteriors(self, img: Image, centers: Sequence[Center]) -> np.ndarray: ...


@dataclass
class NetworkPredictor:
    """A trained B-NET or E-NET; patch sets are cut and classified `batch_size` at a time."""
    kind: str                 # "bnet" or "enet"
    weights: WeightStore
    arch: Architecture
    batch_size: int = 256
    threads: int = 1

    @classmethod
    def from_store(cls, kind: str, weights: WeightStore, batch_size: int = 256, threads: int = 1):
        return cls(kind, weights, build_architecture(infer_widths(weights)), batch_size, threads)

    def posteriors(self, img: Image, centers: Sequence[Center]) -> np.ndarray:
        run = bnet_forward if self.kind == "bnet" else enet_forward
        classes = NUM_BLUR_LEVELS if self.kind == "bnet" else EDGE_CLASSES
        parts = [np.zeros((0, classes))]
        for start in range(0, len(centers), self.batch_size):
            chunk = [extract_patchset(img, c) for c in centers[start:start + self.batch_size]]
            parts.append(run(chunk, self.weights, arch=self.arch, threads=self.threads))
        return np.concatenate(parts)


def _one_hot(classes: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((len(classes), k))
    out[np.arange(len(classes)), classes] = 1.0
    return out


@dataclass
class OracleEdgeClassifier:
    """Test double for E-NET: depth wherever a GT contour pixel lies within `reach` (Chebyshev)."""
    depth_gt: np.ndarray
    reach: int = 2
    centers: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if isinstance(self.depth_gt, EdgeMap):
            self.depth_gt = self.depth_gt.edges
        side = 2 * self.reach + 1
        self._near = ndimage.binary_dilation(np.asarray(self.depth_gt, dtype=bool),
                                             structure=np.ones((side, side), dtype=bool))

    def posteriors(self, img: Image, centers: Sequence[Center]) -> np.ndarray:
        self.centers.extend(centers)
        classes = np.array([int(self._near[y, x]) for x, y in centers], dtype=np.int64)
        return _one_hot(classes, EDGE_CLASSES)


@dataclass
class OracleBlurClassifier:
    """Test double for B-NET: the GT radius class at the center pixel."""
    gt: np.ndarray
    centers: list = field(default_factory=list)

    def posteriors(self, img: Image, centers: Sequence[Center]) -> np.ndarray:
        self.centers.extend(centers)
        classes = np.array([int(radius_class(self.gt[y, x])) for x, y in centers], dtype=np.int64)
        return _one_hot(classes, NUM_BLUR_LEVELS)


def load_predictor(kind: str, path, cfg: PipelineConfig) -> NetworkPredictor:
    return NetworkPredictor.from_store(kind, load_weights(path), cfg.batch_size, cfg.threads)


def classify_edges(img: Image, binary: EdgeMap, enet: Predictor) -> EdgeMap:
    """Label every binary-stage edge pixel pattern or depth by the arg-max of `enet`."""
    centers = edge_pixels(binary)
    depth = np.zeros(binary.labels.shape, dtype=bool)
    if centers:
        is_depth = np.argmax(enet.posteriors(img, centers), axis=1) == 1
        xs, ys = np.array(centers).T
        depth[ys, xs] = is_depth
    return binary.classify(depth)


def connected_median(sparse: BlurMap, pattern: np.ndarray) -> BlurMap:
    """Replace each pattern-edge value by the median over its 8-connected edge segment."""
    labels, count = ndimage.label(pattern, structure=np.ones((3, 3), dtype=bool))
    if count == 0:
        return sparse.copy()
    medians = np.asarray(ndimage.median(sparse, labels=labels, index=np.arange(1, count + 1)))
    out = np.zeros_like(sparse)
    out[pattern] = medians[labels[pattern] - 1]
    return out


def estimate_full(img: Image, cfg: Optional[PipelineConfig] = None, *,
                  bnet: Optional[Predictor] = None, enet: Optional[Predictor] = None) -> EstimateResult:
    """
    Dense blur map of `img` with every intermediate: classified edge map, sparse map at
    pattern edges and the coverage mask of the propagation.
    """
    cfg = cfg or PipelineConfig()
    img = as_image(img)
    h, w = img.shape[:2]
    binary = canny(img, **cfg.canny.model_dump())
    centers = edge_pixels(binary)
    if not centers:
        raise EmptyInputError("no edges detected")
    if enet is None:
        enet = load_predictor("enet", cfg.weights_e, cfg)
    if bnet is None:
        bnet = load_predictor("bnet", cfg.weights_b, cfg)

    edges = classify_edges(img, binary, enet)
    pattern_centers = edge_pixels(edges, EdgeLabel.PATTERN)
    logger.info("%d edge pixels: %d pattern, %d depth", len(centers), len(pattern_centers),
                len(centers) - len(pattern_centers))

    sparse = np.zeros((h, w))
    if pattern_centers:
        radii = predict_blur(bnet.posteriors(img, pattern_centers))
        xs, ys = np.array(pattern_centers).T
        sparse[ys, xs] = radii
    pattern = edges.mask(EdgeLabel.PATTERN)
    if cfg.post_filter == "connected-median":
        sparse = connected_median(sparse, pattern)

    guide = simplify(img, cfg.simplify)
    dense, coverage = interpolate_sparse(sparse, edges, edges, guide, cfg.propagation(h, w))
    logger.info("propagated %dx%d map, coverage %.4f", h, w, coverage.mean())
    return EstimateResult(dense=dense, edges=edges, sparse=sparse, coverage=coverage)
