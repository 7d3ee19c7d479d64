from dataclasses import dataclass
from enum import IntEnum

import numpy as np
import numpy.typing as npt

from app.core.errors import InvalidArgumentError


class EdgeLabel(IntEnum):
    NONE = 0
    EDGE = 1      # binary stage, not yet classified
    PATTERN = 2
    DEPTH = 3


# Visualization / fixture encoding used by the PGM writer
PGM_VALUES = {EdgeLabel.NONE: 0, EdgeLabel.PATTERN: 128, EdgeLabel.DEPTH: 255, EdgeLabel.EDGE: 255}


@dataclass(frozen=True)
class EdgeMap:
    labels: npt.NDArray[np.uint8]

    def __post_init__(self) -> None:
        if self.labels.ndim != 2:
            raise InvalidArgumentError(f"edge map must be 2D, got shape {self.labels.shape}")

    @classmethod
    def empty(cls, height: int, width: int) -> "EdgeMap":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @classmethod
    def from_binary(cls, edges: npt.ArrayLike) -> "EdgeMap":
        mask = np.asarray(edges, dtype=bool)
        return cls(np.where(mask, EdgeLabel.EDGE, EdgeLabel.NONE).astype(np.uint8))

    @classmethod
    def from_depth_mask(cls, depth: npt.ArrayLike) -> "EdgeMap":
        mask = np.asarray(depth, dtype=bool)
        return cls(np.where(mask, EdgeLabel.DEPTH, EdgeLabel.NONE).astype(np.uint8))

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    @property
    def edges(self) -> npt.NDArray[np.bool_]:
        return self.labels != EdgeLabel.NONE

    def mask(self, label: EdgeLabel) -> npt.NDArray[np.bool_]:
        if label == EdgeLabel.EDGE:
            return self.edges
        return self.labels == label

    def classify(self, depth: npt.ArrayLike) -> "EdgeMap":
        """
        Assign pattern/depth labels to the edge pixels of this map.
        `depth` is a boolean raster; pixels outside the edge set are ignored.
        """
        depth = np.asarray(depth, dtype=bool)
        if depth.shape != self.labels.shape:
            raise InvalidArgumentError(
                f"depth mask shape {depth.shape} does not match edge map {self.labels.shape}"
            )
        edges = self.edges
        labels = np.full(self.labels.shape, EdgeLabel.NONE, dtype=np.uint8)
        labels[edges & ~depth] = EdgeLabel.PATTERN
        labels[edges & depth] = EdgeLabel.DEPTH
        return EdgeMap(labels)


@dataclass(frozen=True)
class PatchSet:
    """Three co-centered patches (41, 27 and 15 pixels wide) around one edge pixel."""
    p41: npt.NDArray[np.float64]
    p27: npt.NDArray[np.float64]
    p15: npt.NDArray[np.float64]
    center: tuple[int, int]  # (x, y)
