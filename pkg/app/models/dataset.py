from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from app.core.errors import InvalidArgumentError
from app.models.edge_map import PatchSet
from app.services.edge_service import PATCH_SIDES, stack_patchsets


@dataclass(frozen=True)
class LabeledPatchSample:
    patchset: PatchSet
    label: int       # blur class in [0, 23) or edge class (0 pattern, 1 depth)
    source: str      # image id the patches were cut from


@dataclass
class PatchDataset:
    """Stacked network feeds (float32, N x s x s x 3 per patch size) and their labels."""
    feeds: dict[str, npt.NDArray[np.float32]]
    labels: npt.NDArray[np.int64]

    def __post_init__(self) -> None:
        for side in PATCH_SIDES:
            arr = self.feeds.get(f"p{side}")
            if arr is None or arr.shape[0] != self.labels.shape[0]:
                raise InvalidArgumentError(f"feed p{side} does not match {self.labels.shape[0]} labels")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @classmethod
    def from_samples(cls, samples: list[LabeledPatchSample]) -> "PatchDataset":
        feeds = stack_patchsets([s.patchset for s in samples])
        return cls(
            feeds={k: v.astype(np.float32) for k, v in feeds.items()},
            labels=np.array([s.label for s in samples], dtype=np.int64),
        )

    def subset(self, index: npt.ArrayLike) -> "PatchDataset":
        idx = np.asarray(index, dtype=np.int64)
        return PatchDataset(feeds={k: v[idx] for k, v in self.feeds.items()}, labels=self.labels[idx])
