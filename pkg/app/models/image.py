"""
In-memory image containers.

An image is a float64 numpy array shaped (H, W, C) with C in {1, 3} and values in
[0, 1]. A kernel is a square float64 array with odd side.
"""
import numpy as np
import numpy.typing as npt

from app.core.errors import InvalidArgumentError

Image = npt.NDArray[np.float64]
Kernel = npt.NDArray[np.float64]


def as_image(data: npt.ArrayLike, *, name: str = "image") -> Image:
    """Validate and normalize an array to the (H, W, C) float64 layout."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise InvalidArgumentError(f"{name} must be HxW, HxWx1 or HxWx3, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidArgumentError(f"{name} must not be empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr


def clamp(img: Image) -> Image:
    return np.clip(img, 0.0, 1.0)


def as_kernel(data: npt.ArrayLike) -> Kernel:
    k = np.asarray(data, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
        raise InvalidArgumentError(f"kernel must be square with odd side, got shape {k.shape}")
    return k
