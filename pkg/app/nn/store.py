"""
Named parameter tensors and the "CWTS" container.

Container layout (all integers little-endian):

    b"CWTS" | u32 format version | u32 header length | UTF-8 JSON header | float32 data

The header holds the store metadata and, per tensor, its name, dims and byte offset
into the data section.
"""
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from app.core.errors import InvalidArgumentError, WeightsIOError

logger = logging.getLogger(__name__)

MAGIC = b"CWTS"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<4sII")


@dataclass
class WeightStore:
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    architecture: str = ""
    version: int = 1
    seed: Optional[int] = None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __contains__(self, name: object) -> bool:
        return name in self.tensors

    def __len__(self) -> int:
        return len(self.tensors)

    def names(self) -> list[str]:
        return list(self.tensors)

    def copy(self) -> "WeightStore":
        return WeightStore(
            tensors={k: v.copy() for k, v in self.tensors.items()},
            architecture=self.architecture,
            version=self.version,
            seed=self.seed,
        )

    def select(self, prefixes: Iterable[str]) -> dict[str, np.ndarray]:
        prefixes = tuple(prefixes)
        return {k: v for k, v in self.tensors.items() if k.startswith(prefixes)}

    def astype(self, dtype) -> "WeightStore":
        out = self.copy()
        out.tensors = {k: v.astype(dtype) for k, v in out.tensors.items()}
        return out

    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))


def init_weights(shapes: dict[str, tuple[int, ...]], seed: int, architecture: str = "") -> WeightStore:
    """He-uniform weights, zero biases; tensors are drawn in `shapes` order."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in shapes.items():
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape, dtype=np.float32)
            continue
        fan_in = int(np.prod(shape[:-1]))
        limit = np.sqrt(6.0 / fan_in)
        tensors[name] = rng.uniform(-limit, limit, size=shape).astype(np.float32)
    return WeightStore(tensors=tensors, architecture=architecture, seed=seed)


def save_weights(ws: WeightStore, path) -> None:
    path = Path(path)
    entries = []
    offset = 0
    blobs = []
    for name, arr in ws.tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        entries.append({"name": name, "dims": list(arr.shape), "offset": offset})
        blobs.append(data.tobytes())
        offset += data.nbytes
    header = json.dumps({
        "architecture": ws.architecture,
        "version": ws.version,
        "seed": ws.seed,
        "tensors": entries,
    }).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(_PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    logger.info("saved %d tensors (%d parameters) to %s", len(entries), ws.parameter_count(), path)


def load_weights(path) -> WeightStore:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise WeightsIOError(path, f"cannot read weights: {exc.strerror or exc}") from exc

    if len(raw) < _PREAMBLE.size:
        raise WeightsIOError(path, "truncated preamble")
    magic, version, header_len = _PREAMBLE.unpack_from(raw)
    if magic != MAGIC:
        raise WeightsIOError(path, f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise WeightsIOError(path, f"unsupported format version {version}")
    start = _PREAMBLE.size + header_len
    if start > len(raw):
        raise WeightsIOError(path, "truncated header")
    try:
        header = json.loads(raw[_PREAMBLE.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightsIOError(path, f"corrupt header: {exc}") from exc
    if not isinstance(header, dict):
        raise WeightsIOError(path, f"corrupt header: expected an object, got {type(header).__name__}")

    entries = header.get("tensors", [])
    if not isinstance(entries, list):
        raise WeightsIOError(path, "corrupt header: 'tensors' must be a list")

    data = memoryview(raw)[start:]
    tensors: dict[str, np.ndarray] = {}
    for index, entry in enumerate(entries):
        try:
            name = str(entry["name"])
            dims = tuple(int(d) for d in entry["dims"])
            offset = int(entry["offset"])
        except (KeyError, TypeError, ValueError) as exc:
            raise WeightsIOError(path, f"malformed tensor entry {index}: {exc!r}") from exc
        if any(d < 0 for d in dims):
            raise WeightsIOError(path, f"tensor '{name}' has negative dims {dims}")
        nbytes = 4 * int(np.prod(dims, dtype=np.int64))
        if offset < 0 or offset + nbytes > len(data):
            raise WeightsIOError(path, f"tensor '{name}' extends past end of file")
        if name in tensors:
            raise WeightsIOError(path, f"duplicate tensor '{name}'")
        arr = np.frombuffer(data[offset:offset + nbytes], dtype="<f4").reshape(dims)
        tensors[name] = arr.astype(np.float32)

    try:
        version = int(header.get("version", 1))
    except (TypeError, ValueError) as exc:
        raise WeightsIOError(path, f"malformed store version {header.get('version')!r}") from exc
    return WeightStore(
        tensors=tensors,
        architecture=header.get("architecture", ""),
        version=version,
        seed=header.get("seed"),
    )


def require(ws: WeightStore, names: Iterable[str], what: str) -> None:
    missing = [n for n in names if n not in ws]
    if missing:
        raise InvalidArgumentError(f"{what} is missing weights: {', '.join(missing[:5])}"
                                   + (" ..." if len(missing) > 5 else ""))
