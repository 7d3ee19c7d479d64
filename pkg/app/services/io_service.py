"""
Raster persistence: 8-bit PNG and binary PGM/PPM through Pillow, the "BMAP" float
raster for blur maps, and PGM encodings of edge maps and coverage masks.

BMAP layout: b"BMAP" | u32 height | u32 width | u32 reserved (0) | float32 LE data, row-major.
"""
import io
import struct
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from app.core.errors import ImageIOError, InvalidArgumentError
from app.models.blur_map import RADIUS_MAX, BlurMap
from app.models.edge_map import PGM_VALUES, EdgeLabel, EdgeMap
from app.models.image import Image, as_image

BMAP_MAGIC = b"BMAP"
_BMAP_HEADER = struct.Struct("<4sIII")

_RASTER_FORMATS = {".png": "PNG", ".pgm": "PPM", ".ppm": "PPM", ".pnm": "PPM"}


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def _decode(source, name) -> Image:
    with PILImage.open(source) as pil:
        pil.load()
        if pil.mode not in ("L", "RGB"):
            pil = pil.convert("L" if pil.mode in ("1", "I", "I;16", "F", "LA") else "RGB")
        data = np.asarray(pil, dtype=np.float64) / 255.0
    return as_image(data, name=str(name))


def read_image(path) -> Image:
    """Read an 8-bit PNG/PGM/PPM into an (H, W, C) float image in [0, 1]."""
    path = Path(path)
    if not path.exists():
        raise ImageIOError(path, "no such file")
    try:
        return _decode(path, path)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageIOError(path, f"cannot decode image: {exc}") from exc


def image_from_bytes(payload: bytes, name: str = "<upload>") -> Image:
    try:
        return _decode(io.BytesIO(payload), name)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageIOError(name, f"cannot decode image: {exc}") from exc


def write_image(path, img: Image) -> None:
    """Write an image as 8-bit PNG, PGM (1 channel) or PPM (3 channels) by extension."""
    path = Path(path)
    img = as_image(img)
    fmt = _RASTER_FORMATS.get(path.suffix.lower())
    if fmt is None:
        raise ImageIOError(path, f"unsupported raster extension '{path.suffix}'")
    if path.suffix.lower() == ".pgm" and img.shape[2] != 1:
        raise InvalidArgumentError(f"{path}: PGM needs a single-channel image")
    pixels = _to_uint8(img)
    pil = PILImage.fromarray(pixels[:, :, 0] if img.shape[2] == 1 else pixels,
                             mode="L" if img.shape[2] == 1 else "RGB")
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        pil.save(path, format=fmt)
    except OSError as exc:
        raise ImageIOError(path, f"cannot write image: {exc}") from exc


def image_to_png_bytes(img: Image) -> bytes:
    img = as_image(img)
    pixels = _to_uint8(img)
    pil = PILImage.fromarray(pixels[:, :, 0] if img.shape[2] == 1 else pixels)
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def write_bmap(path, blur_map: BlurMap) -> None:
    path = Path(path)
    values = np.asarray(blur_map, dtype=np.float64)
    if values.ndim != 2:
        raise InvalidArgumentError(f"blur map must be 2D, got shape {values.shape}")
    h, w = values.shape
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(_BMAP_HEADER.pack(BMAP_MAGIC, h, w, 0))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_bmap(path) -> BlurMap:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ImageIOError(path, f"cannot read blur map: {exc.strerror or exc}") from exc
    if len(raw) < _BMAP_HEADER.size:
        raise ImageIOError(path, "truncated BMAP header")
    magic, h, w, _ = _BMAP_HEADER.unpack_from(raw)
    if magic != BMAP_MAGIC:
        raise ImageIOError(path, f"bad magic {magic!r}, expected {BMAP_MAGIC!r}")
    expected = 4 * h * w
    body = raw[_BMAP_HEADER.size:]
    if len(body) != expected:
        raise ImageIOError(path, f"expected {expected} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float64)


def write_blur_png(path, blur_map: BlurMap) -> None:
    """8-bit visualization, radius 6.0 maps to 255."""
    write_image(path, np.asarray(blur_map, dtype=np.float64) / RADIUS_MAX)


def write_edge_map(path, em: EdgeMap) -> None:
    """PGM with 0 = none, 128 = pattern, 255 = depth (unclassified edges are written as 255)."""
    lut = np.zeros(256, dtype=np.uint8)
    for label, value in PGM_VALUES.items():
        lut[int(label)] = value
    pixels = lut[em.labels]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        PILImage.fromarray(pixels, mode="L").save(path, format="PPM")
    except OSError as exc:
        raise ImageIOError(path, f"cannot write edge map: {exc}") from exc


def read_edge_map(path, *, binary: bool = False) -> EdgeMap:
    """
    Read an edge-map PGM. With `binary`, every non-zero pixel becomes an unclassified
    edge; otherwise 128 is pattern and values above 128 are depth.
    """
    img = read_image(path)
    pixels = np.rint(img[:, :, 0] * 255.0).astype(np.uint8)
    if binary:
        return EdgeMap.from_binary(pixels > 0)
    labels = np.full(pixels.shape, EdgeLabel.NONE, dtype=np.uint8)
    labels[(pixels > 0) & (pixels <= 128)] = EdgeLabel.PATTERN
    labels[pixels > 128] = EdgeLabel.DEPTH
    return EdgeMap(labels)


def write_mask(path, mask: np.ndarray) -> None:
    write_image(path, np.asarray(mask, dtype=np.float64))
