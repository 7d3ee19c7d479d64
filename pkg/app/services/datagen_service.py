"""
Synthetic training data: uniformly blurred images, foreground/background composites
with depth-edge ground truth, pattern blur fields, rotation augmentation and the
JSON-lines sample manifests the trainers consume.
"""
import itertools
import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Literal, Optional, Sequence

import numpy as np
from pydantic import ValidationError
from scipy import ndimage
from tqdm import tqdm

from app.core.errors import ImageIOError, InvalidArgumentError
from app.models.blur_map import FGBG_LEVELS, NUM_BLUR_LEVELS, RADIUS_MAX, RADIUS_MIN, BlurMap, level_radius, radius_class
from app.models.dataset import LabeledPatchSample, PatchDataset
from app.models.edge_map import EdgeMap
from app.models.image import Image, as_image, clamp
from app.schemas.dataset import FgBgRecipe, ManifestRecord
from app.schemas.params import CannyParams
from app.services import io_service
from app.services.edge_service import canny, edge_pixels, extract_patchset
from app.services.image_service import blur

logger = logging.getLogger(__name__)

ROTATION_ANGLES = (-90, -30, 60, 135, 180)
PATTERN_MODES = ("uniform", "gradual", "stepwise")
STEPWISE_BANDS = 4
DEPTH_LABEL_REACH = 2   # edge pixels this close (Chebyshev) to the contour are depth samples
EDGE_PATTERN, EDGE_DEPTH = 0, 1


@dataclass(frozen=True)
class FgBgResult:
    composite: Image
    gt: BlurMap
    depth_gt: EdgeMap
    alpha: np.ndarray


def _check_level(level: int) -> int:
    if isinstance(level, bool) or int(level) != level or not 1 <= level <= NUM_BLUR_LEVELS:
        raise InvalidArgumentError(f"blur level must be an integer in [1, {NUM_BLUR_LEVELS}], got {level}")
    return int(level)


def synth_uniform(sharp: Image, level: int) -> tuple[Image, BlurMap]:
    """Blur the whole image with the disk of quantization level `level` (1-based)."""
    level = _check_level(level)
    sharp = as_image(sharp, name="sharp")
    radius = level_radius(level)
    blurry = clamp(blur(sharp, radius))
    return blurry, np.full(sharp.shape[:2], radius)


def synth_fgbg(recipe: FgBgRecipe) -> FgBgResult:
    salient = as_image(recipe.salient, name="salient")
    background = as_image(recipe.background, name="background")
    mask = recipe.mask
    if salient.shape != background.shape or mask.shape != salient.shape[:2]:
        raise InvalidArgumentError(
            f"salient {salient.shape}, background {background.shape} and mask {mask.shape} must agree in size"
        )
    r1, r2 = recipe.radii
    m = mask.astype(np.float64)[:, :, np.newaxis]
    alpha = blur(m, r1)
    spread = blur(salient * m, r1)
    back = blur(background, r2)
    composite = clamp(alpha * spread + (1.0 - alpha) * back)

    a = alpha[:, :, 0]
    gt = a * r1 + (1.0 - a) * r2
    return FgBgResult(composite=composite, gt=gt, depth_gt=EdgeMap.from_depth_mask(alpha_contour(a)), alpha=a)


def alpha_contour(alpha: np.ndarray, level: float = 0.5) -> np.ndarray:
    """Pixels at or above `level` with a 4-neighbor below it; 1 px wide, image borders excluded."""
    inside = alpha >= level
    padded = np.pad(inside, 1, mode="edge")
    outside_neighbor = (
        ~padded[:-2, 1:-1] | ~padded[2:, 1:-1] | ~padded[1:-1, :-2] | ~padded[1:-1, 2:]
    )
    return inside & outside_neighbor


def enumerate_fgbg_pairs() -> list[tuple[int, int]]:
    """The six (k1, k2) index pairs with FGBG_LEVELS[k1] < FGBG_LEVELS[k2]."""
    return list(itertools.combinations(range(len(FGBG_LEVELS)), 2))


def synth_pattern_field(sharp: Image, mode: Literal["uniform", "gradual", "stepwise"],
                        level: int = 1) -> tuple[Image, BlurMap]:
    """
    Pattern-edge blur fields. `level` picks the uniform level, or the first band of a
    stepwise field (bands use levels level..level+3).
    """
    sharp = as_image(sharp, name="sharp")
    h, w = sharp.shape[:2]
    if mode == "uniform":
        return synth_uniform(sharp, level)
    if mode == "gradual":
        radius = np.full(w, RADIUS_MIN) if w == 1 else np.linspace(RADIUS_MIN, RADIUS_MAX, w)
        pos = (radius - RADIUS_MIN) / (level_radius(2) - RADIUS_MIN)
        lower = np.minimum(np.floor(pos).astype(np.int64), NUM_BLUR_LEVELS - 2)
        frac = pos - lower
        layers = {lv: blur(sharp, level_radius(lv + 1)) for lv in np.unique(np.concatenate([lower, lower + 1]))}
        out = np.empty_like(sharp)
        for x in range(w):
            lo = lower[x]
            out[:, x] = (1.0 - frac[x]) * layers[lo][:, x] + frac[x] * layers[lo + 1][:, x]
        return clamp(out), np.broadcast_to(radius, (h, w)).copy()
    if mode == "stepwise":
        if w < STEPWISE_BANDS:
            raise InvalidArgumentError(f"stepwise field needs width >= {STEPWISE_BANDS}, got {w}")
        level = _check_level(level)
        if level + STEPWISE_BANDS - 1 > NUM_BLUR_LEVELS:
            raise InvalidArgumentError(f"stepwise base level {level} leaves no room for {STEPWISE_BANDS} bands")
        band = np.minimum(STEPWISE_BANDS * np.arange(w) // w, STEPWISE_BANDS - 1)
        out = np.empty_like(sharp)
        gt = np.empty((h, w))
        for b in range(STEPWISE_BANDS):
            cols = band == b
            radius = level_radius(level + b)
            out[:, cols] = blur(sharp, radius)[:, cols]
            gt[:, cols] = radius
        return clamp(out), gt
    raise InvalidArgumentError(f"unknown pattern mode '{mode}', expected one of {PATTERN_MODES}")


def augment_rotate(img: np.ndarray, angle: int, *, order: int = 1) -> np.ndarray:
    """
    Rotate counterclockwise by `angle` degrees. -90 and 180 are exact permutations;
    other angles resample about the image center on the same canvas, reflecting
    out-of-frame samples. Works on (H, W), (H, W, C) images and label rasters
    (use order=0 for labels).
    """
    if angle not in ROTATION_ANGLES:
        raise InvalidArgumentError(f"unsupported rotation {angle}, expected one of {ROTATION_ANGLES}")
    arr = np.asarray(img)
    if angle == -90:
        return np.rot90(arr, k=-1).copy()
    if angle == 180:
        return np.rot90(arr, k=2).copy()
    return ndimage.rotate(arr, angle, axes=(1, 0), reshape=False, order=order, mode="reflect")


def balance_records(records: Sequence[ManifestRecord], rng: np.random.Generator) -> list[ManifestRecord]:
    """Keep the same number of records (the smallest class count) for every label present."""
    by_label: dict[int, list[ManifestRecord]] = defaultdict(list)
    for rec in records:
        by_label[rec.label].append(rec)
    if not by_label:
        return []
    keep = min(len(v) for v in by_label.values())
    out: list[ManifestRecord] = []
    for label in sorted(by_label):
        pool = by_label[label]
        picked = rng.permutation(len(pool))[:keep]
        out.extend(pool[i] for i in sorted(picked))
    return out


def _record_key(rec: ManifestRecord):
    return (rec.recipe, rec.image, rec.y, rec.x, rec.label)


def build_manifest(samples: Iterable[ManifestRecord], path, *, seed: int = 0,
                   balance: bool = True) -> list[ManifestRecord]:
    """
    Balance (per-label) and write a JSON-lines manifest sorted by recipe id.
    The result does not depend on the order `samples` arrive in.
    """
    records = sorted(samples, key=_record_key)
    if balance:
        records = balance_records(records, np.random.default_rng(seed))
    records.sort(key=_record_key)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.model_dump_json() + "\n")
    logger.info("manifest %s: %d records over %d labels", path, len(records), len({r.label for r in records}))
    return records


def read_manifest(path) -> list[ManifestRecord]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ImageIOError(path, f"cannot read manifest: {exc.strerror or exc}") from exc
    try:
        return [ManifestRecord.model_validate_json(line) for line in lines if line.strip()]
    except ValidationError as exc:
        raise ImageIOError(path, f"malformed manifest record: {exc.errors()[0]['msg']}") from exc


def load_patch_dataset(manifest_path) -> PatchDataset:
    """Cut the patch sets listed in a manifest out of the dataset images."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    records = read_manifest(manifest_path)
    images: dict[str, Image] = {}
    samples = []
    for rec in records:
        if rec.image not in images:
            images[rec.image] = io_service.read_image(root / rec.image)
        samples.append(LabeledPatchSample(extract_patchset(images[rec.image], (rec.x, rec.y)), rec.label, rec.recipe))
    return PatchDataset.from_samples(samples)


# ---------------------------------------------------------------------------
# Dataset builders (datagen-* commands)
# ---------------------------------------------------------------------------

class DatasetWriter:
    """Writes images/, gt/, edges/ and collects manifest candidates under one root."""

    def __init__(self, root, canny_params: CannyParams = CannyParams()) -> None:
        self.root = Path(root)
        self.canny = canny_params
        self.records: list[ManifestRecord] = []
        for sub in ("images", "gt", "edges"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    def save(self, recipe: str, image: Image, gt: BlurMap, edges: EdgeMap) -> str:
        rel = f"images/{recipe}.png"
        io_service.write_image(self.root / rel, image)
        io_service.write_bmap(self.root / "gt" / f"{recipe}.bmap", gt)
        io_service.write_edge_map(self.root / "edges" / f"{recipe}.pgm", edges)
        return rel

    def sample_edges(self, recipe: str, rel: str, centers: list[tuple[int, int]], labels: list[int],
                     count: int, rng: np.random.Generator, kind: str) -> None:
        if not centers:
            logger.warning("%s: no edge pixels to sample", recipe)
            return
        picked = sorted(rng.permutation(len(centers))[:count])
        for i in picked:
            x, y = centers[i]
            self.records.append(ManifestRecord(image=rel, x=x, y=y, label=labels[i], recipe=recipe, kind=kind))

    def run(self, work: Callable[[int], None], total: int, *, threads: int = 1, desc: str = "datagen",
            progress: bool = True) -> None:
        """Call `work(i)` for every source index; each index owns its rng and output names."""
        disable = None if progress else True
        if threads > 1 and total > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for _ in tqdm(pool.map(work, range(total)), total=total, desc=desc, disable=disable):
                    pass
        else:
            for i in tqdm(range(total), desc=desc, disable=disable):
                work(i)

    def finish(self, seed: int) -> list[ManifestRecord]:
        return build_manifest(self.records, self.root / "manifest.jsonl", seed=seed)


def _maybe_rotate(image: Image, gt: BlurMap, rng: np.random.Generator, rotate: bool):
    if not rotate:
        return image, gt, None
    angle = int(rng.choice(ROTATION_ANGLES))
    return clamp(augment_rotate(image, angle)), augment_rotate(gt, angle), angle


def _blur_labels(edges: EdgeMap, gt: BlurMap) -> tuple[list[tuple[int, int]], list[int]]:
    centers = edge_pixels(edges)
    labels = [int(radius_class(gt[y, x])) for x, y in centers]
    return centers, labels


def build_blur_dataset(sources: Sequence, out, *, count: int = 50, seed: int = 0, rotate: bool = False,
                       canny_params: CannyParams = CannyParams(), progress: bool = True,
                       threads: int = 1) -> list[ManifestRecord]:
    """Every source at all 23 uniform levels; `count` edge samples per generated image."""
    writer = DatasetWriter(out, canny_params)

    def one(i: int) -> None:
        sharp, stem = _load_source(sources[i], i)
        rng = np.random.default_rng((seed, i))
        for level in range(1, NUM_BLUR_LEVELS + 1):
            blurry, gt = synth_uniform(sharp, level)
            blurry, gt, _ = _maybe_rotate(blurry, gt, rng, rotate)
            recipe = f"{stem}_L{level:02d}"
            edges = canny(blurry, **writer.canny.model_dump())
            rel = writer.save(recipe, blurry, gt, edges)
            centers, labels = _blur_labels(edges, gt)
            writer.sample_edges(recipe, rel, centers, labels, count, rng, "blur")

    writer.run(one, len(sources), threads=threads, desc="datagen-blur", progress=progress)
    return writer.finish(seed)


def build_pattern_dataset(sources: Sequence, out, *, count: int = 50, seed: int = 0, rotate: bool = False,
                          canny_params: CannyParams = CannyParams(), progress: bool = True,
                          threads: int = 1) -> list[ManifestRecord]:
    """Gradual and stepwise fields per source; labels are the quantized GT radius at the edge pixel."""
    writer = DatasetWriter(out, canny_params)

    def one(i: int) -> None:
        sharp, stem = _load_source(sources[i], i)
        rng = np.random.default_rng((seed, i))
        base = int(rng.integers(1, NUM_BLUR_LEVELS - STEPWISE_BANDS + 2))
        for mode, level in (("gradual", 1), ("stepwise", base)):
            blurry, gt = synth_pattern_field(sharp, mode, level)
            blurry, gt, _ = _maybe_rotate(blurry, gt, rng, rotate)
            recipe = f"{stem}_{mode}"
            edges = canny(blurry, **writer.canny.model_dump())
            rel = writer.save(recipe, blurry, gt, edges)
            centers, labels = _blur_labels(edges, gt)
            writer.sample_edges(recipe, rel, centers, labels, count, rng, "blur")

    writer.run(one, len(sources), threads=threads, desc="datagen-pattern", progress=progress)
    return writer.finish(seed)


def random_ellipse_mask(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded elliptical salient-object mask covering a central part of the frame."""
    cy, cx = rng.uniform(0.35, 0.65) * height, rng.uniform(0.35, 0.65) * width
    ry, rx = rng.uniform(0.15, 0.3) * height, rng.uniform(0.15, 0.3) * width
    yy, xx = np.mgrid[0:height, 0:width]
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def edge_class_labels(edges: EdgeMap, depth_gt: EdgeMap, reach: int = DEPTH_LABEL_REACH) -> np.ndarray:
    """Per-pixel edge class raster: depth where within `reach` of the GT contour."""
    near = ndimage.binary_dilation(depth_gt.edges, structure=np.ones((2 * reach + 1, 2 * reach + 1), dtype=bool))
    return np.where(near & edges.edges, EDGE_DEPTH, EDGE_PATTERN)


def build_fgbg_dataset(salient: Sequence, backgrounds: Sequence, out, *, masks: Optional[Sequence] = None,
                       count: int = 50, seed: int = 0, rotate: bool = False,
                       canny_params: CannyParams = CannyParams(), progress: bool = True,
                       threads: int = 1) -> list[ManifestRecord]:
    """
    All six (k1, k2) composites per (salient, background) pair. Writes composite,
    GT blur map and the depth contour (edges/<recipe>_depth.pgm); manifest records are
    edge samples labeled pattern (0) or depth (1).
    """
    if len(salient) != len(backgrounds) or (masks is not None and len(masks) != len(salient)):
        raise InvalidArgumentError("salient images, backgrounds and masks must pair up one-to-one")
    writer = DatasetWriter(out, canny_params)

    def one(i: int) -> None:
        fg, stem = _load_source(salient[i], i)
        bg, _ = _load_source(backgrounds[i], i)
        rng = np.random.default_rng((seed, i))
        if masks is not None:
            m, _ = _load_source(masks[i], i)
            mask = m[:, :, 0] >= 0.5
        else:
            mask = random_ellipse_mask(fg.shape[0], fg.shape[1], rng)
        for k1, k2 in enumerate_fgbg_pairs():
            result = synth_fgbg(FgBgRecipe(salient=fg, mask=mask.astype(np.uint8), background=bg, k1=k1, k2=k2))
            composite, gt, depth = result.composite, result.gt, result.depth_gt
            angle = None
            if rotate:
                composite, gt, angle = _maybe_rotate(composite, gt, rng, True)
                depth = EdgeMap(augment_rotate(depth.labels, angle, order=0))
            recipe = f"{stem}_k{k1}{k2}"
            edges = canny(composite, **writer.canny.model_dump())
            rel = writer.save(recipe, composite, gt, edges)
            io_service.write_edge_map(writer.root / "edges" / f"{recipe}_depth.pgm", depth)
            centers = edge_pixels(edges)
            classes = edge_class_labels(edges, depth)
            labels = [int(classes[y, x]) for x, y in centers]
            writer.sample_edges(recipe, rel, centers, labels, count, rng, "edge")

    writer.run(one, len(salient), threads=threads, desc="datagen-fgbg", progress=progress)
    return writer.finish(seed)


def _load_source(src, index: int) -> tuple[Image, str]:
    """A path (read from disk) or an in-memory image (named by position)."""
    if isinstance(src, (str, Path)):
        return io_service.read_image(src), Path(src).stem
    return as_image(src), f"src{index:04d}"
