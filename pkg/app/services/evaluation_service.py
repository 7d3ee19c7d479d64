"""
Blur map metrics: raw/relative/sparse MAE and defocus-blur-detection PR evaluation.
"""
import logging
from pathlib import Path
from typing import Literal, Optional, Sequence

import numpy as np

from app.core.errors import EmptyInputError, ImageIOError, InvalidArgumentError
from app.models.blur_map import RADIUS_MAX, BlurMap
from app.schemas.evaluation import EvalReport, ImageScore, PrPoint
from app.services import io_service

logger = logging.getLogger(__name__)

RelativeMode = Literal["global", "per-image"]
ALPHA_GRID = np.linspace(0.0, 1.0, 101)


def _pair(est: BlurMap, gt: BlurMap) -> tuple[np.ndarray, np.ndarray]:
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape:
        raise InvalidArgumentError(f"estimate {est.shape} and ground truth {gt.shape} differ in size")
    if est.size == 0:
        raise InvalidArgumentError("blur maps must not be empty")
    return est, gt


def mae_raw(est: BlurMap, gt: BlurMap, mask: Optional[np.ndarray] = None) -> float:
    est, gt = _pair(est, gt)
    diff = np.abs(est - gt)
    if mask is not None:
        diff = diff[np.asarray(mask, dtype=bool)]
        if diff.size == 0:
            raise EmptyInputError("MAE mask selects no pixels")
    return float(diff.mean())


def mae_relative(est: BlurMap, gt: BlurMap, mode: RelativeMode = "global") -> float:
    """
    MAE after rescaling radii to [0, 1]: by the global maximum radius 6.0, or
    (mode="per-image") each map by its own maximum.
    """
    est, gt = _pair(est, gt)
    if mode == "global":
        return mae_raw(est / RADIUS_MAX, gt / RADIUS_MAX)
    if mode == "per-image":
        return mae_raw(_unit_scale(est), _unit_scale(gt))
    raise InvalidArgumentError(f"unknown relative MAE mode '{mode}'")


def _unit_scale(m: np.ndarray) -> np.ndarray:
    top = m.max()
    return m / top if top > 0 else m


def mae_sparse(sparse: BlurMap, pattern_mask: np.ndarray, gt: BlurMap) -> float:
    """MAE of the sparse estimates at pattern-edge pixels only."""
    return mae_raw(sparse, gt, mask=pattern_mask)


def dbd_threshold(blur_map: BlurMap, alpha: float) -> tuple[np.ndarray, float]:
    """
    Blurred-region mask (value >= tau) with tau = alpha*vmax + (1 - alpha)*vmin.
    A constant map is therefore all blurred.
    """
    m = np.asarray(blur_map, dtype=np.float64)
    if m.size == 0:
        raise InvalidArgumentError("blur map must not be empty")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidArgumentError(f"alpha must lie in [0, 1], got {alpha}")
    vmin, vmax = float(m.min()), float(m.max())
    # alpha*vmax + (1 - alpha)*vmin, kept monotone in alpha
    tau = vmin + alpha * (vmax - vmin)
    if alpha == 1.0:
        tau = vmax
    elif alpha == 0.0:
        tau = vmin
    return m >= tau, tau


def confusion(pred: np.ndarray, truth: np.ndarray) -> tuple[int, int, int, int]:
    """(TP, FP, FN, TN) with 'blurred' as the positive class."""
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    tn = int(np.sum(~pred & ~truth))
    return tp, fp, fn, tn


def pr_eval(maps: Sequence[BlurMap], gts: Sequence[np.ndarray],
            alphas: Optional[Sequence[float]] = None) -> EvalReport:
    """
    Precision, recall, accuracy and F-measure of the thresholded maps at every alpha,
    from confusion counts pooled over all images.
    """
    if not maps or not gts:
        raise EmptyInputError("pr_eval needs at least one blur map and ground-truth mask")
    if len(maps) != len(gts):
        raise InvalidArgumentError(f"{len(maps)} blur maps but {len(gts)} ground-truth masks")
    alphas = ALPHA_GRID if alphas is None else np.asarray(alphas, dtype=np.float64)
    for m, g in zip(maps, gts):
        _pair(m, np.asarray(g, dtype=np.float64))

    points = []
    for alpha in alphas:
        tp = fp = fn = tn = 0
        for m, g in zip(maps, gts):
            pred, _ = dbd_threshold(m, float(alpha))
            c = confusion(pred, g)
            tp, fp, fn, tn = tp + c[0], fp + c[1], fn + c[2], tn + c[3]
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        points.append(PrPoint(alpha=float(alpha), precision=precision, recall=recall,
                              accuracy=(tp + tn) / (tp + fp + fn + tn), f_measure=f))

    best = max(points, key=lambda p: p.accuracy)
    best_f = max(points, key=lambda p: p.f_measure)
    logger.info("best accuracy %.4f at alpha %.2f", best.accuracy, best.alpha)
    return EvalReport(pr_curve=points, best_alpha=best.alpha, best_accuracy=best.accuracy,
                      best_f_alpha=best_f.alpha, best_f_measure=best_f.f_measure)


def score_maps(named: Sequence[tuple[str, BlurMap, BlurMap]], mode: RelativeMode = "global") -> EvalReport:
    if not named:
        raise EmptyInputError("no blur maps to score")
    scores = [ImageScore(name=name, mae_raw=mae_raw(est, gt), mae_relative=mae_relative(est, gt, mode))
              for name, est, gt in named]
    return EvalReport.from_scores(scores, relative_mode=mode)


def _paired_files(est_dir: Path, gt_dir: Path, suffixes: Sequence[str]) -> list[tuple[Path, Path]]:
    pairs = []
    for est in sorted(Path(est_dir).glob("*.bmap")):
        match = next((gt_dir / f"{est.stem}{s}" for s in suffixes if (gt_dir / f"{est.stem}{s}").exists()), None)
        if match is None:
            raise ImageIOError(gt_dir, f"no ground truth for '{est.stem}'")
        pairs.append((est, match))
    if not pairs:
        raise EmptyInputError(f"no .bmap files in {est_dir}")
    return pairs


def evaluate_mae_dirs(est_dir, gt_dir, mode: RelativeMode = "global") -> EvalReport:
    """Score every <name>.bmap in `est_dir` against <name>.bmap in `gt_dir`."""
    pairs = _paired_files(Path(est_dir), Path(gt_dir), (".bmap",))
    return score_maps([(e.stem, io_service.read_bmap(e), io_service.read_bmap(g)) for e, g in pairs], mode)


def evaluate_dbd_dirs(est_dir, gt_dir) -> EvalReport:
    """PR evaluation of <name>.bmap maps against <name>.png/.pgm masks (non-zero = blurred)."""
    pairs = _paired_files(Path(est_dir), Path(gt_dir), (".png", ".pgm"))
    maps = [io_service.read_bmap(e) for e, _ in pairs]
    gts = [io_service.read_image(g)[:, :, 0] > 0 for _, g in pairs]
    return pr_eval(maps, gts)
