"""
Mini-batch Adam training of the B-NET and E-NET graphs.
"""
import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from tqdm import tqdm

from app.core.errors import InvalidArgumentError, TrainingError
from app.models.blur_map import NUM_BLUR_LEVELS
from app.models.dataset import PatchDataset
from app.nn import AdamState, Graph, WeightStore, adam_step, backward, cross_entropy, forward, init_weights
from app.nn.store import require
from app.schemas.training import BNET_SCHEDULE, ENET_SCHEDULE, ArchitectureWidths, HistoryRow, TrainSchedule
from app.services.network_service import EDGE_CLASSES, build_architecture

logger = logging.getLogger(__name__)

FROZEN_PREFIX = "f1"
HISTORY_COLUMNS = ("epoch", "lr", "train_loss", "val_loss", "val_acc")


@dataclass
class TrainResult:
    weights: WeightStore
    history: list[HistoryRow] = field(default_factory=list)


def split_indices(n: int, val_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle, then the first floor(n * val_fraction) items go to validation."""
    order = rng.permutation(n)
    n_val = int(n * val_fraction)
    return order[n_val:], order[:n_val]


def _chunks(index: np.ndarray, size: int):
    for start in range(0, len(index), size):
        yield index[start:start + size]


def _batch_gradients(graph: Graph, weights: WeightStore, data: PatchDataset, batch: np.ndarray,
                     frozen: Sequence[str], chunk_size: int, threads: int = 1) -> tuple[dict[str, np.ndarray], float]:
    """Mean-loss gradients of one batch, accumulated chunk by chunk in a fixed order."""
    chunks = list(_chunks(batch, chunk_size))

    def run(chunk: np.ndarray):
        part = data.subset(chunk)
        _, cache = forward(graph, weights, part.feeds)
        return backward(graph, weights, cache, part.labels, frozen=frozen)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(chunk) for chunk in chunks]

    total: dict[str, np.ndarray] = {}
    loss = 0.0
    for chunk, grads in zip(chunks, results):
        scale = len(chunk) / len(batch)
        for name, g in grads.params.items():
            total[name] = total[name] + scale * g if name in total else scale * g
        loss += scale * grads.loss
    return total, loss


def evaluate(graph: Graph, weights: WeightStore, data: PatchDataset, chunk_size: int = 32) -> tuple[float, float]:
    """Mean cross-entropy and accuracy over a dataset."""
    losses = []
    hits = 0
    for chunk in _chunks(np.arange(len(data)), chunk_size):
        part = data.subset(chunk)
        probs, _ = forward(graph, weights, part.feeds, keep_cache=False)
        losses.append(cross_entropy(probs, part.labels) * len(chunk))
        hits += int((probs.argmax(axis=1) == part.labels).sum())
    return float(sum(losses) / len(data)), hits / len(data)


def train(graph: Graph, weights: WeightStore, data: PatchDataset, schedule: TrainSchedule, *,
          frozen: Sequence[str] = (), progress: bool = True, threads: int = 1) -> TrainResult:
    """
    Train a copy of `weights`: seeded train/val split, per-epoch seeded shuffle,
    step-decayed learning rate and one Adam update per batch.
    """
    n = len(data)
    if n == 0:
        raise TrainingError("empty dataset")
    classes = graph.output_shapes()[graph.output][-1]
    if np.any(data.labels < 0) or np.any(data.labels >= classes):
        raise InvalidArgumentError(f"labels must lie in [0, {classes})")

    rng = np.random.default_rng(schedule.seed)
    train_idx, val_idx = split_indices(n, schedule.val_fraction, rng)
    if len(train_idx) == 0:
        raise TrainingError("no training samples left after the validation split")
    val_data = data.subset(val_idx) if len(val_idx) else None
    if val_data is None:
        logger.warning("validation split is empty (%d samples); val metrics will be blank", n)

    state = AdamState()
    history: list[HistoryRow] = []
    epochs = tqdm(range(schedule.epochs), desc=f"train {graph.name}", unit="epoch", disable=None if progress else True)
    for epoch in epochs:
        lr = schedule.lr_at(epoch)
        order = rng.permutation(train_idx)
        running = 0.0
        for step, batch in enumerate(_chunks(order, schedule.batch_size)):
            grads, loss = _batch_gradients(graph, weights, data, batch, frozen, schedule.chunk_size, threads)
            weights, state = adam_step(weights, grads, state, lr)
            running += loss * len(batch)
            logger.debug("epoch %d batch %d loss %.5f", epoch, step, loss)

        val_loss = val_acc = None
        if val_data is not None:
            val_loss, val_acc = evaluate(graph, weights, val_data, schedule.chunk_size)
        row = HistoryRow(epoch=epoch, lr=lr, train_loss=running / len(train_idx),
                         val_loss=val_loss, val_acc=val_acc)
        history.append(row)
        epochs.set_postfix(loss=f"{row.train_loss:.4f}")
        logger.info("%s epoch %d lr %.1e train_loss %.5f val_loss %s val_acc %s", graph.name, epoch, lr,
                    row.train_loss, _fmt(val_loss), _fmt(val_acc))
    return TrainResult(weights=weights, history=history)


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.5f}"


def train_bnet(data: PatchDataset, schedule: TrainSchedule = BNET_SCHEDULE, *,
               widths: Optional[ArchitectureWidths] = None, progress: bool = True,
               threads: int = 1) -> TrainResult:
    if np.any(data.labels >= NUM_BLUR_LEVELS):
        raise InvalidArgumentError(f"blur class out of range [0, {NUM_BLUR_LEVELS})")
    graph = build_architecture(widths).bnet
    weights = init_weights(graph.param_shapes(), schedule.seed, architecture="bnet")
    return train(graph, weights, data, schedule, progress=progress, threads=threads)


def train_enet(data: PatchDataset, bnet_weights: WeightStore, schedule: TrainSchedule = ENET_SCHEDULE, *,
               widths: Optional[ArchitectureWidths] = None, progress: bool = True,
               threads: int = 1) -> TrainResult:
    """E-NET training with f1 copied from B-NET and frozen."""
    if np.any(data.labels >= EDGE_CLASSES):
        raise InvalidArgumentError(f"edge class out of range [0, {EDGE_CLASSES})")
    arch = build_architecture(widths)
    graph = arch.enet
    require(bnet_weights, arch.f1_params, "B-NET weight store")
    shapes = graph.param_shapes()
    weights = init_weights(shapes, schedule.seed, architecture="enet")
    for name in arch.f1_params:
        inherited = bnet_weights[name]
        if inherited.shape != shapes[name]:
            raise InvalidArgumentError(f"inherited tensor '{name}' has shape {inherited.shape}, expected {shapes[name]}")
        weights.tensors[name] = inherited.copy()
    return train(graph, weights, data, schedule, frozen=(FROZEN_PREFIX,), progress=progress,
                 threads=threads)


def write_history(path, history: list[HistoryRow]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS)
        writer.writeheader()
        for row in history:
            writer.writerow({k: ("" if v is None else v) for k, v in row.model_dump().items()})
