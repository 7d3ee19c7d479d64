"""
B-NET / E-NET assemblies on top of the tensor engine, inference and blur decoding.
"""
import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from app.core.cache import cache, make_key
from app.core.errors import InvalidArgumentError
from app.models.blur_map import NUM_BLUR_LEVELS, class_radius
from app.models.edge_map import PatchSet
from app.nn import Graph, LayerKind, LayerSpec, WeightStore, forward, load_weights
from app.nn.store import require
from app.schemas.training import ArchitectureWidths
from app.services.edge_service import PATCH_SIDES, stack_patchsets

logger = logging.getLogger(__name__)

NS_WEIGHTS = "weights"
POOLED_SIZE = (13, 13)
EDGE_CLASSES = 2          # 0 = pattern, 1 = depth
REFERENCE_MFLOPS = {"bnet": 123.46, "enet": 149.16}


@dataclass(frozen=True)
class Architecture:
    widths: ArchitectureWidths
    bnet: Graph
    enet: Graph

    @property
    def f1_params(self) -> list[str]:
        return [n for n in self.bnet.param_names() if n.startswith("f1.")]

    def mflops(self) -> dict[str, float]:
        return {"bnet": self.bnet.flops() / 1e6, "enet": self.enet.flops() / 1e6}


def _feature_block(prefix: str, src: str, width: int) -> list[LayerSpec]:
    """Two conv+relu layers pooled to the shared 13x13 grid."""
    return [
        LayerSpec(f"{prefix}.conv1", LayerKind.CONV3X3, (src,), units=width),
        LayerSpec(f"{prefix}.relu1", LayerKind.RELU, (f"{prefix}.conv1",)),
        LayerSpec(f"{prefix}.conv2", LayerKind.CONV3X3, (f"{prefix}.relu1",), units=width),
        LayerSpec(f"{prefix}.relu2", LayerKind.RELU, (f"{prefix}.conv2",)),
        LayerSpec(f"{prefix}.pool", LayerKind.ADAPTIVE_MAXPOOL, (f"{prefix}.relu2",), out_size=POOLED_SIZE),
    ]


def _deep_block(prefix: str, src: str, width: int) -> list[LayerSpec]:
    specs = []
    prev = src
    for i in (1, 2, 3):
        specs.append(LayerSpec(f"{prefix}.conv{i}", LayerKind.CONV3X3, (prev,), units=width))
        specs.append(LayerSpec(f"{prefix}.relu{i}", LayerKind.RELU, (f"{prefix}.conv{i}",)))
        prev = f"{prefix}.relu{i}"
        if i < 3:
            specs.append(LayerSpec(f"{prefix}.pool{i}", LayerKind.MAXPOOL2, (prev,)))
            prev = f"{prefix}.pool{i}"
    specs.append(LayerSpec(f"{prefix}.gmp", LayerKind.GLOBAL_MAXPOOL, (prev,)))
    return specs


def _head(prefix: str, src: str, widths: ArchitectureWidths, classes: int) -> list[LayerSpec]:
    return [
        LayerSpec(f"{prefix}.fc1", LayerKind.DENSE, (src,), units=widths.hidden1),
        LayerSpec(f"{prefix}.relu1", LayerKind.RELU, (f"{prefix}.fc1",)),
        LayerSpec(f"{prefix}.fc2", LayerKind.DENSE, (f"{prefix}.relu1",), units=widths.hidden2),
        LayerSpec(f"{prefix}.relu2", LayerKind.RELU, (f"{prefix}.fc2",)),
        LayerSpec(f"{prefix}.fc3", LayerKind.DENSE, (f"{prefix}.relu2",), units=classes),
        LayerSpec(f"{prefix}.softmax", LayerKind.SOFTMAX, (f"{prefix}.fc3",)),
    ]


def _f1(widths: ArchitectureWidths) -> list[LayerSpec]:
    specs: list[LayerSpec] = []
    for side in PATCH_SIDES:
        specs += _feature_block(f"f1.b{side}", f"p{side}", widths.f1)
    specs.append(LayerSpec("f1.concat", LayerKind.CONCAT, tuple(f"f1.b{s}.pool" for s in PATCH_SIDES)))
    return specs


@lru_cache(maxsize=8)
def build_architecture(widths: Optional[ArchitectureWidths] = None) -> Architecture:
    """
    f1 (three branches over the 41/27/15 patches), f2 (41 patch), the b/e deep blocks
    and the two classification heads, assembled into the B-NET and E-NET graphs.
    """
    widths = widths or ArchitectureWidths()
    inputs = {f"p{s}": (s, s, 3) for s in PATCH_SIDES}

    bnet = Graph(
        name="bnet",
        inputs=inputs,
        layers=tuple(_f1(widths) + _deep_block("b", "f1.concat", widths.deep)
                     + _head("head1", "b.gmp", widths, NUM_BLUR_LEVELS)),
    )
    enet = Graph(
        name="enet",
        inputs=inputs,
        layers=tuple(
            _f1(widths)
            + _feature_block("f2", "p41", widths.f2)
            + [LayerSpec("fusion", LayerKind.CONCAT, ("f1.concat", "f2.pool"))]
            + _deep_block("e", "fusion", widths.deep)
            + _head("head2", "e.gmp", widths, EDGE_CLASSES)
        ),
    )
    arch = Architecture(widths=widths, bnet=bnet, enet=enet)
    for net, value in arch.mflops().items():
        reference = REFERENCE_MFLOPS[net]
        logger.info("%s: %.2f MFLOPs per patch set (reference %.2f)", net, value, reference)
        if widths == ArchitectureWidths() and not reference / 10 <= value <= reference * 10:
            logger.warning("%s FLOP count %.2f M is not within an order of magnitude of %.2f M",
                           net, value, reference)
    return arch


def _posteriors(graph: Graph, weights: WeightStore,
                patchsets: Union[PatchSet, Sequence[PatchSet]], threads: int) -> np.ndarray:
    require(weights, graph.param_names(), graph.name)
    single = isinstance(patchsets, PatchSet)
    items = [patchsets] if single else list(patchsets)

    def run(ps: PatchSet) -> np.ndarray:
        probs, _ = forward(graph, weights, stack_patchsets([ps]), keep_cache=False)
        return probs[0]

    # one item per forward keeps every row independent of batch composition
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, items))
    else:
        rows = [run(ps) for ps in items]
    classes = graph.output_shapes()[graph.output][-1]
    out = np.stack(rows) if rows else np.zeros((0, classes))
    return out[0] if single else out


def bnet_forward(ps: Union[PatchSet, Sequence[PatchSet]], weights: WeightStore, *,
                 arch: Optional[Architecture] = None, threads: int = 1) -> np.ndarray:
    """23-class blur posterior for one patch set, or an N x 23 array for a sequence."""
    arch = arch or build_architecture()
    return _posteriors(arch.bnet, weights, ps, threads)


def enet_forward(ps: Union[PatchSet, Sequence[PatchSet]], weights: WeightStore, *,
                 arch: Optional[Architecture] = None, threads: int = 1) -> np.ndarray:
    """{pattern, depth} posterior for one patch set, or an N x 2 array for a sequence."""
    arch = arch or build_architecture()
    return _posteriors(arch.enet, weights, ps, threads)


def predict_blur(posterior: np.ndarray) -> Union[float, np.ndarray]:
    """Radius of the most probable blur class; rows are decoded independently."""
    post = np.asarray(posterior)
    if post.shape[-1] != NUM_BLUR_LEVELS:
        raise InvalidArgumentError(f"expected a {NUM_BLUR_LEVELS}-class posterior, got shape {post.shape}")
    idx = np.argmax(post, axis=-1)
    if post.ndim == 1:
        return class_radius(int(idx))
    return class_radius(idx.astype(np.float64))


def infer_widths(weights: WeightStore) -> ArchitectureWidths:
    """Recover layer widths from stored tensors (B-NET or E-NET stores)."""
    def units(name: str, default: int) -> int:
        return int(weights[name].shape[-1]) if name in weights else default

    base = ArchitectureWidths()
    head = "head1" if "head1.fc1.weight" in weights else "head2"
    deep = "b" if "b.conv1.weight" in weights else "e"
    return ArchitectureWidths(
        f1=units("f1.b41.conv1.weight", base.f1),
        f2=units("f2.conv1.weight", base.f2),
        deep=units(f"{deep}.conv1.weight", base.deep),
        hidden1=units(f"{head}.fc1.weight", base.hidden1),
        hidden2=units(f"{head}.fc2.weight", base.hidden2),
    )


async def load_weights_cached(path, ttl: int) -> WeightStore:
    """`load_weights` behind the shared async cache; a modified file gets a new key."""
    path = Path(path)
    mtime = path.stat().st_mtime_ns if path.exists() else None
    key = make_key(NS_WEIGHTS, path=path.resolve(), mtime=mtime)
    cached = await cache.get(key)
    if cached is not None:
        return cached
    weights = await asyncio.to_thread(load_weights, path)
    await cache.set(key, weights, ttl=ttl)
    return weights


def network_summary(arch: Architecture) -> list[dict]:
    rows = []
    for graph in (arch.bnet, arch.enet):
        shapes = graph.param_shapes()
        rows.append({
            "name": graph.name,
            "parameters": int(sum(int(np.prod(s)) for s in shapes.values())),
            "mflops": graph.flops() / 1e6,
            "classes": graph.output_shapes()[graph.output][-1],
            "layers": len(graph.layers),
        })
    return rows
