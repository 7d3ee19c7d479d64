"""
Fixed-vocabulary network graphs with cached forward and reverse-mode backward.

A graph is an ordered tuple of `LayerSpec` nodes; every node reads the outputs of
graph inputs or earlier nodes, so the declaration order is a valid evaluation order.
The last node must be a softmax: backward differentiates the mean softmax
cross-entropy of the batch.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

import numpy as np

from app.core.errors import InvalidArgumentError, PreconditionError, ShapeMismatchError
from app.nn import layers as L
from app.nn.store import WeightStore

PROB_FLOOR = 1e-12


class LayerKind(str, Enum):
    CONV3X3 = "conv3x3_same"
    RELU = "relu"
    MAXPOOL2 = "maxpool2"
    ADAPTIVE_MAXPOOL = "adaptive_maxpool"
    DENSE = "dense"
    SOFTMAX = "softmax"
    CONCAT = "concat_channels"
    GLOBAL_MAXPOOL = "global_maxpool"


PARAMETRIC = (LayerKind.CONV3X3, LayerKind.DENSE)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: LayerKind
    inputs: tuple[str, ...]
    units: int = 0                              # conv output channels / dense outputs
    out_size: Optional[tuple[int, int]] = None  # adaptive_maxpool only

    @property
    def weight(self) -> str:
        return f"{self.name}.weight"

    @property
    def bias(self) -> str:
        return f"{self.name}.bias"

    @property
    def param_names(self) -> tuple[str, ...]:
        return (self.weight, self.bias) if self.kind in PARAMETRIC else ()


@dataclass(frozen=True)
class Graph:
    name: str
    inputs: Mapping[str, tuple[int, int, int]]  # input name -> (H, W, C)
    layers: tuple[LayerSpec, ...]

    def __post_init__(self) -> None:
        known = set(self.inputs)
        for spec in self.layers:
            if spec.name in known:
                raise InvalidArgumentError(f"duplicate node name '{spec.name}' in graph '{self.name}'")
            for src in spec.inputs:
                if src not in known:
                    raise InvalidArgumentError(f"layer '{spec.name}' reads unknown node '{src}'")
            known.add(spec.name)
        if not self.layers or self.layers[-1].kind is not LayerKind.SOFTMAX:
            raise InvalidArgumentError(f"graph '{self.name}' must end with a softmax layer")

    @property
    def output(self) -> str:
        return self.layers[-1].name

    def param_specs(self) -> list[LayerSpec]:
        return [s for s in self.layers if s.kind in PARAMETRIC]

    def param_names(self) -> list[str]:
        return [n for s in self.layers for n in s.param_names]

    def output_shapes(self, input_shapes: Optional[Mapping[str, tuple[int, ...]]] = None) -> dict[str, tuple[int, ...]]:
        """Per-item output shape of every node (inputs included)."""
        shapes: dict[str, tuple[int, ...]] = dict(input_shapes or self.inputs)
        for spec in self.layers:
            src = [shapes[s] for s in spec.inputs]
            shapes[spec.name] = _infer_shape(spec, src)
        return shapes

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = self.output_shapes()
        out: dict[str, tuple[int, ...]] = {}
        for spec in self.param_specs():
            x = shapes[spec.inputs[0]]
            if spec.kind is LayerKind.CONV3X3:
                out[spec.weight] = (3, 3, x[-1], spec.units)
            else:
                out[spec.weight] = (int(np.prod(x)), spec.units)
            out[spec.bias] = (spec.units,)
        return out

    def flops(self) -> int:
        """Multiply-accumulate count x2 for conv and dense layers, one item."""
        shapes = self.output_shapes()
        total = 0
        for spec in self.param_specs():
            x = shapes[spec.inputs[0]]
            if spec.kind is LayerKind.CONV3X3:
                h, w, c = x
                total += 2 * h * w * 9 * c * spec.units
            else:
                total += 2 * int(np.prod(x)) * spec.units
        return total


def _infer_shape(spec: LayerSpec, src: list[tuple[int, ...]]) -> tuple[int, ...]:
    x = src[0]
    kind = spec.kind
    if kind is LayerKind.CONV3X3:
        _require(spec, len(x) == 3, f"expects HxWxC input, got {x}")
        return (x[0], x[1], spec.units)
    if kind in (LayerKind.RELU, LayerKind.SOFTMAX):
        return x
    if kind is LayerKind.MAXPOOL2:
        _require(spec, len(x) == 3 and x[0] >= 2 and x[1] >= 2, f"cannot 2x2-pool {x}")
        return (x[0] // 2, x[1] // 2, x[2])
    if kind is LayerKind.ADAPTIVE_MAXPOOL:
        oh, ow = spec.out_size
        _require(spec, len(x) == 3 and x[0] >= oh and x[1] >= ow, f"input {x} smaller than {spec.out_size}")
        return (oh, ow, x[2])
    if kind is LayerKind.GLOBAL_MAXPOOL:
        _require(spec, len(x) == 3, f"expects HxWxC input, got {x}")
        return (x[2],)
    if kind is LayerKind.DENSE:
        return (spec.units,)
    if kind is LayerKind.CONCAT:
        spatial = {s[:-1] for s in src}
        _require(spec, len(spatial) == 1, f"inputs disagree on spatial size: {src}")
        return (*src[0][:-1], sum(s[-1] for s in src))
    raise InvalidArgumentError(f"unknown layer kind {kind}")


def _require(spec: LayerSpec, ok: bool, detail: str) -> None:
    if not ok:
        raise ShapeMismatchError(spec.name, detail)


@dataclass
class Cache:
    """Activations and routing data recorded by `forward`."""
    values: dict[str, np.ndarray] = field(default_factory=dict)
    aux: dict[str, object] = field(default_factory=dict)

    def kink_signature(self, graph: Graph) -> list[np.ndarray]:
        """Relu masks and pooling selections; equal signatures mean the same linear region."""
        sig = []
        for spec in graph.layers:
            if spec.kind in (LayerKind.RELU, LayerKind.MAXPOOL2,
                             LayerKind.ADAPTIVE_MAXPOOL, LayerKind.GLOBAL_MAXPOOL):
                sig.append(self.aux[spec.name])
        return sig


@dataclass
class Gradients:
    params: dict[str, np.ndarray]
    inputs: dict[str, np.ndarray]
    loss: float


def _as_inputs(graph: Graph, inputs) -> dict[str, np.ndarray]:
    if isinstance(inputs, np.ndarray):
        if len(graph.inputs) != 1:
            raise InvalidArgumentError(f"graph '{graph.name}' needs inputs {sorted(graph.inputs)}")
        inputs = {next(iter(graph.inputs)): inputs}
    missing = set(graph.inputs) - set(inputs)
    if missing:
        raise InvalidArgumentError(f"missing graph inputs: {sorted(missing)}")
    return dict(inputs)


def forward(graph: Graph, weights: WeightStore, inputs, *, dtype=np.float32,
            keep_cache: bool = True) -> tuple[np.ndarray, Optional[Cache]]:
    """
    Evaluate the graph on a batch. `inputs` maps input names to NHWC arrays (a bare
    array is accepted for single-input graphs). Returns the softmax output (float64)
    and, when `keep_cache`, the cache backward needs.
    """
    feeds = _as_inputs(graph, inputs)
    values: dict[str, np.ndarray] = {}
    aux: dict[str, object] = {}
    batch = None
    for name, expected in graph.inputs.items():
        x = np.asarray(feeds[name], dtype=dtype)
        if x.ndim != 4 or x.shape[-1] != expected[-1]:
            raise ShapeMismatchError(name, f"expected N x H x W x {expected[-1]} input, got {x.shape}")
        if batch is None:
            batch = x.shape[0]
        elif x.shape[0] != batch:
            raise ShapeMismatchError(name, f"batch size {x.shape[0]} differs from {batch}")
        values[name] = x

    for spec in graph.layers:
        src = [values[s] for s in spec.inputs]
        _infer_shape(spec, [v.shape[1:] for v in src])
        x = src[0]
        kind = spec.kind
        if kind in PARAMETRIC:
            for pname in spec.param_names:
                if pname not in weights:
                    raise InvalidArgumentError(f"missing weight tensor '{pname}'")
            w, b = weights[spec.weight], weights[spec.bias]
        if kind is LayerKind.CONV3X3:
            _require(spec, w.shape == (3, 3, x.shape[-1], spec.units),
                     f"weight shape {w.shape} does not fit input {x.shape[1:]}")
            y, cols = L.conv3x3_forward(x, w, b)
            aux[spec.name] = cols
        elif kind is LayerKind.RELU:
            y, aux[spec.name] = L.relu_forward(x)
        elif kind is LayerKind.MAXPOOL2:
            y, aux[spec.name] = L.maxpool2_forward(x)
        elif kind is LayerKind.ADAPTIVE_MAXPOOL:
            y, aux[spec.name] = L.adaptive_maxpool_forward(x, *spec.out_size)
        elif kind is LayerKind.GLOBAL_MAXPOOL:
            y, aux[spec.name] = L.global_maxpool_forward(x)
        elif kind is LayerKind.DENSE:
            _require(spec, w.shape == (int(np.prod(x.shape[1:])), spec.units),
                     f"weight shape {w.shape} does not fit input {x.shape[1:]}")
            y = L.dense_forward(x, w, b)
        elif kind is LayerKind.CONCAT:
            y = np.concatenate(src, axis=-1)
        elif kind is LayerKind.SOFTMAX:
            y = L.softmax(x)
        else:  # pragma: no cover - guarded by LayerKind
            raise InvalidArgumentError(f"unknown layer kind {kind}")
        values[spec.name] = y

    out = values[graph.output]
    return out, (Cache(values, aux) if keep_cache else None)


def cross_entropy(probs: np.ndarray, label) -> float:
    """
    -ln(p[label]) with p floored at 1e-12. For a 2D batch of posteriors and a label
    array the mean over the batch is returned.
    """
    p = np.asarray(probs, dtype=np.float64)
    batch = p.ndim == 2
    p2 = p if batch else p[np.newaxis, :]
    labels = np.atleast_1d(np.asarray(label))
    if labels.shape[0] != p2.shape[0]:
        raise InvalidArgumentError(f"{labels.shape[0]} labels for {p2.shape[0]} posteriors")
    if np.any(labels < 0) or np.any(labels >= p2.shape[1]):
        raise InvalidArgumentError(f"label out of range [0, {p2.shape[1]})")
    if np.any(np.abs(p2.sum(axis=1) - 1.0) > 1e-6):
        raise InvalidArgumentError("probabilities must sum to 1 within 1e-6")
    picked = np.maximum(p2[np.arange(p2.shape[0]), labels.astype(np.int64)], PROB_FLOOR)
    losses = -np.log(picked)
    return float(losses.mean()) if batch else float(losses[0])


def _ancestors_with_params(graph: Graph, trainable: set[str]) -> set[str]:
    """Nodes whose output gradient is needed to reach a trainable parameter."""
    needed: set[str] = set()
    upstream: dict[str, bool] = {name: False for name in graph.inputs}
    for spec in graph.layers:
        has = any(p in trainable for p in spec.param_names)
        upstream[spec.name] = has or any(upstream[s] for s in spec.inputs)
    for name, flag in upstream.items():
        if flag:
            needed.add(name)
    return needed


def backward(graph: Graph, weights: WeightStore, cache: Optional[Cache], labels, *,
             frozen=(), input_grads: bool = False) -> Gradients:
    """
    Gradients of the mean softmax cross-entropy with respect to every trainable
    parameter. Names listed (or prefixed) in `frozen` get no entry.
    """
    if cache is None or graph.output not in cache.values:
        raise PreconditionError("backward needs the cache of a forward pass run with keep_cache=True")
    probs = cache.values[graph.output]
    labels = np.atleast_1d(np.asarray(labels)).astype(np.int64)
    n, k = probs.shape
    if labels.shape[0] != n or np.any(labels < 0) or np.any(labels >= k):
        raise InvalidArgumentError(f"labels must be {n} class indices in [0, {k})")

    frozen = tuple(frozen)
    trainable = {p for p in graph.param_names() if not any(p == f or p.startswith(f + ".") for f in frozen)}
    needed = _ancestors_with_params(graph, trainable)
    if input_grads:
        needed |= set(graph.inputs) | {s.name for s in graph.layers}

    loss = cross_entropy(probs, labels)
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0
    grads: dict[str, np.ndarray] = {}
    params: dict[str, np.ndarray] = {}

    softmax_spec = graph.layers[-1]
    # fused softmax + cross-entropy
    grads[softmax_spec.inputs[0]] = (probs - onehot) / n

    def push(name: str, g: np.ndarray) -> None:
        if name in grads:
            grads[name] = grads[name] + g
        else:
            grads[name] = g

    for spec in reversed(graph.layers[:-1]):
        dy = grads.pop(spec.name, None)
        if dy is None:
            continue
        src = spec.inputs
        want_input = any(s in needed for s in src)
        want_params = any(p in trainable for p in spec.param_names)
        kind = spec.kind
        x = cache.values[src[0]]
        if kind is LayerKind.CONV3X3:
            dx, dw, db = L.conv3x3_backward(dy, cache.aux[spec.name], x.shape, weights[spec.weight],
                                            want_params, want_input)
        elif kind is LayerKind.DENSE:
            dx, dw, db = L.dense_backward(dy, x, weights[spec.weight], want_params, want_input)
        else:
            dw = db = None
            if not want_input:
                continue
            if kind is LayerKind.RELU:
                dx = L.relu_backward(dy, cache.aux[spec.name])
            elif kind is LayerKind.MAXPOOL2:
                dx = L.maxpool2_backward(dy, cache.aux[spec.name], x.shape)
            elif kind is LayerKind.ADAPTIVE_MAXPOOL:
                dx = L.adaptive_maxpool_backward(dy, cache.aux[spec.name], x.shape)
            elif kind is LayerKind.GLOBAL_MAXPOOL:
                dx = L.global_maxpool_backward(dy, cache.aux[spec.name], x.shape)
            elif kind is LayerKind.CONCAT:
                offsets = np.cumsum([cache.values[s].shape[-1] for s in src])[:-1]
                for s, part in zip(src, np.split(dy, offsets, axis=-1)):
                    if s in needed:
                        push(s, part)
                continue
            else:
                raise InvalidArgumentError(f"softmax layer '{spec.name}' may only terminate the graph")
        if want_params:
            params[spec.weight] = dw
            params[spec.bias] = db
        if want_input and dx is not None and src[0] in needed:
            push(src[0], dx)

    inputs = {name: grads[name] for name in graph.inputs if input_grads and name in grads}
    if input_grads:
        for name in graph.inputs:
            inputs.setdefault(name, np.zeros_like(cache.values[name], dtype=np.float64))
    ordered = {p: params[p] for p in graph.param_names() if p in params}
    return Gradients(params=ordered, inputs=inputs, loss=loss)
