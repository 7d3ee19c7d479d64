"""Central-difference verification of `backward`."""
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from app.nn.graph import Graph, backward, cross_entropy, forward
from app.nn.store import init_weights

DEFAULT_TOLERANCE = 1e-4


@dataclass
class LayerCheck:
    layer: str
    checked: int
    skipped: int  # samples whose +/- step crossed a relu or pooling kink
    max_rel_error: float


@dataclass
class GradcheckReport:
    graph: str
    seed: int
    tolerance: float
    layers: list[LayerCheck] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((c.max_rel_error for c in self.layers), default=0.0)

    @property
    def passed(self) -> bool:
        return all(c.max_rel_error < self.tolerance for c in self.layers)

    def to_table(self) -> str:
        width = max([len("layer")] + [len(c.layer) for c in self.layers])
        lines = [
            f"gradcheck {self.graph} seed={self.seed} tolerance={self.tolerance:g}",
            f"{'layer':<{width}}  {'checked':>7}  {'skipped':>7}  {'max_rel_error':>13}  status",
        ]
        for c in self.layers:
            status = "ok" if c.max_rel_error < self.tolerance else "FAIL"
            lines.append(f"{c.layer:<{width}}  {c.checked:>7}  {c.skipped:>7}  {c.max_rel_error:>13.3e}  {status}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'} (max {self.max_rel_error:.3e})")
        return "\n".join(lines)


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _same_region(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def gradcheck(graph: Graph, seed: int, *, samples_per_layer: int = 200, step: float = 1e-3,
              batch: int = 2, input_shapes: Optional[Mapping[str, tuple[int, int, int]]] = None,
              tolerance: float = DEFAULT_TOLERANCE) -> GradcheckReport:
    """
    Compare analytic parameter gradients against central differences in float64.

    Up to `samples_per_layer` entries are drawn per parametric layer. Samples whose
    perturbation changes a relu mask or pooling selection are redrawn (and counted as
    skipped): the loss is not differentiable across those points.
    """
    rng = np.random.default_rng(seed)
    shapes = dict(input_shapes or graph.inputs)
    weights = init_weights(graph.param_shapes(), seed, graph.name).astype(np.float64)
    for name in weights.names():
        if name.endswith(".bias"):
            weights.tensors[name] = rng.normal(0.0, 0.05, size=weights[name].shape)
    inputs = {n: rng.uniform(0.0, 1.0, size=(batch, *s)) for n, s in shapes.items()}
    n_classes = graph.output_shapes(shapes)[graph.output][-1]
    labels = rng.integers(0, n_classes, size=batch)

    probs, cache = forward(graph, weights, inputs, dtype=np.float64)
    analytic = backward(graph, weights, cache, labels).params
    report = GradcheckReport(graph=graph.name, seed=seed, tolerance=tolerance)

    def evaluate():
        p, c = forward(graph, weights, inputs, dtype=np.float64)
        return cross_entropy(p, labels), c.kink_signature(graph)

    for spec in graph.param_specs():
        worst = 0.0
        checked = skipped = 0
        for pname in spec.param_names:
            tensor = weights.tensors[pname]
            flat = tensor.reshape(-1)
            quota = min(samples_per_layer // len(spec.param_names) or 1, flat.size)
            done = 0
            for idx in rng.permutation(flat.size):
                if done >= quota:
                    break
                original = flat[idx]
                flat[idx] = original + step
                plus, sig_plus = evaluate()
                flat[idx] = original - step
                minus, sig_minus = evaluate()
                flat[idx] = original
                if not _same_region(sig_plus, sig_minus):
                    skipped += 1
                    continue
                numeric = (plus - minus) / (2.0 * step)
                worst = max(worst, relative_error(float(analytic[pname].reshape(-1)[idx]), numeric))
                checked += 1
                done += 1
        report.layers.append(LayerCheck(spec.name, checked, skipped, worst))
    return report
