from dataclasses import dataclass, field

import numpy as np

from app.core.errors import InvalidArgumentError, TrainingError
from app.nn.store import WeightStore


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(weights: WeightStore, grads: dict[str, np.ndarray], state: AdamState,
              lr: float) -> tuple[WeightStore, AdamState]:
    """
    One bias-corrected Adam update of the parameters named in `grads`.
    Inputs are left untouched; the step is rejected as a whole on a non-finite gradient.
    """
    for name, g in grads.items():
        if name not in weights:
            raise InvalidArgumentError(f"gradient for unknown parameter '{name}'")
        if g.shape != weights[name].shape:
            raise InvalidArgumentError(
                f"gradient shape {g.shape} does not match parameter '{name}' {weights[name].shape}"
            )
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for '{name}' at step {state.step + 1}")

    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_w = weights.copy()
    new_m = {k: v.copy() for k, v in state.m.items()}
    new_v = {k: v.copy() for k, v in state.v.items()}
    for name, g in grads.items():
        g = g.astype(np.float64)
        m = b1 * new_m.get(name, np.zeros_like(g)) + (1.0 - b1) * g
        v = b2 * new_v.get(name, np.zeros_like(g)) + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p = new_w.tensors[name].astype(np.float64)
        dtype = new_w.tensors[name].dtype
        new_w.tensors[name] = (p - lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(dtype)
        new_m[name], new_v[name] = m, v
    return new_w, AdamState(m=new_m, v=new_v, step=t, beta1=b1, beta2=b2, eps=state.eps)
