"""Minimal CNN engine: fixed layer vocabulary, backprop, Adam and weight persistence."""
from app.nn.graph import (  # noqa: F401
    Cache,
    Gradients,
    Graph,
    LayerKind,
    LayerSpec,
    backward,
    cross_entropy,
    forward,
)
from app.nn.optim import AdamState, adam_step  # noqa: F401
from app.nn.store import WeightStore, init_weights, load_weights, save_weights  # noqa: F401
