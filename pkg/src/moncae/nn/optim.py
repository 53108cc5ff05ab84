"""Parameter updates: sgd, adam, and rmsprop.

Updates are applied in place on a TrainState; accumulator slots live on the
state so a state object carries everything needed to resume training.
"""

from __future__ import annotations

import numpy as np

OPTIMIZERS = ("sgd", "adam", "rmsprop")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
RMSPROP_RHO = 0.9
RMSPROP_EPS = 1e-8


def init_slots(params, optimizer_id):
    """Zeroed accumulators shaped like ``params`` for the chosen optimizer."""
    if optimizer_id not in OPTIMIZERS:
        raise ValueError(f"unknown optimizer {optimizer_id!r}")
    names = {"sgd": (), "adam": ("m", "v"), "rmsprop": ("v",)}[optimizer_id]
    return [
        {key: {name: np.zeros_like(val) for name in names} for key, val in layer.items()}
        for layer in params
    ]


def optimizer_step(state, grads, optimizer_id, learning_rate):
    """Applies one update step to ``state.params`` from per-layer gradients."""
    state.step += 1
    t = state.step
    for layer, glayer, slayer in zip(state.params, grads, state.slots):
        for key, param in layer.items():
            g = glayer[key]
            slot = slayer[key]
            if optimizer_id == "sgd":
                param -= learning_rate * g
            elif optimizer_id == "adam":
                m = slot["m"]
                v = slot["v"]
                m *= ADAM_BETA1
                m += (1.0 - ADAM_BETA1) * g
                v *= ADAM_BETA2
                v += (1.0 - ADAM_BETA2) * g * g
                m_hat = m / (1.0 - ADAM_BETA1**t)
                v_hat = v / (1.0 - ADAM_BETA2**t)
                param -= learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
            elif optimizer_id == "rmsprop":
                v = slot["v"]
                v *= RMSPROP_RHO
                v += (1.0 - RMSPROP_RHO) * g * g
                param -= learning_rate * g / (np.sqrt(v) + RMSPROP_EPS)
            else:
                raise ValueError(f"unknown optimizer {optimizer_id!r}")
    return state
