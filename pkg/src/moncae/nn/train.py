"""Minibatch training loop with validation-based early stopping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import reconstruction_loss, reconstruction_loss_grad
from .network import backward_pass, forward_pass, update_running_stats
from .optim import optimizer_step


@dataclass
class TrainResult:
    state: "TrainState"
    best_val_loss: float
    epochs_run: int
    history: list  # one (train_loss, val_loss) pair per epoch run


def evaluate_loss(spec, state, data, batch_size, loss_kind="bce"):
    """Mean reconstruction loss over ``data`` in inference mode."""
    data = np.asarray(data)
    total = 0.0
    for start in range(0, len(data), batch_size):
        batch = data[start : start + batch_size]
        recon, _, _ = forward_pass(spec, state, batch, training=False)
        total += reconstruction_loss(recon, batch, loss_kind) * len(batch)
    return total / len(data)


def train_epochs(
    spec,
    state,
    train_set,
    val_set,
    max_epochs,
    batch_size,
    early_stop_patience=1,
    loss_kind="bce",
    rng_seed=0,
):
    """Trains ``state`` in place for up to ``max_epochs`` epochs.

    Targets are the inputs themselves. After each epoch the validation loss
    is measured in inference mode; training stops once it has failed to
    improve for ``early_stop_patience`` consecutive epochs (pass None to
    disable early stopping). Every batch order and dropout mask derives
    from ``rng_seed``, so the run is a pure function of its arguments.
    """
    train_set = np.asarray(train_set)
    val_set = np.asarray(val_set)
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation sets must be non-empty")
    if max_epochs < 1:
        raise ValueError("max_epochs must be at least 1")
    rng = np.random.default_rng(rng_seed)
    history = []
    best_val = np.inf
    bad_epochs = 0
    for epoch in range(max_epochs):
        order = rng.permutation(len(train_set))
        total = 0.0
        for start in range(0, len(train_set), batch_size):
            batch = train_set[order[start : start + batch_size]]
            dropout_seed = int(rng.integers(0, 2**63))
            recon, _, cache = forward_pass(
                spec, state, batch, training=True, dropout_seed=dropout_seed
            )
            loss, d_loss = reconstruction_loss_grad(recon, batch, loss_kind)
            grads = backward_pass(spec, state, cache, d_loss)
            update_running_stats(state, cache)
            optimizer_step(state, grads, spec.optimizer_id, spec.learning_rate)
            total += loss * len(batch)
        train_loss = total / len(train_set)
        val_loss = evaluate_loss(spec, state, val_set, batch_size, loss_kind)
        history.append((train_loss, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            bad_epochs = 0
        else:
            bad_epochs += 1
            if early_stop_patience is not None and bad_epochs >= early_stop_patience:
                break
    return TrainResult(
        state=state,
        best_val_loss=float(best_val),
        epochs_run=len(history),
        history=history,
    )
