"""Scoring pipeline: genome -> short training run -> objective values.

Every evaluation decodes the genome, trains a fresh network briefly with
early stopping, and reports the best validation reconstruction loss plus
the level of compression of the decoded bottleneck. Finetuning and the
downstream linear classifier probe live here too.

All randomness derives from the caller's eval seed, so results do not
depend on evaluation order or thread scheduling.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .genome import decode
from .moo import ObjectivePoint, level_of_compression
from .nn import (
    TrainState,
    forward_pass,
    init_state,
    optimizer_step,
    softmax_cross_entropy,
    train_epochs,
)
from .nn.optim import init_slots


@dataclass(frozen=True)
class EvalResult:
    objectives: ObjectivePoint
    bottleneck_shape: tuple
    epochs_trained: int
    train_seconds: float


@dataclass(frozen=True)
class ProbeResult:
    cl_loss: float
    cl_acc: float


@dataclass
class FinetuneResult:
    spec: "NetworkSpec"
    state: TrainState
    history: list  # (train_loss, val_loss) per epoch


def _derive_seeds(eval_seed, n):
    return [int(s) for s in np.random.SeedSequence(eval_seed).generate_state(n)]


def evaluate_individual(
    genome,
    limits,
    dataset,
    max_epochs=5,
    batch_size=256,
    loss_kind="bce",
    eval_seed=0,
):
    """Trains a freshly initialized decode of ``genome`` and scores it.

    Decode or numeric failures propagate; the evolution loop is the layer
    that turns them into a worst-case score.
    """
    spec = decode(genome, limits)
    init_seed, train_seed = _derive_seeds(eval_seed, 2)
    state = init_state(spec, seed=init_seed)
    started = time.perf_counter()
    result = train_epochs(
        spec,
        state,
        dataset.images_for("train"),
        dataset.images_for("validation"),
        max_epochs=max_epochs,
        batch_size=batch_size,
        early_stop_patience=1,
        loss_kind=loss_kind,
        rng_seed=train_seed,
    )
    elapsed = time.perf_counter() - started
    point = ObjectivePoint(
        rec_loss=result.best_val_loss,
        loc=level_of_compression(spec.bottleneck_shape),
    )
    return EvalResult(
        objectives=point,
        bottleneck_shape=tuple(spec.bottleneck_shape),
        epochs_trained=result.epochs_run,
        train_seconds=elapsed,
    )


def finetune(
    genome,
    limits,
    dataset,
    epochs=20,
    batch_size=256,
    loss_kind="bce",
    seed=0,
    warm_state=None,
):
    """Trains for exactly ``epochs`` epochs, no early stopping.

    Starts from a fresh initialization unless ``warm_state`` carries the
    weights of an earlier run of the same architecture.
    """
    spec = decode(genome, limits)
    init_seed, train_seed = _derive_seeds(seed, 2)
    state = warm_state if warm_state is not None else init_state(spec, seed=init_seed)
    result = train_epochs(
        spec,
        state,
        dataset.images_for("train"),
        dataset.images_for("validation"),
        max_epochs=epochs,
        batch_size=batch_size,
        early_stop_patience=None,
        loss_kind=loss_kind,
        rng_seed=train_seed,
    )
    return FinetuneResult(spec=spec, state=state, history=result.history)


def encode_images(spec, state, images, batch_size=256):
    """Latent representations of ``images`` in inference mode."""
    chunks = []
    for start in range(0, len(images), batch_size):
        _, latent, _ = forward_pass(spec, state, images[start : start + batch_size])
        chunks.append(latent)
    return np.concatenate(chunks)


def train_linear_probe(
    train_latents,
    train_labels,
    test_latents,
    test_labels,
    probe_epochs=10,
    seed=0,
    learning_rate=1e-2,
    batch_size=64,
):
    """Fits one dense softmax layer on flattened latents.

    The probe is deliberately minimal so its accuracy measures what the
    latents retain, not what a deep classifier could recover.
    """
    train_labels = np.asarray(train_labels)
    test_labels = np.asarray(test_labels)
    if len(np.unique(train_labels)) < 2:
        raise ValueError("probe needs at least two classes in the train split")
    if len(test_labels) == 0:
        raise ValueError("probe needs a non-empty test split")
    flat_train = np.asarray(train_latents).reshape(len(train_labels), -1).astype(np.float64)
    flat_test = np.asarray(test_latents).reshape(len(test_labels), -1).astype(np.float64)
    n_classes = int(max(train_labels.max(), test_labels.max())) + 1
    d = flat_train.shape[1]
    rng = np.random.default_rng(seed)
    limit = np.sqrt(6.0 / (d + n_classes))
    params = [
        {
            "weight": rng.uniform(-limit, limit, size=(d, n_classes)),
            "bias": np.zeros(n_classes),
        }
    ]
    state = TrainState(params=params, extras=[{}], slots=init_slots(params, "adam"))
    for _ in range(probe_epochs):
        order = rng.permutation(len(flat_train))
        for start in range(0, len(flat_train), batch_size):
            pick = order[start : start + batch_size]
            batch = flat_train[pick]
            logits = batch @ params[0]["weight"] + params[0]["bias"]
            _, d_logits = softmax_cross_entropy(logits, train_labels[pick])
            grads = [{"weight": batch.T @ d_logits, "bias": d_logits.sum(axis=0)}]
            optimizer_step(state, grads, "adam", learning_rate)
    logits = flat_test @ params[0]["weight"] + params[0]["bias"]
    cl_loss, _ = softmax_cross_entropy(logits, test_labels)
    cl_acc = float((logits.argmax(axis=1) == test_labels).mean())
    return ProbeResult(cl_loss=cl_loss, cl_acc=cl_acc)


def classifier_probe(spec, state, dataset, probe_epochs=10, seed=0):
    """Probes a trained encoder's latents for class information."""
    train_latents = encode_images(spec, state, dataset.images_for("train"))
    test_latents = encode_images(spec, state, dataset.images_for("test"))
    return train_linear_probe(
        train_latents,
        dataset.labels_for("train"),
        test_latents,
        dataset.labels_for("test"),
        probe_epochs=probe_epochs,
        seed=seed,
    )
