"""Network description, parameter state, and full forward/backward passes.

A network is a flat sequence of layer descriptors split into an encoder and
a decoder; the latent representation is whatever leaves the last encoder
layer. Parameters live in a TrainState whose entries align one-to-one with
the descriptor sequence, so snapshots and optimizer slots never need names.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import (
    ACTIVATIONS,
    NumericError,
    ShapeError,
    batchnorm_infer,
    batchnorm_train,
    batchnorm_train_backward,
    conv2d,
    conv2d_backward,
    dense,
    dense_backward,
    dropout_train,
    fit_spatial,
    fit_spatial_backward,
    maxpool,
    maxpool_backward,
    upsample,
    upsample_backward,
)
from .optim import OPTIMIZERS, init_slots

LAYER_KINDS = (
    "conv2d",
    "maxpool2x2",
    "upsample2x",
    "dense",
    "batchnorm",
    "dropout",
    "output_conv",
)

BN_MOMENTUM = 0.9


@dataclass(frozen=True)
class LayerDescriptor:
    """One layer in a network: what it is and its scalar hyperparameters.

    ``filters_or_units`` is the filter count for conv kinds and the unit
    count for dense; ``target_hw`` lets an upsample2x crop or pad its output
    to an exact spatial size so a decoder can retrace odd pooling shapes.
    """

    kind: str
    filters_or_units: int = 0
    activation: str = "linear"
    dropout_rate: float = 0.0
    target_hw: tuple | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind in ("conv2d", "output_conv", "dense") and self.filters_or_units < 1:
            raise ValueError(f"{self.kind} needs a positive filters_or_units")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.target_hw is not None and self.kind != "upsample2x":
            raise ValueError("target_hw only applies to upsample2x")


def trace_shapes(layers, input_shape):
    """Per-layer output shapes for ``layers`` applied to ``input_shape``.

    Returns a list with one shape per layer (the input shape excluded).
    Raises ShapeError when a layer cannot accept what the trace feeds it.
    """
    shape = tuple(input_shape)
    out = []
    for i, layer in enumerate(layers):
        kind = layer.kind
        if kind in ("conv2d", "output_conv"):
            if len(shape) != 3:
                raise ShapeError(f"layer {i}: conv needs a (H, W, C) input, got {shape}")
            shape = (shape[0], shape[1], layer.filters_or_units)
        elif kind == "maxpool2x2":
            if len(shape) != 3 or shape[0] < 2 or shape[1] < 2:
                raise ShapeError(f"layer {i}: cannot pool shape {shape}")
            shape = (shape[0] // 2, shape[1] // 2, shape[2])
        elif kind == "upsample2x":
            if len(shape) != 3:
                raise ShapeError(f"layer {i}: upsample needs a (H, W, C) input, got {shape}")
            h, w = 2 * shape[0], 2 * shape[1]
            if layer.target_hw is not None:
                h, w = layer.target_hw
            shape = (h, w, shape[2])
        elif kind == "dense":
            shape = (layer.filters_or_units,)
        else:  # batchnorm, dropout
            if not shape:
                raise ShapeError(f"layer {i}: empty input shape")
        out.append(shape)
    return out


@dataclass(frozen=True)
class NetworkSpec:
    """An autoencoder: encoder and decoder descriptor sequences.

    Construction validates the whole shape trace, that the encoder ends at
    ``bottleneck_shape``, and that the decoder restores ``input_shape``.
    """

    encoder: tuple
    decoder: tuple
    bottleneck_shape: tuple
    optimizer_id: str
    learning_rate: float
    input_shape: tuple

    def __post_init__(self):
        if self.optimizer_id not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer_id!r}")
        if not self.learning_rate > 0.0:
            raise ValueError("learning_rate must be positive")
        if not self.encoder:
            raise ValueError("encoder must have at least one layer")
        enc_shapes = trace_shapes(self.encoder, self.input_shape)
        if enc_shapes[-1] != tuple(self.bottleneck_shape):
            raise ShapeError(
                f"encoder produces {enc_shapes[-1]}, declared bottleneck {self.bottleneck_shape}"
            )
        if self.decoder:
            dec_shapes = trace_shapes(self.decoder, self.bottleneck_shape)
            if dec_shapes[-1] != tuple(self.input_shape):
                raise ShapeError(
                    f"decoder produces {dec_shapes[-1]}, input is {self.input_shape}"
                )

    def layers(self):
        return self.encoder + self.decoder


@dataclass
class TrainState:
    """Learnable parameters plus everything training accumulates.

    ``params[i]`` holds layer i's tensors (empty dict for parameterless
    layers), ``extras[i]`` its non-learnable running statistics, and
    ``slots[i]`` the optimizer accumulators, one dict per parameter.
    """

    params: list
    extras: list
    slots: list
    step: int = 0


def init_state(spec, seed, dtype=np.float32):
    """Fresh parameters for ``spec``: Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = []
    extras = []
    shape = tuple(spec.input_shape)
    for layer in spec.layers():
        kind = layer.kind
        p = {}
        e = {}
        if kind in ("conv2d", "output_conv"):
            c_in, f = shape[2], layer.filters_or_units
            limit = np.sqrt(6.0 / (9 * c_in + 9 * f))
            p["kernel"] = rng.uniform(-limit, limit, size=(3, 3, c_in, f)).astype(dtype)
            p["bias"] = np.zeros(f, dtype=dtype)
        elif kind == "dense":
            d_in = int(np.prod(shape))
            units = layer.filters_or_units
            limit = np.sqrt(6.0 / (d_in + units))
            p["weight"] = rng.uniform(-limit, limit, size=(d_in, units)).astype(dtype)
            p["bias"] = np.zeros(units, dtype=dtype)
        elif kind == "batchnorm":
            c = shape[-1]
            p["gamma"] = np.ones(c, dtype=dtype)
            p["beta"] = np.zeros(c, dtype=dtype)
            e["running_mean"] = np.zeros(c, dtype=dtype)
            e["running_var"] = np.ones(c, dtype=dtype)
        params.append(p)
        extras.append(e)
        shape = trace_shapes([layer], shape)[0]
    return TrainState(params=params, extras=extras, slots=init_slots(params, spec.optimizer_id))


@dataclass
class ForwardCache:
    """Everything backward_pass needs, tied to the spec that produced it."""

    spec: NetworkSpec
    training: bool
    entries: list = field(default_factory=list)
    batch_stats: list = field(default_factory=list)  # (layer index, mean, var)


def forward_pass(spec, state, batch, training=False, dropout_seed=0):
    """Runs the full network; returns (reconstruction, latent, cache).

    Dropout masks are drawn from ``dropout_seed`` in layer order, so a
    forward pass is a pure function of its arguments.
    """
    batch = np.asarray(batch)
    if batch.ndim != 4 or batch.shape[1:] != tuple(spec.input_shape):
        raise ShapeError(
            f"batch shape {batch.shape} does not match input {spec.input_shape}"
        )
    rng = np.random.default_rng(dropout_seed)
    cache = ForwardCache(spec=spec, training=training)
    x = batch
    latent = None
    n_enc = len(spec.encoder)
    for i, layer in enumerate(spec.layers()):
        kind = layer.kind
        p = state.params[i]
        if kind in ("conv2d", "output_conv"):
            x, entry = conv2d(x, p["kernel"], p["bias"], layer.activation)
        elif kind == "maxpool2x2":
            in_shape = x.shape
            x, arg = maxpool(x)
            entry = (arg, in_shape)
        elif kind == "upsample2x":
            x = upsample(x)
            entry = (x.shape[1], x.shape[2])
            if layer.target_hw is not None:
                x = fit_spatial(x, layer.target_hw)
        elif kind == "dense":
            x, entry = dense(x, p["weight"], p["bias"], layer.activation)
        elif kind == "batchnorm":
            if training:
                x, entry = batchnorm_train(x, p["gamma"], p["beta"])
                cache.batch_stats.append((i, entry[3], entry[4]))
            else:
                e = state.extras[i]
                x = batchnorm_infer(x, p["gamma"], p["beta"], e["running_mean"], e["running_var"])
                entry = None
        elif kind == "dropout":
            if training and layer.dropout_rate > 0.0:
                x, entry = dropout_train(x, layer.dropout_rate, rng)
            else:
                entry = None
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
        cache.entries.append(entry)
        if i == n_enc - 1:
            latent = x
    if not (np.isfinite(x).all() and np.isfinite(latent).all()):
        raise NumericError("forward pass produced non-finite values")
    return x, latent, cache


def backward_pass(spec, state, cache, d_loss):
    """Gradients for every parameter, aligned with ``state.params``.

    Requires the cache of a training-mode forward pass over this spec.
    """
    if cache.spec is not spec:
        raise ValueError("cache was produced by a different network")
    if not cache.training:
        raise ValueError("backward_pass needs a training-mode cache")
    layers = spec.layers()
    if len(cache.entries) != len(layers):
        raise ValueError("cache does not cover every layer")
    grads = [{} for _ in layers]
    d = d_loss
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        kind = layer.kind
        entry = cache.entries[i]
        p = state.params[i]
        if kind in ("conv2d", "output_conv"):
            d, dk, db = conv2d_backward(d, entry, p["kernel"], layer.activation)
            grads[i] = {"kernel": dk, "bias": db}
        elif kind == "maxpool2x2":
            arg, in_shape = entry
            d = maxpool_backward(d, arg, in_shape)
        elif kind == "upsample2x":
            if layer.target_hw is not None:
                d = fit_spatial_backward(d, entry)
            d = upsample_backward(d)
        elif kind == "dense":
            d, dw, db = dense_backward(d, entry, p["weight"], layer.activation)
            grads[i] = {"weight": dw, "bias": db}
        elif kind == "batchnorm":
            d, dgamma, dbeta = batchnorm_train_backward(d, entry, p["gamma"])
            grads[i] = {"gamma": dgamma, "beta": dbeta}
        elif kind == "dropout":
            if entry is not None:
                d = d * entry
    for g in grads:
        for v in g.values():
            if not np.isfinite(v).all():
                raise NumericError("backward pass produced non-finite gradients")
    return grads


def update_running_stats(state, cache, momentum=BN_MOMENTUM):
    """Folds the cache's batch statistics into the running estimates."""
    for i, mu, var in cache.batch_stats:
        e = state.extras[i]
        e["running_mean"] = momentum * e["running_mean"] + (1.0 - momentum) * mu
        e["running_var"] = momentum * e["running_var"] + (1.0 - momentum) * var
