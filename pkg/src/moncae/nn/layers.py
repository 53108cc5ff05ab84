"""Layer primitives: forward and backward passes on numpy arrays.

All convolutional kernels are 3x3 with same-padding; pooling is 2x2
non-overlapping with floor semantics on odd dimensions; upsampling is
nearest-neighbor 2x. Arrays are channels-last: (N, H, W, C) batched, with
the public spec-level wrappers also accepting single images (H, W, C).
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Incompatible tensor shapes for a layer operation."""


class NumericError(FloatingPointError):
    """A pass produced NaN or Inf values."""


ACTIVATIONS = ("relu", "sigmoid", "tanh", "linear")


def stable_sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def apply_activation(z, kind):
    if kind == "relu":
        return np.maximum(z, 0)
    if kind == "sigmoid":
        return stable_sigmoid(z)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "linear":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(d_out, kind, z, a):
    """Gradient through an elementwise activation, given pre/post values."""
    if kind == "relu":
        return d_out * (z > 0)
    if kind == "sigmoid":
        return d_out * a * (1.0 - a)
    if kind == "tanh":
        return d_out * (1.0 - a * a)
    if kind == "linear":
        return d_out
    raise ValueError(f"unknown activation {kind!r}")


def _batched(x):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected (H, W, C) or (N, H, W, C), got shape {x.shape}")


# --- convolution -----------------------------------------------------------

def conv2d(x, kernels, bias, activation="linear"):
    """Same-padded 3x3 cross-correlation plus bias and activation.

    Args:
        x: (N, H, W, C) input.
        kernels: (3, 3, C, F) filter bank.
        bias: (F,).

    Returns:
        (output (N, H, W, F), cache for conv2d_backward).
    """
    n, h, w, c = x.shape
    kh, kw, kc, f = kernels.shape
    if (kh, kw) != (3, 3):
        raise ShapeError(f"kernels must be 3x3, got {kh}x{kw}")
    if kc != c:
        raise ShapeError(f"kernel expects {kc} input channels, input has {c}")
    xp = np.zeros((n, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1 : h + 1, 1 : w + 1, :] = x
    z = np.zeros((n, h, w, f), dtype=x.dtype)
    for di in range(3):
        for dj in range(3):
            z += np.tensordot(xp[:, di : di + h, dj : dj + w, :], kernels[di, dj], axes=([3], [0]))
    z += bias
    a = apply_activation(z, activation)
    return a, (xp, z, a)


def conv2d_backward(d_out, cache, kernels, activation="linear"):
    """Returns (d_input, d_kernels, d_bias)."""
    xp, z, a = cache
    dz = activation_backward(d_out, activation, z, a)
    n, hp, wp, c = xp.shape
    h, w = hp - 2, wp - 2
    db = dz.sum(axis=(0, 1, 2))
    dk = np.empty_like(kernels)
    dxp = np.zeros_like(xp)
    for di in range(3):
        for dj in range(3):
            patch = xp[:, di : di + h, dj : dj + w, :]
            dk[di, dj] = np.tensordot(patch, dz, axes=([0, 1, 2], [0, 1, 2]))
            dxp[:, di : di + h, dj : dj + w, :] += np.tensordot(dz, kernels[di, dj], axes=([3], [1]))
    return dxp[:, 1 : h + 1, 1 : w + 1, :], dk, db


# --- pooling and upsampling ------------------------------------------------

def maxpool(x):
    """2x2 max pooling, floor semantics; returns (output, argmax indices)."""
    n, h, w, c = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"maxpool needs spatial dims >= 2, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    xe = x[:, : 2 * h2, : 2 * w2, :]
    win = xe.reshape(n, h2, 2, w2, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, h2, w2, 4, c)
    arg = win.argmax(axis=3)
    out = np.take_along_axis(win, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return out, arg


def maxpool_backward(d_out, arg, input_shape):
    """Routes gradient to the recorded argmax of each 2x2 window."""
    n, h, w, c = input_shape
    h2, w2 = h // 2, w // 2
    dwin = np.zeros((n, h2, w2, 4, c), dtype=d_out.dtype)
    np.put_along_axis(dwin, arg[:, :, :, None, :], d_out[:, :, :, None, :], axis=3)
    dxe = dwin.reshape(n, h2, w2, 2, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, 2 * h2, 2 * w2, c)
    if (2 * h2, 2 * w2) == (h, w):
        return dxe
    dx = np.zeros(input_shape, dtype=d_out.dtype)
    dx[:, : 2 * h2, : 2 * w2, :] = dxe
    return dx


def upsample(x):
    """Nearest-neighbor 2x: each pixel becomes a 2x2 block."""
    return x.repeat(2, axis=1).repeat(2, axis=2)


def upsample_backward(d_out):
    """Sums each 2x2 block, the adjoint of nearest-neighbor replication."""
    n, h2, w2, c = d_out.shape
    return d_out.reshape(n, h2 // 2, 2, w2 // 2, 2, c).sum(axis=(2, 4))


def fit_spatial(x, target_hw):
    """Center-crops or zero-pads spatial dims to ``target_hw``."""
    th, tw = target_hw
    n, h, w, c = x.shape
    if h > th:
        off = (h - th) // 2
        x = x[:, off : off + th, :, :]
    elif h < th:
        before = (th - h) // 2
        out = np.zeros((n, th, w, c), dtype=x.dtype)
        out[:, before : before + h, :, :] = x
        x = out
    n, h, w, c = x.shape
    if w > tw:
        off = (w - tw) // 2
        x = x[:, :, off : off + tw, :]
    elif w < tw:
        before = (tw - w) // 2
        out = np.zeros((n, h, tw, c), dtype=x.dtype)
        out[:, :, before : before + w, :] = x
        x = out
    return x


def fit_spatial_backward(d_out, source_hw):
    """Adjoint of fit_spatial: maps gradient back to the pre-fit shape."""
    sh, sw = source_hw
    n, th, tw, c = d_out.shape
    if sh > th:  # forward cropped: pad gradient with zeros
        off = (sh - th) // 2
        out = np.zeros((n, sh, tw, c), dtype=d_out.dtype)
        out[:, off : off + th, :, :] = d_out
        d_out = out
    elif sh < th:  # forward padded: crop gradient
        before = (th - sh) // 2
        d_out = d_out[:, before : before + sh, :, :]
    n, h, tw, c = d_out.shape
    if sw > tw:
        off = (sw - tw) // 2
        out = np.zeros((n, h, sw, c), dtype=d_out.dtype)
        out[:, :, off : off + tw, :] = d_out
        d_out = out
    elif sw < tw:
        before = (tw - sw) // 2
        d_out = d_out[:, :, before : before + sw, :]
    return d_out


# --- dense, batchnorm, dropout --------------------------------------------

def dense(x, weight, bias, activation="linear"):
    """Flattens per-sample input and applies an affine map plus activation."""
    n = x.shape[0]
    flat = x.reshape(n, -1)
    if flat.shape[1] != weight.shape[0]:
        raise ShapeError(f"dense expects {weight.shape[0]} inputs, got {flat.shape[1]}")
    z = flat @ weight + bias
    a = apply_activation(z, activation)
    return a, (x.shape, flat, z, a)


def dense_backward(d_out, cache, weight, activation="linear"):
    in_shape, flat, z, a = cache
    dz = activation_backward(d_out, activation, z, a)
    dw = flat.T @ dz
    db = dz.sum(axis=0)
    dx = (dz @ weight.T).reshape(in_shape)
    return dx, dw, db


BN_EPS = 1e-5


def batchnorm_train(x, gamma, beta):
    """Normalizes per channel over batch and spatial axes (training mode)."""
    axes = tuple(range(x.ndim - 1))
    mu = x.mean(axis=axes)
    var = x.var(axis=axes)
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xh = (x - mu) * inv
    y = gamma * xh + beta
    return y, (xh, inv, axes, mu, var)


def batchnorm_train_backward(d_out, cache, gamma):
    xh, inv, axes, _, _ = cache
    dgamma = (d_out * xh).sum(axis=axes)
    dbeta = d_out.sum(axis=axes)
    dxh = d_out * gamma
    dx = inv * (dxh - dxh.mean(axis=axes) - xh * (dxh * xh).mean(axis=axes))
    return dx, dgamma, dbeta


def batchnorm_infer(x, gamma, beta, running_mean, running_var):
    inv = 1.0 / np.sqrt(running_var + BN_EPS)
    return gamma * (x - running_mean) * inv + beta


def dropout_train(x, rate, rng):
    """Inverted dropout; the mask is drawn from ``rng`` and returned for backward."""
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * mask, mask


# --- spec-level single-image wrappers --------------------------------------

def conv2d_forward(x, kernels, bias, activation="linear"):
    """conv2d accepting a single (H, W, C) image or an (N, H, W, C) batch."""
    xb, single = _batched(x)
    out, _ = conv2d(xb, np.asarray(kernels), np.asarray(bias), activation)
    return out[0] if single else out


def maxpool_forward(x):
    xb, single = _batched(x)
    out, _ = maxpool(xb)
    return out[0] if single else out


def upsample_forward(x):
    xb, single = _batched(x)
    out = upsample(xb)
    return out[0] if single else out
