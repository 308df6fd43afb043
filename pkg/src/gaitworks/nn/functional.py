"""Forward/backward kernels for the seven layer types.

Conventions:
  - activations are channels-last: (H, W, C) for a single image or
    (N, H, W, C) batched; dense activations are (D,) or (N, D)
  - convolution kernels are (kh, kw, C, F), biases (F,)
  - ops preserve the input dtype (float32 in production, float64 in
    gradient checks)

Every forward that feeds a backward returns an opaque cache tuple; the
matching backward consumes it.
"""

from __future__ import annotations

import numpy as np

LOG_PROB_FLOOR = 1e-12


def _as_batched(x: np.ndarray, rank: int):
    """Add a leading batch axis if ``x`` is a single sample."""
    if x.ndim == rank:
        return x[None], True
    if x.ndim == rank + 1:
        return x, False
    raise ValueError(f"expected array of rank {rank} or {rank + 1}, got {x.ndim}")


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """Output size plus (begin, end) padding for 'same' semantics."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    begin = total // 2
    return out, begin, total - begin


def _im2col(xp, kh, kw, stride, ho, wo):
    """Patch matrix (N*Ho*Wo, kh*kw*C) gathered from the padded input."""
    n, _, _, c = xp.shape
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, 0 : (ho - 1) * stride + 1 : stride, 0 : (wo - 1) * stride + 1 : stride]
    # (N, Ho, Wo, C, kh, kw) -> (N*Ho*Wo, kh*kw*C); kernels flatten as (kh, kw, C)
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * ho * wo, kh * kw * c)


def conv2d_forward(x, kernels, bias, stride: int = 2, padding: str = "same"):
    """2-D convolution via im2col + one matmul. Returns (output, cache)."""
    x = np.asarray(x)
    kernels = np.asarray(kernels)
    bias = np.asarray(bias)
    xb, squeeze = _as_batched(x, 3)
    n, h, w, c = xb.shape
    kh, kw, kc, f = kernels.shape
    if kc != c:
        raise ValueError(f"input has {c} channels but kernels expect {kc}")
    if bias.shape != (f,):
        raise ValueError(f"bias shape {bias.shape} does not match filter count {f}")

    if padding == "same":
        ho, pt, pb = same_padding(h, kh, stride)
        wo, pl, pr = same_padding(w, kw, stride)
    elif padding == "valid":
        if h < kh or w < kw:
            raise ValueError(f"input {h}x{w} smaller than kernel {kh}x{kw} with valid padding")
        ho, wo = (h - kh) // stride + 1, (w - kw) // stride + 1
        pt = pb = pl = pr = 0
    else:
        raise ValueError(f"unknown padding mode {padding!r}")

    xp = xb if pt == pb == pl == pr == 0 else np.pad(xb, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    patches = _im2col(xp, kh, kw, stride, ho, wo)
    out = patches @ kernels.reshape(kh * kw * c, f)
    out += bias
    out = out.reshape(n, ho, wo, f)
    cache = (patches, xp.shape, (n, h, w, c), kernels.shape, stride, (pt, pl), (ho, wo))
    return (out[0] if squeeze else out), cache


def conv2d_backward(dout, cache, kernels):
    """Gradients of a conv2d forward: (dx, dkernels, dbias)."""
    if cache is None:
        raise ValueError("conv2d_backward requires the cache from the forward pass")
    patches, xp_shape, (n, h, w, c), kshape, stride, (pt, pl), (ho, wo) = cache
    kh, kw, _, f = kshape
    dout = np.asarray(dout)
    db_, squeeze = _as_batched(dout, 3)
    if db_.shape != (n, ho, wo, f):
        raise ValueError(f"upstream gradient shape {db_.shape} does not match forward output {(n, ho, wo, f)}")

    dbias = db_.sum(axis=(0, 1, 2))
    dflat = db_.reshape(-1, f)
    dk = (patches.T @ dflat).reshape(kshape)
    # scatter the patch gradients back onto the (padded) input
    dpatches = (dflat @ kernels.reshape(kh * kw * c, f).T).reshape(n, ho, wo, kh, kw, c)
    dxp = np.zeros(xp_shape, dtype=dout.dtype)
    for di in range(kh):
        for dj in range(kw):
            dxp[:, di : di + stride * (ho - 1) + 1 : stride,
                dj : dj + stride * (wo - 1) + 1 : stride, :] += dpatches[:, :, :, di, dj, :]
    dx = dxp[:, pt : pt + h, pl : pl + w, :]
    return (dx[0] if squeeze else dx), dk, dbias


def batchnorm_forward(x, gamma, beta, mode: str, running_mean, running_var,
                      momentum: float = 0.99, eps: float = 1e-3):
    """Per-channel batch normalisation over all non-channel axes.

    Train mode normalises with batch statistics and returns EMA-updated
    running stats; infer mode uses the running stats and mutates nothing.
    Returns (out, cache, new_running_mean, new_running_var).
    """
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("batchnorm on an empty batch")
    c = x.shape[-1]
    gamma = np.asarray(gamma)
    beta = np.asarray(beta)
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"gamma/beta must have shape ({c},)")
    axes = tuple(range(x.ndim - 1))

    if mode == "train":
        m = x.size // c
        if m < 1:
            raise ValueError("batchnorm train mode needs at least one sample")
        flat = x.reshape(-1, c)
        # accumulate the channel statistics in float64 to dodge cancellation
        mu64 = flat.sum(axis=0, dtype=np.float64) / m
        var64 = np.einsum("ij,ij->j", flat, flat, dtype=np.float64) / m - mu64 * mu64
        np.clip(var64, 0.0, None, out=var64)
        mu = mu64.astype(x.dtype)
        var = var64.astype(x.dtype)
        inv_std = (1.0 / np.sqrt(var64 + eps)).astype(x.dtype)
        xhat = x - mu
        xhat *= inv_std
        out = gamma * xhat
        out += beta
        new_mean = momentum * np.asarray(running_mean) + (1.0 - momentum) * mu
        new_var = momentum * np.asarray(running_var) + (1.0 - momentum) * var
        cache = ("train", xhat, inv_std, gamma, m)
        return out, cache, new_mean.astype(running_mean.dtype, copy=False), new_var.astype(running_var.dtype, copy=False)
    if mode == "infer":
        inv_std = 1.0 / np.sqrt(np.asarray(running_var) + eps)
        xhat = (x - np.asarray(running_mean))
        xhat *= inv_std
        out = gamma * xhat
        out += beta
        cache = ("infer", xhat, inv_std, gamma, None)
        return out, cache, running_mean, running_var
    raise ValueError(f"unknown batchnorm mode {mode!r}")


def batchnorm_backward(dout, cache):
    """Gradients (dx, dgamma, dbeta) for either batchnorm mode."""
    mode, xhat, inv_std, gamma, m = cache
    dout = np.asarray(dout)
    c = dout.shape[-1]
    dflat = dout.reshape(-1, c)
    xflat = xhat.reshape(-1, c)
    dgamma = np.einsum("ij,ij->j", dflat, xflat, dtype=np.float64).astype(dout.dtype)
    dbeta = dflat.sum(axis=0, dtype=np.float64).astype(dout.dtype)
    if mode == "infer":
        return dout * (gamma * inv_std), dgamma, dbeta
    # Train mode: statistics depend on x, so the reduction terms feed back.
    dx = dout * gamma
    s1 = dx.reshape(-1, c).sum(axis=0, dtype=np.float64).astype(dout.dtype)
    s2 = np.einsum("ij,ij->j", dx.reshape(-1, c), xflat, dtype=np.float64).astype(dout.dtype)
    dx *= m
    dx -= s1
    dx -= xhat * s2
    dx *= inv_std / m
    return dx, dgamma, dbeta


def relu_forward(x):
    x = np.asarray(x)
    return np.maximum(x, 0), (x > 0)


def relu_backward(dout, cache):
    return np.asarray(dout) * cache


def flatten_forward(x):
    x = np.asarray(x)
    if x.ndim <= 1:
        return x, x.shape
    return x.reshape(x.shape[0], -1), x.shape


def flatten_backward(dout, cache):
    return np.asarray(dout).reshape(cache)


def dense_forward(x, weights, bias):
    """Affine map: out[j] = sum_i x[i] * W[i, j] + b[j]."""
    x = np.asarray(x)
    weights = np.asarray(weights)
    bias = np.asarray(bias)
    xb, squeeze = (x[None], True) if x.ndim == 1 else (x, False)
    if xb.ndim != 2 or xb.shape[1] != weights.shape[0]:
        raise ValueError(f"input of length {xb.shape[-1]} incompatible with weights {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ValueError(f"bias shape {bias.shape} does not match output width {weights.shape[1]}")
    out = xb @ weights + bias
    return (out[0] if squeeze else out), xb


def dense_backward(dout, cache, weights):
    xb = cache
    dout = np.asarray(dout)
    db_ = dout[None] if dout.ndim == 1 else dout
    dw = xb.T @ db_
    dbias = db_.sum(axis=0)
    dx = db_ @ np.asarray(weights).T
    return (dx[0] if dout.ndim == 1 else dx), dw, dbias


def dropout(x, rate: float, mode: str, rng: np.random.Generator | None = None):
    """Inverted dropout. Returns (out, mask); mask is None in infer mode."""
    x = np.asarray(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "infer" or rate == 0.0:
        return x, None
    if mode != "train":
        raise ValueError(f"unknown dropout mode {mode!r}")
    if rng is None:
        raise ValueError("train-mode dropout needs an explicit rng")
    keep = rng.random(x.shape) >= rate
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    return x * keep * scale, (keep, scale)


def dropout_backward(dout, cache):
    if cache is None:
        return np.asarray(dout)
    keep, scale = cache
    return np.asarray(dout) * keep * scale


def softmax(x):
    """Numerically stable softmax along the last axis."""
    x = np.asarray(x)
    if x.shape[-1] < 1:
        raise ValueError("softmax needs at least one logit")
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(dout, probs):
    dout = np.asarray(dout)
    dot = (dout * probs).sum(axis=-1, keepdims=True)
    return probs * (dout - dot)


def cross_entropy_loss(probs, target_class: int) -> float:
    """-log p[target], floored so degenerate predictions stay finite."""
    probs = np.asarray(probs)
    if probs.ndim != 1:
        raise ValueError("cross_entropy_loss takes a single probability vector")
    if not 0 <= target_class < probs.shape[0]:
        raise ValueError(f"target class {target_class} outside [0, {probs.shape[0]})")
    return float(-np.log(max(float(probs[target_class]), LOG_PROB_FLOOR)))


def softmax_cross_entropy(logits, targets):
    """Fused softmax + cross-entropy over a batch.

    Returns (mean_loss, dlogits) where dlogits = (probs - onehot) / N.
    """
    logits = np.asarray(logits)
    lb = logits[None] if logits.ndim == 1 else logits
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    n, k = lb.shape
    if targets.shape != (n,):
        raise ValueError(f"expected {n} targets, got {targets.shape}")
    if targets.min() < 0 or targets.max() >= k:
        raise ValueError(f"targets must lie in [0, {k})")
    probs = softmax(lb)
    picked = np.clip(probs[np.arange(n), targets], LOG_PROB_FLOOR, None)
    loss = float(-np.log(picked).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), targets] -= 1.0
    dlogits /= n
    if logits.ndim == 1:
        dlogits = dlogits[0]
    return loss, dlogits.astype(logits.dtype, copy=False)
