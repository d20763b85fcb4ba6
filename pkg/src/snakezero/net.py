"""Convolutional policy/value network built directly on numpy.

Architecture for an n x n board (n even): two 3x3 convolutions with 10
filters each (stride 1, zero padding 1) and leaky-ReLU activations, a
2x2 max pool, a flatten to 10*(n/2)^2 features, then two independent
fully connected branches (-> 200 -> 100) ending in a 4-way policy head
(softmax over logits) and a scalar linear value head.

Parameters are stored as float32; every forward/backward pass computes
in float64 and gradient checks run entirely in float64.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .env import FEATURE_PLANES, encode_features
from .errors import InvalidConfiguration, NumericError

logger = logging.getLogger(__name__)

FILTERS = 10
KERNEL = 3
FC1_WIDTH = 200
FC2_WIDTH = 100
LEAKY_SLOPE = 0.01
LOG_CLAMP = 1e-12

DEFAULT_LR = 0.001
DEFAULT_MOMENTUM = 0.7
DEFAULT_C_L2 = 1e-4


def param_shapes(n):
    """Ordered name -> shape map for all trainable tensors on an n x n board."""
    if n < 2 or n % 2 != 0:
        raise InvalidConfiguration(
            f"board size must be an even integer >= 2 for 2x2 pooling, got {n}"
        )
    flat = FILTERS * (n // 2) ** 2
    return {
        "conv1_w": (FILTERS, FEATURE_PLANES, KERNEL, KERNEL),
        "conv1_b": (FILTERS,),
        "conv2_w": (FILTERS, FILTERS, KERNEL, KERNEL),
        "conv2_b": (FILTERS,),
        "fc_p1_w": (FC1_WIDTH, flat),
        "fc_p1_b": (FC1_WIDTH,),
        "fc_p2_w": (FC2_WIDTH, FC1_WIDTH),
        "fc_p2_b": (FC2_WIDTH,),
        "fc_p3_w": (4, FC2_WIDTH),
        "fc_p3_b": (4,),
        "fc_v1_w": (FC1_WIDTH, flat),
        "fc_v1_b": (FC1_WIDTH,),
        "fc_v2_w": (FC2_WIDTH, FC1_WIDTH),
        "fc_v2_b": (FC2_WIDTH,),
        "fc_v3_w": (1, FC2_WIDTH),
        "fc_v3_b": (1,),
    }


@dataclass
class NetworkParams:
    """All trainable tensors plus same-shaped momentum buffers."""

    n: int
    tensors: dict
    momentum: dict

    @property
    def param_count(self):
        return sum(int(v.size) for v in self.tensors.values())

    def copy(self):
        return NetworkParams(
            n=self.n,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            momentum={k: v.copy() for k, v in self.momentum.items()},
        )

    def astype(self, dtype):
        return NetworkParams(
            n=self.n,
            tensors={k: v.astype(dtype) for k, v in self.tensors.items()},
            momentum={k: v.astype(dtype) for k, v in self.momentum.items()},
        )


@dataclass
class NetOutput:
    """Single-state network output."""

    logits: np.ndarray
    policy: np.ndarray
    value: float


def init_params(seed, n=10):
    """Fresh parameters: fan-in-scaled uniform weights, zero biases.

    Weights are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) in a fixed
    tensor order so a seed fully determines the result. Biases and
    momentum buffers start at zero.
    """
    shapes = param_shapes(n)
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in shapes.items():
        if name.endswith("_b"):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / math.sqrt(fan_in)
            tensors[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
    momentum = {k: np.zeros_like(v) for k, v in tensors.items()}
    return NetworkParams(n=n, tensors=tensors, momentum=momentum)


def _leaky(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def _leaky_grad(pre):
    return np.where(pre > 0, 1.0, LEAKY_SLOPE)


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _im2col(x):
    """(B, C, h, w) -> (B, h*w, C*9) patch matrix for a 3x3 kernel, pad 1."""
    b, c, h, w = x.shape
    padded = np.zeros((b, c, h + 2, w + 2), dtype=x.dtype)
    padded[:, :, 1 : h + 1, 1 : w + 1] = x
    win = np.lib.stride_tricks.sliding_window_view(padded, (KERNEL, KERNEL), axis=(2, 3))
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        b, h * w, c * KERNEL * KERNEL
    )


def _col2im(dcols, b, c, h, w):
    """Scatter-add the adjoint of _im2col back to input shape (B, C, h, w)."""
    d = dcols.reshape(b, h, w, c, KERNEL, KERNEL)
    dpad = np.zeros((b, c, h + 2, w + 2), dtype=dcols.dtype)
    for ki in range(KERNEL):
        for kj in range(KERNEL):
            dpad[:, :, ki : ki + h, kj : kj + w] += d[:, :, :, :, ki, kj].transpose(
                0, 3, 1, 2
            )
    return dpad[:, :, 1 : h + 1, 1 : w + 1]


def _conv(x, w, b):
    """3x3 same-padding convolution. Returns pre-activation and the patch matrix."""
    bsz, c, h, wd = x.shape
    f = w.shape[0]
    cols = _im2col(x)
    pre = cols @ w.reshape(f, -1).T + b
    return pre.transpose(0, 2, 1).reshape(bsz, f, h, wd), cols


def _conv_backward(dpre, cols, w, x_shape, need_dx):
    bsz, c, h, wd = x_shape
    f = w.shape[0]
    d2 = np.ascontiguousarray(dpre.reshape(bsz, f, h * wd).transpose(0, 2, 1))
    flatd = d2.reshape(bsz * h * wd, f)
    flatc = cols.reshape(bsz * h * wd, -1)
    dw = (flatd.T @ flatc).reshape(w.shape)
    db = flatd.sum(axis=0)
    dx = None
    if need_dx:
        dcols = d2 @ w.reshape(f, -1)
        dx = _col2im(dcols, bsz, c, h, wd)
    return dw, db, dx


def _maxpool(x):
    """2x2 stride-2 max pool; ties route to the earliest cell in the window."""
    b, f, h, w = x.shape
    t = np.ascontiguousarray(
        x.reshape(b, f, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    ).reshape(b, f, h // 2, w // 2, 4)
    idx = t.argmax(axis=-1)
    out = np.take_along_axis(t, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _maxpool_backward(dout, idx, h, w):
    b, f, h2, w2 = dout.shape
    dt = np.zeros((b, f, h2, w2, 4), dtype=dout.dtype)
    np.put_along_axis(dt, idx[..., None], dout[..., None], axis=-1)
    return np.ascontiguousarray(
        dt.reshape(b, f, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    ).reshape(b, f, h, w)


def _fc_backward(dout, x, w):
    return dout.T @ x, dout.sum(axis=0), dout @ w


def _forward_batch(params, feats):
    """Float64 batch forward. Returns (logits (B,4), values (B,), cache)."""
    x = np.asarray(feats, dtype=np.float64)
    n = params.n
    if x.ndim != 4 or x.shape[1:] != (FEATURE_PLANES, n, n):
        raise InvalidConfiguration(
            f"expected features of shape (B, {FEATURE_PLANES}, {n}, {n}), got {x.shape}"
        )
    t = {k: v.astype(np.float64, copy=False) for k, v in params.tensors.items()}

    pre1, cols1 = _conv(x, t["conv1_w"], t["conv1_b"])
    act1 = _leaky(pre1)
    pre2, cols2 = _conv(act1, t["conv2_w"], t["conv2_b"])
    act2 = _leaky(pre2)
    pooled, pool_idx = _maxpool(act2)
    flat = pooled.reshape(x.shape[0], -1)

    p1 = flat @ t["fc_p1_w"].T + t["fc_p1_b"]
    a1 = _leaky(p1)
    p2 = a1 @ t["fc_p2_w"].T + t["fc_p2_b"]
    a2 = _leaky(p2)
    logits = a2 @ t["fc_p3_w"].T + t["fc_p3_b"]

    v1 = flat @ t["fc_v1_w"].T + t["fc_v1_b"]
    b1 = _leaky(v1)
    v2 = b1 @ t["fc_v2_w"].T + t["fc_v2_b"]
    b2 = _leaky(v2)
    values = (b2 @ t["fc_v3_w"].T + t["fc_v3_b"])[:, 0]

    cache = {
        "t": t,
        "x_shape": x.shape,
        "cols1": cols1,
        "pre1": pre1,
        "cols2": cols2,
        "pre2": pre2,
        "act2": act2,
        "pool_idx": pool_idx,
        "pooled": pooled,
        "flat": flat,
        "p1": p1,
        "a1": a1,
        "p2": p2,
        "a2": a2,
        "v1": v1,
        "b1": b1,
        "v2": v2,
        "b2": b2,
    }
    return logits, values, cache


def forward(params, features):
    """Evaluate one state's feature planes. Pure; float64 internally."""
    feats = np.asarray(features)
    if feats.shape != (FEATURE_PLANES, params.n, params.n):
        raise InvalidConfiguration(
            f"expected features of shape ({FEATURE_PLANES}, {params.n}, {params.n}), "
            f"got {feats.shape}"
        )
    logits, values, _ = _forward_batch(params, feats[None])
    return NetOutput(
        logits=logits[0], policy=_softmax(logits)[0], value=float(values[0])
    )


def activation_shapes(params, features):
    """Observed shape chain input -> conv1 -> conv2 -> pool -> flatten -> heads."""
    feats = np.asarray(features)
    logits, values, cache = _forward_batch(params, feats[None])
    return [
        tuple(feats.shape),
        tuple(cache["pre1"].shape[1:]),
        tuple(cache["pre2"].shape[1:]),
        tuple(cache["pooled"].shape[1:]),
        tuple(cache["flat"].shape[1:]),
        (int(logits.shape[1]), int(values.size)),
    ]


def _l2_term(params):
    return sum(float(np.sum(v.astype(np.float64) ** 2)) for v in params.tensors.values())


def _cross_entropy(pis, probs):
    """Batch -sum(pi * log p) with the log argument clamped at LOG_CLAMP."""
    clamped = int(np.count_nonzero((probs < LOG_CLAMP) & (pis > 0)))
    if clamped:
        logger.warning(
            "clamped %d policy probabilities below %g in the loss", clamped, LOG_CLAMP
        )
    return -np.sum(pis * np.log(np.maximum(probs, LOG_CLAMP)), axis=-1)


def loss(output, target_pi, target_z, params=None, c_l2=0.0):
    """Single-example loss (v - z)^2 - pi . log p + c_l2 * sum(theta^2)."""
    pi = np.asarray(target_pi, dtype=np.float64)
    p = np.asarray(output.policy, dtype=np.float64)
    total = (output.value - float(target_z)) ** 2 + float(_cross_entropy(pi, p))
    if params is not None and c_l2:
        total += c_l2 * _l2_term(params)
    return total


def batch_loss(params, features, pis, zs, c_l2=0.0):
    """Mean loss over a batch, including the L2 penalty once."""
    logits, values, _ = _forward_batch(params, features)
    pis64 = np.asarray(pis, dtype=np.float64)
    zs64 = np.asarray(zs, dtype=np.float64)
    probs = _softmax(logits)
    per = (values - zs64) ** 2 + _cross_entropy(pis64, probs)
    total = float(per.mean())
    if c_l2:
        total += c_l2 * _l2_term(params)
    return total


def backward(params, features, pis, zs, c_l2=0.0):
    """Analytic gradients of the batch-mean loss. Returns (grads, loss)."""
    logits, values, cache = _forward_batch(params, features)
    bsz = logits.shape[0]
    pis64 = np.asarray(pis, dtype=np.float64)
    zs64 = np.asarray(zs, dtype=np.float64)
    t = cache["t"]
    n = params.n

    probs = _softmax(logits)
    per = (values - zs64) ** 2 + _cross_entropy(pis64, probs)
    mean_loss = float(per.mean())
    if c_l2:
        mean_loss += c_l2 * _l2_term(params)

    dlogits = (probs - pis64) / bsz
    dvalues = (2.0 * (values - zs64) / bsz)[:, None]

    grads = {}
    dw, db, da2 = _fc_backward(dlogits, cache["a2"], t["fc_p3_w"])
    grads["fc_p3_w"], grads["fc_p3_b"] = dw, db
    dp2 = da2 * _leaky_grad(cache["p2"])
    dw, db, da1 = _fc_backward(dp2, cache["a1"], t["fc_p2_w"])
    grads["fc_p2_w"], grads["fc_p2_b"] = dw, db
    dp1 = da1 * _leaky_grad(cache["p1"])
    dw, db, dflat_p = _fc_backward(dp1, cache["flat"], t["fc_p1_w"])
    grads["fc_p1_w"], grads["fc_p1_b"] = dw, db

    dw, db, db2v = _fc_backward(dvalues, cache["b2"], t["fc_v3_w"])
    grads["fc_v3_w"], grads["fc_v3_b"] = dw, db
    dv2 = db2v * _leaky_grad(cache["v2"])
    dw, db, db1v = _fc_backward(dv2, cache["b1"], t["fc_v2_w"])
    grads["fc_v2_w"], grads["fc_v2_b"] = dw, db
    dv1 = db1v * _leaky_grad(cache["v1"])
    dw, db, dflat_v = _fc_backward(dv1, cache["flat"], t["fc_v1_w"])
    grads["fc_v1_w"], grads["fc_v1_b"] = dw, db

    dflat = dflat_p + dflat_v
    dpool = dflat.reshape(bsz, FILTERS, n // 2, n // 2)
    dact2 = _maxpool_backward(dpool, cache["pool_idx"], n, n)
    dpre2 = dact2 * _leaky_grad(cache["pre2"])
    dw, db, dact1 = _conv_backward(
        dpre2, cache["cols2"], t["conv2_w"], (bsz, FILTERS, n, n), need_dx=True
    )
    grads["conv2_w"], grads["conv2_b"] = dw, db
    dpre1 = dact1 * _leaky_grad(cache["pre1"])
    dw, db, _ = _conv_backward(
        dpre1, cache["cols1"], t["conv1_w"], cache["x_shape"], need_dx=False
    )
    grads["conv1_w"], grads["conv1_b"] = dw, db

    if c_l2:
        for name, tensor in t.items():
            grads[name] = grads[name] + 2.0 * c_l2 * tensor
    return grads, mean_loss


def sgd_update(params, grads, lr=DEFAULT_LR, momentum=DEFAULT_MOMENTUM):
    """Classical momentum update: buf <- m*buf + g; theta <- theta - lr*buf.

    Mutates params in place and returns it. Any non-finite gradient aborts
    before anything is touched.
    """
    for name in params.tensors:
        if not np.all(np.isfinite(grads[name])):
            raise NumericError(f"non-finite gradient for tensor {name!r}")
    for name, tensor in params.tensors.items():
        buf = params.momentum[name]
        buf *= momentum
        buf += grads[name].astype(buf.dtype, copy=False)
        tensor -= (lr * buf).astype(tensor.dtype, copy=False)
    return params


def make_evaluator(params):
    """Leaf evaluator for tree search: state -> (4 priors, value).

    Takes an immutable float64 snapshot of the parameters, so later
    in-place training updates do not leak into an ongoing search.
    """
    snapshot = params.astype(np.float64)

    def evaluate(state):
        out = forward(snapshot, encode_features(state, expected_n=snapshot.n))
        return out.policy, out.value

    return evaluate


def gradient_check(params, features, pis, zs, c_l2=DEFAULT_C_L2, samples=200, h=1e-4, rng=None):
    """Max relative error of analytic vs central-difference gradients.

    Runs entirely in float64 on `samples` uniformly chosen parameter
    coordinates. Coordinates where both estimates are below 1e-10 are
    treated as agreeing.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    p64 = params.astype(np.float64)
    feats = np.asarray(features, dtype=np.float64)
    grads, _ = backward(p64, feats, pis, zs, c_l2)

    names = list(p64.tensors)
    sizes = np.array([p64.tensors[k].size for k in names])
    cum = np.cumsum(sizes)
    total = int(cum[-1])
    picks = rng.choice(total, size=min(samples, total), replace=False)

    worst = 0.0
    for flat_index in picks:
        k = int(np.searchsorted(cum, flat_index, side="right"))
        offset = int(flat_index - (cum[k] - sizes[k]))
        tensor = p64.tensors[names[k]].reshape(-1)
        orig = tensor[offset]
        tensor[offset] = orig + h
        lo_plus = batch_loss(p64, feats, pis, zs, c_l2)
        tensor[offset] = orig - h
        lo_minus = batch_loss(p64, feats, pis, zs, c_l2)
        tensor[offset] = orig
        numeric = (lo_plus - lo_minus) / (2.0 * h)
        analytic = float(grads[names[k]].reshape(-1)[offset])
        denom = max(abs(numeric), abs(analytic))
        if denom < 1e-10:
            continue
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst
