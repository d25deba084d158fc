"""Golden-model evaluation of every catalog kernel.

Tensors are float64 numpy arrays.  Results never depend on implementation
knobs such as loop order, unroll factors or chain parenthesization: those
only change the emitted hardware, not the mathematical value.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from ..errors import BoundsError, GroupError, OracleError, ShapeError
from .specs import (ActSpec, AttnSpec, ConvSpec, DropoutSpec, EltwiseSpec, LinearSpec,
                    MoveSpec, NormSpec, OperatorSpec, PoolSpec, RopeSpec)

GELU_C = math.sqrt(2.0 / math.pi)

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_MUL2 = np.uint64(0x94D049BB133111EB)


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _expect(t: np.ndarray, shape, name: str) -> None:
    if tuple(t.shape) != tuple(shape):
        raise ShapeError(f"{name}: expected shape {tuple(shape)}, got {tuple(t.shape)}")


def _finite(t: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(t)):
        raise OracleError("non-finite value produced")
    return t


def eval_linear(spec: LinearSpec, operands: Sequence) -> np.ndarray:
    ops = [as_tensor(o) for o in operands]
    expected = spec.input_shapes()
    if len(ops) != len(expected):
        raise ShapeError(f"linear/{spec.variant} takes {len(expected)} operands, got {len(ops)}")
    for i, (t, s) in enumerate(zip(ops, expected)):
        _expect(t, s, f"operand {i}")
    if spec.variant == "chain_xABy":
        x, A, B, y = ops
        # canonical evaluation; assoc_order is a hardware choice only
        out = ((x @ A) @ B) @ y
    elif spec.variant == "dot":
        out = np.array([np.dot(ops[0], ops[1])])
    else:
        out = ops[0] @ ops[1]
    if spec.bias and spec.variant != "chain_xABy":
        out = out + ops[2]
    return _finite(out)


def eval_conv(spec: ConvSpec, x, weights, bias=None) -> np.ndarray:
    if spec.groups < 1 or spec.in_ch % spec.groups or spec.out_ch % spec.groups:
        raise GroupError(f"channels not divisible by groups ({spec.in_ch}, {spec.out_ch}, {spec.groups})")
    x, weights = as_tensor(x), as_tensor(weights)
    shapes = spec.input_shapes()
    _expect(x, shapes[0], "input")
    _expect(weights, shapes[1], "weights")
    if spec.out_h < 1 or spec.out_w < 1:
        raise ShapeError("kernel larger than padded input")
    p, s, K = spec.padding, spec.stride, spec.kernel
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    oh, ow = spec.out_h, spec.out_w
    icg, ocg = spec.in_ch // spec.groups, spec.out_ch // spec.groups
    out = np.zeros((spec.out_ch, oh, ow))
    for g in range(spec.groups):
        xg = xp[g * icg:(g + 1) * icg]
        wg = weights[g * ocg:(g + 1) * ocg]
        for kh in range(K):
            for kw in range(K):
                patch = xg[:, kh:kh + s * (oh - 1) + 1:s, kw:kw + s * (ow - 1) + 1:s]
                out[g * ocg:(g + 1) * ocg] += np.einsum("oc,chw->ohw", wg[:, :, kh, kw], patch)
    if spec.bias:
        if bias is None:
            raise ShapeError("conv spec has bias but no bias tensor was given")
        bias = as_tensor(bias)
        _expect(bias, (spec.out_ch,), "bias")
        out += bias[:, None, None]
    return _finite(out)


def eval_norm(spec: NormSpec, x, gamma=None, beta=None, stats=None) -> np.ndarray:
    x = as_tensor(x)
    _expect(x, spec.shape, "x")
    eps = spec.epsilon
    if spec.norm == "batchnorm":
        if stats is None:
            raise ShapeError("batchnorm needs running (mean, var)")
        mean, var = (as_tensor(s) for s in stats)
        c = (spec.shape[0],)
        _expect(mean, c, "mean")
        _expect(var, c, "var")
        bshape = (-1,) + (1,) * (x.ndim - 1)
        y = (x - mean.reshape(bshape)) / np.sqrt(var.reshape(bshape) + eps)
        if gamma is not None:
            y = y * as_tensor(gamma).reshape(bshape)
        if beta is not None:
            y = y + as_tensor(beta).reshape(bshape)
    elif spec.norm == "layernorm":
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        y = (x - mu) / np.sqrt(var + eps)
        if gamma is not None:
            y = y * as_tensor(gamma)
        if beta is not None:
            y = y + as_tensor(beta)
    else:
        ms = (x * x).mean(axis=-1, keepdims=True)
        y = x / np.sqrt(ms + eps)
        if gamma is not None:
            y = y * as_tensor(gamma)
    return _finite(y)


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def eval_activation(kind: str, x) -> np.ndarray:
    x = as_tensor(x)
    if kind == "relu":
        y = np.maximum(x, 0.0)
    elif kind == "relu6":
        y = np.minimum(np.maximum(x, 0.0), 6.0)
    elif kind == "sigmoid":
        y = _sigmoid(x)
    elif kind == "tanh":
        y = np.tanh(x)
    elif kind == "elu":
        y = np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    elif kind == "silu":
        y = x * _sigmoid(x)
    elif kind == "gelu":
        y = 0.5 * x * (1.0 + np.tanh(GELU_C * (x + 0.044715 * x ** 3)))
    elif kind == "hard_sigmoid":
        y = np.clip(x / 6.0 + 0.5, 0.0, 1.0)
    elif kind == "hard_swish":
        y = x * np.clip(x / 6.0 + 0.5, 0.0, 1.0)
    elif kind == "softmax":
        y = softmax(x)
    elif kind == "exp":
        with np.errstate(over="ignore"):  # overflow surfaces as OracleError below
            y = np.exp(x)
    else:
        raise ValueError(f"unknown activation {kind!r}")
    return _finite(y)


def rope_angles(positions: Sequence[int], head_dim: int, base: float = 10000.0) -> np.ndarray:
    """Angle table of shape (len(positions), head_dim // 2)."""
    i = np.arange(head_dim // 2, dtype=np.float64)
    theta = base ** (-2.0 * i / head_dim)
    return np.asarray(positions, dtype=np.float64)[:, None] * theta[None, :]


def eval_rope(x, positions: Sequence[int], head_dim: int, base: float = 10000.0) -> np.ndarray:
    """Rotate consecutive pairs of every head slice of each row by position."""
    x = as_tensor(x)
    if head_dim % 2:
        raise ShapeError(f"rope needs an even head_dim (got {head_dim})")
    if x.ndim != 2 or x.shape[1] % head_dim or x.shape[0] != len(positions):
        raise ShapeError(f"rope input {x.shape} incompatible with head_dim {head_dim} "
                         f"and {len(positions)} positions")
    ang = rope_angles(positions, head_dim, base)
    cos, sin = np.cos(ang), np.sin(ang)
    heads = x.reshape(x.shape[0], -1, head_dim // 2, 2)
    a, b = heads[..., 0], heads[..., 1]
    out = np.empty_like(heads)
    out[..., 0] = a * cos[:, None, :] - b * sin[:, None, :]
    out[..., 1] = a * sin[:, None, :] + b * cos[:, None, :]
    return out.reshape(x.shape)


def eval_attention(spec: AttnSpec, q, k, v, wq, wk, wv, wo) -> np.ndarray:
    if spec.hidden % spec.heads or spec.heads % spec.kv_groups:
        raise GroupError(f"hidden {spec.hidden}, heads {spec.heads}, kv_groups {spec.kv_groups} "
                         "do not divide evenly")
    tensors = [as_tensor(t) for t in (q, k, v, wq, wk, wv, wo)]
    for (name, shape), t in zip(spec.operands()[0], tensors):
        _expect(t, shape, name)
    q, k, v, wq, wk, wv, wo = tensors
    L, hd = spec.seq_len, spec.head_dim
    per_kv = spec.heads // spec.kv_groups
    Q, K, V = q @ wq, k @ wk, v @ wv
    pos = list(range(L))
    if spec.with_rope:
        Q = eval_rope(Q, pos, hd, spec.rope_base)
        K = eval_rope(K, pos, hd, spec.rope_base)
    i, j = np.arange(L)[:, None], np.arange(L)[None, :]
    allowed = j <= i
    if spec.window is not None:
        allowed &= j >= i - spec.window + 1
    ctx = np.empty((L, spec.hidden))
    for h in range(spec.heads):
        g = h // per_kv
        Qh = Q[:, h * hd:(h + 1) * hd]
        Kh = K[:, g * hd:(g + 1) * hd]
        Vh = V[:, g * hd:(g + 1) * hd]
        scores = np.where(allowed, Qh @ Kh.T / math.sqrt(hd), -np.inf)
        ctx[:, h * hd:(h + 1) * hd] = softmax(scores) @ Vh
    return _finite(ctx @ wo)


def splitmix_uniform(seed: int, count: int) -> np.ndarray:
    """Uniform [0, 1) draws keyed by (seed, flat index), SplitMix64 finalizer."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed % 2 ** 64) + idx * _SM_GAMMA
        z = (z ^ (z >> np.uint64(30))) * _SM_MUL1
        z = (z ^ (z >> np.uint64(27))) * _SM_MUL2
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def dropout_mask(shape, p: float, seed: int) -> np.ndarray:
    u = splitmix_uniform(seed, math.prod(shape))
    return (u >= p).reshape(shape)


def eval_dropout(x, p: float, seed: int) -> np.ndarray:
    x = as_tensor(x)
    if p == 0.0:
        return x.copy()
    keep = dropout_mask(x.shape, p, seed)
    return np.where(keep, x * (1.0 / (1.0 - p)), 0.0)


def eval_pool(spec: PoolSpec, x) -> np.ndarray:
    x = as_tensor(x)
    _expect(x, spec.shape, "input")
    c, oh, ow = spec.out_shape
    if oh < 1 or ow < 1:
        raise ShapeError("pool window larger than input")
    K, s = spec.kernel, spec.stride
    windows = np.stack([
        x[:, kh:kh + s * (oh - 1) + 1:s, kw:kw + s * (ow - 1) + 1:s]
        for kh in range(K) for kw in range(K)
    ])
    return windows.max(axis=0) if spec.pool == "max" else windows.mean(axis=0)


def eval_elementwise(kind: str, a, b) -> np.ndarray:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"elementwise {kind}: shapes {a.shape} and {b.shape} differ")
    return _finite(a + b if kind == "add" else a * b)


def _region(offset, shape, full):
    if len(offset) != len(full) or len(shape) != len(full):
        raise BoundsError("region rank differs from tensor rank")
    for o, s, f in zip(offset, shape, full):
        if o < 0 or o + s > f:
            raise BoundsError(f"region offset {tuple(offset)} shape {tuple(shape)} "
                              f"outside tensor {tuple(full)}")
    return tuple(slice(o, o + s) for o, s in zip(offset, shape))


def eval_move(direction: str, src, offset, shape, dst: Optional[np.ndarray] = None,
              full=None) -> np.ndarray:
    """Load a region out of ``src`` or store ``src`` into a region of ``dst``.

    A store into an undefined destination starts from zeros of shape ``full``.
    """
    src = as_tensor(src)
    if direction == "load":
        return src[_region(offset, shape, src.shape)].copy()
    _expect(src, shape, "store source")
    base = np.zeros(full) if dst is None else as_tensor(dst).copy()
    base[_region(offset, shape, base.shape)] = src
    return base


def evaluate(spec: OperatorSpec, inputs: Sequence[np.ndarray],
             previous: Sequence[Optional[np.ndarray]] = ()) -> list[np.ndarray]:
    """Run one catalog kernel on positional operands; returns its outputs.

    ``previous`` holds the current values of the output buffers, which only
    stores (read-modify-write) consult.
    """
    if isinstance(spec, LinearSpec):
        return [eval_linear(spec, inputs)]
    if isinstance(spec, ConvSpec):
        return [eval_conv(spec, inputs[0], inputs[1], inputs[2] if spec.bias else None)]
    if isinstance(spec, NormSpec):
        if spec.norm == "batchnorm":
            x, mean, var, *aff = inputs
            gamma, beta = aff if aff else (None, None)
            return [eval_norm(spec, x, gamma, beta, (mean, var))]
        x, *aff = inputs
        gamma = aff[0] if aff else None
        beta = aff[1] if len(aff) > 1 else None
        return [eval_norm(spec, x, gamma, beta)]
    if isinstance(spec, ActSpec):
        return [eval_activation(spec.act, inputs[0])]
    if isinstance(spec, AttnSpec):
        return [eval_attention(spec, *inputs)]
    if isinstance(spec, RopeSpec):
        return [eval_rope(inputs[0], range(spec.seq_len), spec.head_dim, spec.base)]
    if isinstance(spec, DropoutSpec):
        return [eval_dropout(inputs[0], spec.p, spec.seed)]
    if isinstance(spec, PoolSpec):
        return [eval_pool(spec, inputs[0])]
    if isinstance(spec, EltwiseSpec):
        return [eval_elementwise(spec.op, inputs[0], inputs[1])]
    if isinstance(spec, MoveSpec):
        prev = previous[0] if previous else None
        return [eval_move(spec.direction, inputs[0], spec.origin, spec.shape, prev, spec.full)]
    raise TypeError(f"no oracle for {type(spec).__name__}")
