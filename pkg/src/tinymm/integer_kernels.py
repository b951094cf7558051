"""Integer inference kernels.

Inputs and weights share one bit width per layer. Products of
(q_in - zp_in) with symmetric weights accumulate exactly in 32-bit
integers (layer geometry is checked up front so overflow cannot occur),
then each accumulator is requantized: multiplied by
(s_in * s_w / s_out) in double precision, rounded half-to-even, shifted
by the output zero point and clamped. Biases are 32-bit integers at
scale s_in * s_w, added before requantization.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    AccumulatorOverflowError,
    InputTooSmallError,
    InvalidShapeError,
    PrecisionMismatchError,
    RankMismatchError,
    ShapeMismatchError,
)
from .kernels import SAME, ConvSpec, PoolSpec
from .tensor import QuantParams, QuantTensor, Tensor

ACC_LIMIT = (1 << 31) - 1
BIAS_LIMIT = 1 << 30  # headroom so acc + bias stays inside int32


def check_accumulator(terms: int, bits: int) -> None:
    """Reject layer geometry whose worst-case accumulation leaves int32."""
    per_term = ((1 << bits) - 1) * (1 << (bits - 1))
    if terms * per_term + BIAS_LIMIT > ACC_LIMIT:
        raise AccumulatorOverflowError(
            f"{terms} products of {bits}-bit operands cannot be guaranteed "
            "to fit a 32-bit accumulator"
        )


def quantize_bias(bias: Tensor, input_scale: float, weight_scale: float) -> np.ndarray:
    """Bias as int32 at scale input_scale * weight_scale."""
    q = np.round(bias.data.astype(np.float64) / (input_scale * weight_scale))
    return np.clip(q, -BIAS_LIMIT, BIAS_LIMIT).astype(np.int64)


def _requantize_acc(
    acc: np.ndarray, in_scale: float, w_scale: float, out: QuantParams
) -> np.ndarray:
    multiplier = (in_scale * w_scale) / out.scale
    q = np.round(acc.astype(np.float64) * multiplier) + out.zero_point
    return np.clip(q, out.qmin, out.qmax).astype(np.int32)


def requantize_tensor(q: QuantTensor, new_params: QuantParams) -> QuantTensor:
    """Re-express a quantized tensor under different scale/zero-point/bits."""
    ratio = q.params.scale / new_params.scale
    vals = np.round((q.qdata.astype(np.float64) - q.params.zero_point) * ratio)
    vals = np.clip(vals + new_params.zero_point, new_params.qmin, new_params.qmax)
    return QuantTensor(vals.astype(np.int32), new_params)


def _check_bits(inp: QuantTensor, weights: QuantTensor) -> None:
    if inp.params.bits != weights.params.bits:
        raise PrecisionMismatchError(
            f"input is {inp.params.bits}-bit but weights are {weights.params.bits}-bit"
        )


def _int_windows(arr: np.ndarray, d_k: int, stride: int) -> np.ndarray:
    win = sliding_window_view(arr, (d_k, d_k), axis=(0, 1))
    return np.moveaxis(win[::stride, ::stride], 2, -1)


def _prepare_spatial(inp: QuantTensor, d_k: int, spec: ConvSpec) -> np.ndarray:
    if inp.rank != 3:
        raise RankMismatchError(f"expected rank-3 input, got {inp.shape}")
    x = inp.qdata.astype(np.int64) - inp.params.zero_point
    if spec.padding == SAME:
        if spec.stride != 1:
            raise InvalidShapeError("same padding is only supported for stride 1")
        lo = (d_k - 1) // 2
        hi = d_k - 1 - lo
        x = np.pad(x, ((lo, hi), (lo, hi), (0, 0)))  # zero = real 0 after offset
    elif inp.shape[0] < d_k or inp.shape[1] < d_k:
        raise ShapeMismatchError(f"kernel {d_k} exceeds input extent {inp.shape[:2]}")
    return x


def conv2d_int(
    inp: QuantTensor,
    weights: QuantTensor,
    bias: np.ndarray,
    out_params: QuantParams,
    spec: ConvSpec,
) -> QuantTensor:
    """Integer traditional convolution with fused bias and requantization."""
    _check_bits(inp, weights)
    d_k, m, n = spec.kernel_size, spec.in_channels, spec.out_channels
    if weights.shape != (d_k, d_k, m, n):
        raise ShapeMismatchError(f"weights {weights.shape} != {(d_k, d_k, m, n)}")
    if inp.shape[2] != m:
        raise ShapeMismatchError(f"input channels {inp.shape[2]} != {m}")
    check_accumulator(d_k * d_k * m, inp.params.bits)
    x = _prepare_spatial(inp, d_k, spec)
    win = _int_windows(x, d_k, spec.stride)
    acc = np.einsum("xyijm,ijmn->xyn", win, weights.qdata.astype(np.int64))
    acc += np.asarray(bias, dtype=np.int64)
    return QuantTensor(
        _requantize_acc(acc, inp.params.scale, weights.params.scale, out_params),
        out_params,
    )


def depthwise_conv2d_int(
    inp: QuantTensor,
    dw_weights: QuantTensor,
    mid_params: QuantParams,
    spec: ConvSpec,
) -> QuantTensor:
    """Integer per-channel stage; output requantized to mid_params."""
    _check_bits(inp, dw_weights)
    d_k, m = spec.kernel_size, spec.in_channels
    if dw_weights.shape != (d_k, d_k, m):
        raise ShapeMismatchError(f"depthwise weights {dw_weights.shape} != {(d_k, d_k, m)}")
    if inp.shape[2] != m:
        raise ShapeMismatchError(f"input channels {inp.shape[2]} != {m}")
    check_accumulator(d_k * d_k, inp.params.bits)
    x = _prepare_spatial(inp, d_k, spec)
    win = _int_windows(x, d_k, spec.stride)
    acc = np.einsum("xyijm,ijm->xym", win, dw_weights.qdata.astype(np.int64))
    return QuantTensor(
        _requantize_acc(acc, inp.params.scale, dw_weights.params.scale, mid_params),
        mid_params,
    )


def pointwise_conv2d_int(
    inp: QuantTensor,
    pw_weights: QuantTensor,
    bias: np.ndarray,
    out_params: QuantParams,
) -> QuantTensor:
    """Integer 1x1 channel mixing with fused bias and requantization."""
    _check_bits(inp, pw_weights)
    if inp.rank != 3:
        raise RankMismatchError(f"expected rank-3 input, got {inp.shape}")
    if pw_weights.rank != 4 or pw_weights.shape[:2] != (1, 1):
        raise ShapeMismatchError(f"pointwise weights must be (1, 1, M, N), got {pw_weights.shape}")
    m, n = pw_weights.shape[2], pw_weights.shape[3]
    if inp.shape[2] != m:
        raise ShapeMismatchError(f"input channels {inp.shape[2]} != {m}")
    check_accumulator(m, inp.params.bits)
    x = inp.qdata.astype(np.int64) - inp.params.zero_point
    acc = np.einsum("xym,mn->xyn", x, pw_weights.qdata.reshape(m, n).astype(np.int64))
    acc += np.asarray(bias, dtype=np.int64)
    return QuantTensor(
        _requantize_acc(acc, inp.params.scale, pw_weights.params.scale, out_params),
        out_params,
    )


def depthwise_separable_conv2d_int(
    inp: QuantTensor,
    dw_weights: QuantTensor,
    pw_weights: QuantTensor,
    bias: np.ndarray,
    mid_params: QuantParams,
    out_params: QuantParams,
    spec: ConvSpec,
) -> QuantTensor:
    """Two-stage integer separable convolution.

    The depthwise result is requantized to mid_params before the pointwise
    stage, which keeps both accumulations inside 32 bits. The bias is at
    scale mid.scale * pw.scale and is added after the pointwise products.
    """
    mid = depthwise_conv2d_int(inp, dw_weights, mid_params, spec)
    return pointwise_conv2d_int(mid, pw_weights, bias, out_params)


def dense_int(
    inp: QuantTensor,
    weights: QuantTensor,
    bias: np.ndarray,
    out_params: QuantParams,
) -> QuantTensor:
    """Integer fully connected layer."""
    _check_bits(inp, weights)
    if inp.rank != 1:
        raise RankMismatchError(f"dense_int expects a rank-1 input, got {inp.shape}")
    if weights.rank != 2 or weights.shape[0] != inp.shape[0]:
        raise ShapeMismatchError(f"weights {weights.shape} incompatible with {inp.shape}")
    check_accumulator(inp.shape[0], inp.params.bits)
    x = inp.qdata.astype(np.int64) - inp.params.zero_point
    acc = x @ weights.qdata.astype(np.int64)
    acc += np.asarray(bias, dtype=np.int64)
    return QuantTensor(
        _requantize_acc(acc, inp.params.scale, weights.params.scale, out_params),
        out_params,
    )


def relu_int(inp: QuantTensor) -> QuantTensor:
    """Clamp the payload at the zero point (the encoding of real 0)."""
    return QuantTensor(np.maximum(inp.qdata, inp.params.zero_point), inp.params)


def maxpool2d_int(inp: QuantTensor, spec: PoolSpec) -> QuantTensor:
    """Window max directly on the integer payload."""
    if inp.rank != 3:
        raise RankMismatchError(f"maxpool2d_int expects rank-3 input, got {inp.shape}")
    p = spec.pool_size
    h, w, c = inp.shape
    if h < p or w < p:
        raise InputTooSmallError(f"input {inp.shape[:2]} smaller than pool {p}")
    hp, wp = h // p, w // p
    x = inp.qdata[: hp * p, : wp * p, :]
    out = x.reshape(hp, p, wp, p, c).max(axis=(1, 3))
    return QuantTensor(out, inp.params)


def flatten_int(inp: QuantTensor) -> QuantTensor:
    return inp.reshape((int(np.prod(inp.shape)),))
