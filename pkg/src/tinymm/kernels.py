"""Floating-point reference kernels for every supported layer type.

All spatial kernels take channels-last inputs (H, W, C). Accumulation runs
in float64 and results are stored as float32. Kernels are pure functions of
immutable tensors, so independent layer invocations may run concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    InputTooSmallError,
    InvalidShapeError,
    KernelTooLargeError,
    RankMismatchError,
    ShapeMismatchError,
)
from .tensor import Tensor

VALID = "valid"
SAME = "same"


@dataclass(frozen=True)
class ConvSpec:
    """Convolution layer geometry.

    kind "traditional" is a full M->N convolution; "depthwise_separable"
    is a per-channel spatial stage followed by a 1x1 channel-mixing stage.
    """

    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    padding: str = VALID
    kind: str = "traditional"

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise InvalidShapeError("channel counts must be >= 1")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise InvalidShapeError("kernel_size must be odd and >= 1")
        if self.stride < 1:
            raise InvalidShapeError("stride must be >= 1")
        if self.padding not in (VALID, SAME):
            raise InvalidShapeError(f"unknown padding {self.padding!r}")
        if self.kind not in ("traditional", "depthwise_separable"):
            raise InvalidShapeError(f"unknown conv kind {self.kind!r}")


@dataclass(frozen=True)
class DenseSpec:
    in_features: int
    out_features: int

    def __post_init__(self):
        if self.in_features < 1 or self.out_features < 1:
            raise InvalidShapeError("dense feature counts must be >= 1")


@dataclass(frozen=True)
class PoolSpec:
    """Square max-pooling window; stride equals the window size."""

    pool_size: int

    def __post_init__(self):
        if self.pool_size < 1:
            raise InvalidShapeError("pool_size must be >= 1")


def conv_output_dim(d_f: int, d_k: int, stride: int, padding: str) -> int:
    """Output spatial extent of a convolution along one axis.

    valid: (d_f - d_k) // stride + 1; same keeps d_f for stride 1.
    """
    if padding == SAME:
        if stride != 1:
            raise InvalidShapeError("same padding is only supported for stride 1")
        return d_f
    if d_f < d_k:
        raise KernelTooLargeError(f"kernel {d_k} exceeds input extent {d_f}")
    return (d_f - d_k) // stride + 1


def _pad_same(arr: np.ndarray, d_k: int, fill: float = 0.0) -> np.ndarray:
    lo = (d_k - 1) // 2
    hi = d_k - 1 - lo
    return np.pad(
        arr, ((lo, hi), (lo, hi), (0, 0)), mode="constant", constant_values=fill
    )


def _check_rank3(t: Tensor, who: str) -> None:
    if t.rank != 3:
        raise RankMismatchError(f"{who} expects a rank-3 (H, W, C) input, got {t.shape}")


def _windows(arr: np.ndarray, d_k: int, stride: int) -> np.ndarray:
    # (H', W', d_k, d_k, C) view of every kernel placement
    win = sliding_window_view(arr, (d_k, d_k), axis=(0, 1))  # (H', W', C, dk, dk)
    win = win[::stride, ::stride]
    return np.moveaxis(win, 2, -1)


def conv2d_fp(inp: Tensor, weights: Tensor, bias: Tensor, spec: ConvSpec) -> Tensor:
    """Standard cross-correlation: (H, W, M) x (Dk, Dk, M, N) -> (H', W', N)."""
    _check_rank3(inp, "conv2d_fp")
    d_k, m, n = spec.kernel_size, spec.in_channels, spec.out_channels
    if weights.shape != (d_k, d_k, m, n):
        raise ShapeMismatchError(
            f"weights {weights.shape} != expected {(d_k, d_k, m, n)}"
        )
    if bias.shape != (n,):
        raise ShapeMismatchError(f"bias {bias.shape} != ({n},)")
    if inp.shape[2] != m:
        raise ShapeMismatchError(f"input has {inp.shape[2]} channels, spec says {m}")

    x = inp.data.astype(np.float64)
    if spec.padding == SAME:
        if spec.stride != 1:
            raise InvalidShapeError("same padding is only supported for stride 1")
        x = _pad_same(x, d_k)
    elif inp.shape[0] < d_k or inp.shape[1] < d_k:
        raise KernelTooLargeError(
            f"kernel {d_k} exceeds input extent {inp.shape[:2]}"
        )
    win = _windows(x, d_k, spec.stride)  # (H', W', Dk, Dk, M)
    out = np.einsum("xyijm,ijmn->xyn", win, weights.data.astype(np.float64))
    out += bias.data.astype(np.float64)
    return Tensor(out.astype(np.float32))


def depthwise_conv2d_fp(inp: Tensor, dw_weights: Tensor, spec: ConvSpec) -> Tensor:
    """Per-channel spatial stage of a separable convolution; no bias."""
    _check_rank3(inp, "depthwise_conv2d_fp")
    d_k, m = spec.kernel_size, spec.in_channels
    if dw_weights.shape != (d_k, d_k, m):
        raise ShapeMismatchError(
            f"depthwise weights {dw_weights.shape} != expected {(d_k, d_k, m)}"
        )
    if inp.shape[2] != m:
        raise ShapeMismatchError(f"input has {inp.shape[2]} channels, spec says {m}")

    x = inp.data.astype(np.float64)
    if spec.padding == SAME:
        if spec.stride != 1:
            raise InvalidShapeError("same padding is only supported for stride 1")
        x = _pad_same(x, d_k)
    elif inp.shape[0] < d_k or inp.shape[1] < d_k:
        raise KernelTooLargeError(
            f"kernel {d_k} exceeds input extent {inp.shape[:2]}"
        )
    win = _windows(x, d_k, spec.stride)  # (H', W', Dk, Dk, M)
    out = np.einsum("xyijm,ijm->xym", win, dw_weights.data.astype(np.float64))
    return Tensor(out.astype(np.float32))


def pointwise_conv2d_fp(inp: Tensor, pw_weights: Tensor, bias: Tensor) -> Tensor:
    """1x1 channel-mixing stage: (H, W, M) x (1, 1, M, N) -> (H, W, N)."""
    _check_rank3(inp, "pointwise_conv2d_fp")
    if pw_weights.rank != 4 or pw_weights.shape[:2] != (1, 1):
        raise ShapeMismatchError(f"pointwise weights must be (1, 1, M, N), got {pw_weights.shape}")
    m, n = pw_weights.shape[2], pw_weights.shape[3]
    if inp.shape[2] != m:
        raise ShapeMismatchError(f"input has {inp.shape[2]} channels, weights expect {m}")
    if bias.shape != (n,):
        raise ShapeMismatchError(f"bias {bias.shape} != ({n},)")
    out = np.einsum(
        "xym,mn->xyn",
        inp.data.astype(np.float64),
        pw_weights.data.reshape(m, n).astype(np.float64),
    )
    out += bias.data.astype(np.float64)
    return Tensor(out.astype(np.float32))


def depthwise_separable_conv2d_fp(
    inp: Tensor, dw_weights: Tensor, pw_weights: Tensor, bias: Tensor, spec: ConvSpec
) -> Tensor:
    """Depthwise stage then pointwise stage; bias added after pointwise."""
    mid = depthwise_conv2d_fp(inp, dw_weights, spec)
    return pointwise_conv2d_fp(mid, pw_weights, bias)


def maxpool2d(inp: Tensor, spec: PoolSpec) -> Tensor:
    """Per-channel max over p x p windows; trailing remainder dropped."""
    _check_rank3(inp, "maxpool2d")
    p = spec.pool_size
    h, w, c = inp.shape
    if h < p or w < p:
        raise InputTooSmallError(f"input {inp.shape[:2]} smaller than pool {p}")
    hp, wp = h // p, w // p
    x = inp.data[: hp * p, : wp * p, :]
    out = x.reshape(hp, p, wp, p, c).max(axis=(1, 3))
    return Tensor(out)


def dense_fp(inp: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Fully connected layer: out[j] = sum_k in[k] * w[k, j] + b[j]."""
    if inp.rank != 1:
        raise RankMismatchError(f"dense_fp expects a rank-1 input, got {inp.shape}")
    if weights.rank != 2 or weights.shape[0] != inp.shape[0]:
        raise ShapeMismatchError(
            f"weights {weights.shape} incompatible with input {inp.shape}"
        )
    if bias.shape != (weights.shape[1],):
        raise ShapeMismatchError(f"bias {bias.shape} != ({weights.shape[1]},)")
    out = np.einsum(
        "k,kl->l", inp.data.astype(np.float64), weights.data.astype(np.float64)
    )
    out += bias.data.astype(np.float64)
    return Tensor(out.astype(np.float32))


def relu(inp: Tensor) -> Tensor:
    return Tensor(np.maximum(inp.data, 0.0))


def softmax(inp: Tensor) -> Tensor:
    """Stable softmax over a rank-1 logit vector."""
    if inp.rank != 1:
        raise RankMismatchError(f"softmax expects a rank-1 input, got {inp.shape}")
    z = inp.data.astype(np.float64)
    z = z - z.max()
    e = np.exp(z)
    return Tensor((e / e.sum()).astype(np.float32))


def flatten(inp: Tensor) -> Tensor:
    return Tensor(inp.data.reshape(-1))
