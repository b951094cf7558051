"""Post-training quantization: calibration, scale/zero-point fitting,
tensor quantization and per-layer sensitivity scores.

Two schemes are supported:

* symmetric_weights: zero_point = 0, scale = max|t| / (2^(b-1) - 1).
  Used for all weight tensors so integer kernels need no weight offset.
* affine_activations: scale and zero_point fitted to an observed
  [min, max] range. The range is widened to include 0 when needed, which
  keeps the zero point inside the representable window and makes real
  zero exactly representable (activations are padded and clamped at it).

Rounding is half-to-even everywhere so results are platform-stable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyTensorError,
    InvalidSensitivityError,
    MissingStatsError,
)
from .tensor import QuantParams, QuantTensor, Tensor

SYMMETRIC_WEIGHTS = "symmetric_weights"
AFFINE_ACTIVATIONS = "affine_activations"


@dataclass
class CalibrationStats:
    """Running min/max of one activation edge over a calibration pass."""

    min_val: float = float("inf")
    max_val: float = float("-inf")
    count: int = 0

    def update(self, values: np.ndarray) -> None:
        if values.size == 0:
            return
        self.min_val = min(self.min_val, float(values.min()))
        self.max_val = max(self.max_val, float(values.max()))
        self.count += 1

    @property
    def ready(self) -> bool:
        return self.count >= 1 and self.min_val <= self.max_val


def symmetric_params(max_abs: float, bits: int) -> QuantParams:
    qmax = (1 << (bits - 1)) - 1
    scale = max_abs / qmax if max_abs > 0 else 1.0
    # scales are float32 values so serialized parameters are lossless
    return QuantParams(scale=float(np.float32(scale)), zero_point=0, bits=bits)


def affine_params(stats: CalibrationStats, bits: int) -> QuantParams:
    """Fit scale/zero_point so the observed range maps onto the integer grid.

    The fitted range always contains 0; a constant-zero edge degrades to
    scale 1 with the zero point at the range floor.
    """
    if not stats.ready:
        raise MissingStatsError("calibration stats are empty")
    qmin = -(1 << (bits - 1))
    lo = min(stats.min_val, 0.0)
    hi = max(stats.max_val, 0.0)
    if hi == lo:  # all-zero edge
        return QuantParams(scale=1.0, zero_point=qmin, bits=bits)
    scale = float(np.float32((hi - lo) / ((1 << bits) - 1)))
    zero_point = int(qmin - round(lo / scale))
    return QuantParams(scale=scale, zero_point=zero_point, bits=bits)


def quantize_array(values: np.ndarray, params: QuantParams) -> np.ndarray:
    """Round-half-even mapping of real values onto the integer grid."""
    q = np.round(values.astype(np.float64) / params.scale) + params.zero_point
    return np.clip(q, params.qmin, params.qmax).astype(np.int32)


def quantize_tensor(
    t: Tensor,
    bits: int,
    mode: str = SYMMETRIC_WEIGHTS,
    stats: CalibrationStats | None = None,
) -> QuantTensor:
    """Quantize a tensor to 4 or 8 bits under the chosen scheme."""
    if t.size == 0:
        raise EmptyTensorError("cannot quantize an empty tensor")
    if mode == SYMMETRIC_WEIGHTS:
        params = symmetric_params(float(np.abs(t.data).max()), bits)
    elif mode == AFFINE_ACTIVATIONS:
        if stats is None:
            raise MissingStatsError("affine_activations mode requires stats")
        params = affine_params(stats, bits)
    else:
        raise ValueError(f"unknown quantization mode {mode!r}")
    return QuantTensor(quantize_array(t.data, params), params)


def dequantize(q: QuantTensor) -> Tensor:
    vals = (q.qdata.astype(np.float64) - q.params.zero_point) * q.params.scale
    return Tensor(vals.astype(np.float32))


def layer_sensitivity(
    weights: Tensor, bits: int, hessian_trace: float | None = None
) -> float:
    """Perturbation score of quantizing a weight tensor to the given width.

    The base score is the squared L2 error of the symmetric round trip;
    an externally supplied curvature trace multiplies it when available.
    """
    if weights.size == 0:
        raise EmptyTensorError("cannot score an empty tensor")
    q = quantize_tensor(weights, bits, SYMMETRIC_WEIGHTS)
    err = dequantize(q).data.astype(np.float64) - weights.data.astype(np.float64)
    base = float(np.sum(err * err))
    if hessian_trace is not None:
        if hessian_trace < 0:
            raise InvalidSensitivityError("hessian trace must be non-negative")
        return hessian_trace * base
    return base


@dataclass
class SensitivityTable:
    """Per-layer perturbation scores for each candidate bit width."""

    omega: dict[str, dict[int, float]] = field(default_factory=dict)

    def set(self, layer: str, bits: int, value: float) -> None:
        self.omega.setdefault(layer, {})[bits] = float(value)

    def get(self, layer: str, bits: int) -> float:
        return self.omega[layer][bits]

    def validate(self) -> None:
        """Check that coarser quantization never scores lower."""
        for layer, per_bits in self.omega.items():
            if 4 in per_bits and 8 in per_bits and per_bits[4] < per_bits[8]:
                raise InvalidSensitivityError(
                    f"layer {layer!r}: omega(4)={per_bits[4]} < omega(8)={per_bits[8]}"
                )


def build_sensitivity_table(
    weights_by_layer: dict[str, Tensor],
    bit_options: tuple[int, ...] = (4, 8),
    hessian_traces: dict[str, float] | None = None,
) -> SensitivityTable:
    """Score every layer at every bit option from its weights."""
    traces = hessian_traces or {}
    table = SensitivityTable()
    for name, w in weights_by_layer.items():
        for bits in bit_options:
            table.set(name, bits, layer_sensitivity(w, bits, traces.get(name)))
    table.validate()
    return table
