"""Post-training quantization: scales, zero points, errors, sensitivity.

Shows the two quantization schemes (symmetric for weights, affine for
activations), the round-trip error bound, and the per-layer sensitivity
score the bit allocator minimizes.

Run: python demos/02_quantization_basics.py
"""
import numpy as np

from tinymm import dequantize, layer_sensitivity, quantize_tensor
from tinymm.quantize import AFFINE_ACTIVATIONS, CalibrationStats
from tinymm.tensor import Tensor, tensor_create

# ---------------------------------------------------------------------------
# Symmetric weight quantization: zero_point is always 0
# ---------------------------------------------------------------------------
w = tensor_create([3], [-1.0, 0.5, 1.0])
for bits in (8, 4):
    q = quantize_tensor(w, bits)
    print(f"{bits}-bit symmetric: scale={q.params.scale:.6f} "
          f"zero_point={q.params.zero_point} q={q.qdata.tolist()} "
          f"-> back {dequantize(q).data.round(4).tolist()}")
print()

# ---------------------------------------------------------------------------
# Affine activation quantization needs observed min/max (calibration)
# ---------------------------------------------------------------------------
rng = np.random.default_rng(0)
acts = np.abs(rng.normal(size=1000)).astype(np.float32)  # post-ReLU-like
stats = CalibrationStats()
stats.update(acts)
t = Tensor(acts)
q = quantize_tensor(t, 8, AFFINE_ACTIVATIONS, stats)
err = np.abs(dequantize(q).data - acts)
print(f"affine 8-bit: scale={q.params.scale:.6f} zero_point={q.params.zero_point}")
print(f"max |round-trip error| = {err.max():.6f} <= scale/2 = {q.params.scale / 2:.6f}")
print()

# ---------------------------------------------------------------------------
# Sensitivity: how much a layer's weights are perturbed at each width.
# Coarser quantization perturbs more, so omega(4) >= omega(8); the summed
# score is what the allocator trades against its budgets.
# ---------------------------------------------------------------------------
for size in (100, 1000, 10000):
    weights = Tensor(rng.normal(scale=0.5, size=size).astype(np.float32))
    w4 = layer_sensitivity(weights, 4)
    w8 = layer_sensitivity(weights, 8)
    print(f"{size:6d} weights: omega(4)={w4:10.5f}  omega(8)={w8:10.7f}  "
          f"ratio {w4 / w8:8.1f}x")

# an externally supplied curvature trace rescales the score per layer
weights = Tensor(rng.normal(size=500).astype(np.float32))
print(f"\nwith hessian_trace=3.0: {layer_sensitivity(weights, 4, hessian_trace=3.0):.5f} "
      f"= 3 x {layer_sensitivity(weights, 4):.5f}")
