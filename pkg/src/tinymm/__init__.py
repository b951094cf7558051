"""Quantized two-branch multimodal CNN inference engine and
model-compression toolkit: float and integer layer kernels, an analytic
parameter/MAC/BOPS cost model, post-training INT4/INT8 quantization with
calibration, exact bit allocation under size and compute budgets, an MFCC
audio front-end and a declarative two-branch model format.
"""
from . import errors
from .allocate import (
    AllocatorProblem,
    BitAssignment,
    LayerChoice,
    budget_sweep,
    build_problem,
    solve_brute_force,
    solve_exact,
)
from .audio import AudioClip, MfccConfig, chunk_audio, load_wav, mfcc, save_wav
from .costs import (
    CostReport,
    LayerCost,
    bops,
    dense_cost,
    ds_conv_cost,
    model_size_bits,
    traditional_conv_cost,
)
from .graph import (
    ModelGraph,
    QuantizedPlan,
    assemble_model,
    calibrate,
    cost_report,
    infer,
    load_model,
    prepare_quantized_plan,
)
from .kernels import (
    ConvSpec,
    DenseSpec,
    PoolSpec,
    conv2d_fp,
    conv_output_dim,
    dense_fp,
    depthwise_separable_conv2d_fp,
    maxpool2d,
    relu,
    softmax,
)
from .quantize import (
    CalibrationStats,
    SensitivityTable,
    build_sensitivity_table,
    dequantize,
    layer_sensitivity,
    quantize_tensor,
)
from .reference_models import build_reference, reference_config
from .tensor import QuantParams, QuantTensor, Tensor, concat_last_axis, tensor_create

__version__ = "0.1.0"

__all__ = [
    "AllocatorProblem",
    "AudioClip",
    "BitAssignment",
    "CalibrationStats",
    "ConvSpec",
    "CostReport",
    "DenseSpec",
    "LayerChoice",
    "LayerCost",
    "MfccConfig",
    "ModelGraph",
    "PoolSpec",
    "QuantParams",
    "QuantTensor",
    "QuantizedPlan",
    "SensitivityTable",
    "Tensor",
    "assemble_model",
    "bops",
    "budget_sweep",
    "build_problem",
    "build_reference",
    "build_sensitivity_table",
    "calibrate",
    "chunk_audio",
    "concat_last_axis",
    "conv2d_fp",
    "conv_output_dim",
    "cost_report",
    "dense_cost",
    "dense_fp",
    "depthwise_separable_conv2d_fp",
    "dequantize",
    "ds_conv_cost",
    "errors",
    "infer",
    "layer_sensitivity",
    "load_model",
    "load_wav",
    "maxpool2d",
    "mfcc",
    "model_size_bits",
    "prepare_quantized_plan",
    "quantize_tensor",
    "reference_config",
    "relu",
    "save_wav",
    "softmax",
    "solve_brute_force",
    "solve_exact",
    "tensor_create",
    "traditional_conv_cost",
]
