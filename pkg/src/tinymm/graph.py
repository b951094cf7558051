"""Two-branch model graphs: config format, loader, executor, calibration.

A model is a JSON config (schema "tinymm-model-v1") plus a binary weight
blob. The config lists layers in topological order; each non-input layer
names its inputs. Exactly two input layers feed two linear branches that
meet at a single concat node, followed by a dense head ending in softmax.

Batch-norm layers are folded into the preceding convolution at load time
(w' = w * g / sqrt(var + eps), b' = (b - mean) * g / sqrt(var + eps) + beta,
eps = 1e-3) and removed from the graph.

Inference runs either in float32 or fully quantized. In quantized mode
every hidden tensor stays integer; activations are requantized where two
precisions meet (between layers of different widths and at the concat),
and values are dequantized only at the softmax input.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import integer_kernels as ik
from . import kernels as K
from .audio import MfccConfig, frame_count
from .blob import DTYPE_F32, DTYPE_I4, DTYPE_I8, Record, read_blob
from .costs import CostReport, dense_cost, ds_conv_cost, traditional_conv_cost
from .errors import (
    DanglingWeightsError,
    EmptyCalibrationSetError,
    MissingAssignmentError,
    MissingCalibrationError,
    ParseError,
    ShapeMismatchError,
)
from .quantize import (
    CalibrationStats,
    affine_params,
    quantize_array,
    symmetric_params,
)
from .tensor import QuantParams, QuantTensor, Tensor, concat_last_axis

SCHEMA = "tinymm-model-v1"
BN_EPS = 1e-3

WEIGHTED_KINDS = ("conv2d", "ds_conv2d", "dense")
ALL_KINDS = WEIGHTED_KINDS + (
    "input",
    "maxpool",
    "relu",
    "softmax",
    "flatten",
    "dropout",
    "batchnorm",
    "concat",
)


@dataclass
class LayerSpec:
    name: str
    kind: str
    inputs: tuple[str, ...] = ()
    conv: K.ConvSpec | None = None
    dense: K.DenseSpec | None = None
    pool: K.PoolSpec | None = None
    input_shape: tuple[int, ...] | None = None
    source: dict | None = None
    rate: float = 0.0
    bit_policy: object = "allocator"  # "allocator" or a fixed width (4 / 8)


@dataclass
class ModelGraph:
    name: str
    layers: list[LayerSpec]
    weights: dict[str, dict[str, Tensor]]
    shapes: dict[str, tuple[int, ...]]
    input_names: tuple[str, str]
    concat_name: str
    output_name: str
    branch_chains: tuple[list[str], list[str]]
    head_chain: list[str]
    sensitivity_overrides: dict[str, float] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def layer(self, name: str) -> LayerSpec:
        return self._by_name[name]

    def __post_init__(self):
        self._by_name = {l.name: l for l in self.layers}

    @property
    def weighted_layers(self) -> list[LayerSpec]:
        return [l for l in self.layers if l.kind in WEIGHTED_KINDS]

    @property
    def num_classes(self) -> int:
        return self.shapes[self.output_name][0]


# -- config parsing -----------------------------------------------------------

def _parse_layer(doc: dict) -> LayerSpec:
    try:
        name = str(doc["name"])
        kind = str(doc["kind"])
    except KeyError as exc:
        raise ParseError(f"layer missing field {exc}") from exc
    if kind not in ALL_KINDS:
        raise ParseError(f"layer {name!r}: unknown kind {kind!r}")
    inputs = tuple(str(s) for s in doc.get("inputs", ()))
    spec = LayerSpec(name=name, kind=kind, inputs=inputs)
    if kind == "input":
        if inputs:
            raise ParseError(f"input layer {name!r} cannot have inputs")
        try:
            spec.input_shape = tuple(int(d) for d in doc["shape"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"input layer {name!r} needs a shape") from exc
        spec.source = doc.get("source")
        return spec
    if not inputs:
        raise ParseError(f"layer {name!r} has no inputs")
    if kind == "concat":
        if len(inputs) != 2:
            raise ParseError(f"concat layer {name!r} needs exactly two inputs")
        return spec
    if len(inputs) != 1:
        raise ParseError(f"layer {name!r} must have exactly one input")
    if kind in WEIGHTED_KINDS:
        spec.bit_policy = doc.get("bits", "allocator")
        if spec.bit_policy not in ("allocator", 4, 8):
            raise ParseError(f"layer {name!r}: bits must be 4, 8 or \"allocator\"")
    if kind == "maxpool":
        try:
            spec.pool = K.PoolSpec(int(doc["pool_size"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"maxpool layer {name!r} needs pool_size") from exc
    if kind == "dropout":
        spec.rate = float(doc.get("rate", 0.0))
        if not 0.0 <= spec.rate < 1.0:
            raise ParseError(f"dropout layer {name!r}: bad rate {spec.rate}")
    return spec


def _check_input_source(layer: LayerSpec) -> None:
    """Declared input shape must agree with what its front-end produces."""
    src = layer.source
    if not src:
        return
    shape = layer.input_shape
    if src.get("type") == "mfcc":
        try:
            cfg = MfccConfig.from_dict(src)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"input {layer.name!r}: bad mfcc source: {exc}") from exc
        if "chunk_seconds" in src:
            samples = int(round(float(src["chunk_seconds"]) * cfg.sample_rate))
            frames = frame_count(samples, cfg)
            want = (frames, cfg.num_coefficients, 1)
            if shape != want:
                raise ParseError(
                    f"input {layer.name!r}: declared shape {shape} but the mfcc "
                    f"source yields {want}"
                )
    elif src.get("type") == "image":
        if len(shape) != 3:
            raise ParseError(f"input {layer.name!r}: image inputs must be rank 3")
        want = (int(src.get("height", shape[0])), int(src.get("width", shape[1])), 3)
        if shape != want:
            raise ParseError(
                f"input {layer.name!r}: declared shape {shape} but the image "
                f"source yields {want}"
            )


def _infer_shapes(layers: list[LayerSpec], raw: list[dict]) -> dict[str, tuple[int, ...]]:
    """Resolve every layer's output shape, completing conv/dense specs."""
    shapes: dict[str, tuple[int, ...]] = {}
    raw_by_name = {d["name"]: d for d in raw}
    for layer in layers:
        if layer.kind == "input":
            _check_input_source(layer)
            shapes[layer.name] = layer.input_shape
            continue
        in_shapes = [shapes[s] for s in layer.inputs]
        s = in_shapes[0]
        if layer.kind in ("conv2d", "ds_conv2d"):
            if len(s) != 3:
                raise ShapeMismatchError(f"{layer.name!r}: conv input must be rank 3, got {s}")
            doc = raw_by_name[layer.name]
            try:
                layer.conv = K.ConvSpec(
                    in_channels=s[2],
                    out_channels=int(doc["out_channels"]),
                    kernel_size=int(doc["kernel_size"]),
                    stride=int(doc.get("stride", 1)),
                    padding=str(doc.get("padding", K.VALID)),
                    kind="traditional" if layer.kind == "conv2d" else "depthwise_separable",
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"conv layer {layer.name!r}: {exc}") from exc
            h = K.conv_output_dim(s[0], layer.conv.kernel_size, layer.conv.stride, layer.conv.padding)
            w = K.conv_output_dim(s[1], layer.conv.kernel_size, layer.conv.stride, layer.conv.padding)
            shapes[layer.name] = (h, w, layer.conv.out_channels)
        elif layer.kind == "maxpool":
            if len(s) != 3:
                raise ShapeMismatchError(f"{layer.name!r}: pool input must be rank 3, got {s}")
            p = layer.pool.pool_size
            if s[0] < p or s[1] < p:
                raise ShapeMismatchError(f"{layer.name!r}: input {s} smaller than pool {p}")
            shapes[layer.name] = (s[0] // p, s[1] // p, s[2])
        elif layer.kind == "dense":
            if len(s) != 1:
                raise ShapeMismatchError(f"{layer.name!r}: dense input must be rank 1, got {s}")
            doc = raw_by_name[layer.name]
            try:
                layer.dense = K.DenseSpec(s[0], int(doc["out_features"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"dense layer {layer.name!r}: {exc}") from exc
            shapes[layer.name] = (layer.dense.out_features,)
        elif layer.kind == "flatten":
            n = 1
            for d in s:
                n *= d
            shapes[layer.name] = (n,)
        elif layer.kind == "concat":
            a, b = in_shapes
            if len(a) != 1 or len(b) != 1:
                raise ShapeMismatchError(f"{layer.name!r}: concat inputs must be rank 1")
            shapes[layer.name] = (a[0] + b[0],)
        elif layer.kind == "softmax":
            if len(s) != 1:
                raise ShapeMismatchError(f"{layer.name!r}: softmax input must be rank 1")
            shapes[layer.name] = s
        else:  # relu, dropout, batchnorm keep their input shape
            shapes[layer.name] = s
    return shapes


def _expected_records(layer: LayerSpec, shapes: dict) -> dict[str, tuple[int, ...]]:
    if layer.kind == "conv2d":
        c = layer.conv
        return {
            f"{layer.name}.w": (c.kernel_size, c.kernel_size, c.in_channels, c.out_channels),
            f"{layer.name}.b": (c.out_channels,),
        }
    if layer.kind == "ds_conv2d":
        c = layer.conv
        return {
            f"{layer.name}.dw": (c.kernel_size, c.kernel_size, c.in_channels),
            f"{layer.name}.pw": (1, 1, c.in_channels, c.out_channels),
            f"{layer.name}.b": (c.out_channels,),
        }
    if layer.kind == "dense":
        d = layer.dense
        return {f"{layer.name}.w": (d.in_features, d.out_features), f"{layer.name}.b": (d.out_features,)}
    if layer.kind == "batchnorm":
        c = shapes[layer.name][-1]
        return {
            f"{layer.name}.gamma": (c,),
            f"{layer.name}.beta": (c,),
            f"{layer.name}.mean": (c,),
            f"{layer.name}.var": (c,),
        }
    return {}


def _fold_batchnorm(
    layers: list[LayerSpec],
    weights: dict[str, dict[str, Tensor]],
    shapes: dict[str, tuple[int, ...]],
    bn_params: dict[str, dict[str, np.ndarray]],
) -> list[LayerSpec]:
    """Fold every batchnorm into its preceding conv2d and drop the node."""
    remaining = []
    rename: dict[str, str] = {}
    for layer in layers:
        if layer.kind != "batchnorm":
            continue
        prev_name = rename.get(layer.inputs[0], layer.inputs[0])
        prev = next((l for l in layers if l.name == prev_name), None)
        if prev is None or prev.kind != "conv2d":
            raise ParseError(
                f"batchnorm {layer.name!r} must directly follow a conv2d layer"
            )
        p = bn_params[layer.name]
        scale = p["gamma"] / np.sqrt(p["var"] + BN_EPS)
        w = weights[prev_name]["w"].data * scale  # broadcast over output channels
        b = (weights[prev_name]["b"].data - p["mean"]) * scale + p["beta"]
        weights[prev_name] = {"w": Tensor(w.astype(np.float32)), "b": Tensor(b.astype(np.float32))}
        rename[layer.name] = prev_name
    for layer in layers:
        if layer.kind == "batchnorm":
            shapes.pop(layer.name, None)
            continue
        layer.inputs = tuple(rename.get(s, s) for s in layer.inputs)
        remaining.append(layer)
    return remaining


def _check_dag(layers: list[LayerSpec]) -> tuple[tuple[str, str], str, str]:
    inputs = [l.name for l in layers if l.kind == "input"]
    concats = [l.name for l in layers if l.kind == "concat"]
    softmaxes = [l.name for l in layers if l.kind == "softmax"]
    if len(inputs) != 2:
        raise ParseError(f"model needs exactly two input layers, found {len(inputs)}")
    if len(concats) != 1:
        raise ParseError(f"model needs exactly one concat layer, found {len(concats)}")
    if len(softmaxes) != 1 or layers[-1].name != softmaxes[0]:
        raise ParseError("model must end in exactly one softmax layer")
    consumers: dict[str, list[str]] = {l.name: [] for l in layers}
    for layer in layers:
        for src in layer.inputs:
            if src not in consumers:
                raise ParseError(f"layer {layer.name!r} consumes unknown layer {src!r}")
            consumers[src].append(layer.name)
    for layer in layers:
        n = len(consumers[layer.name])
        if layer.kind == "softmax":
            if n:
                raise ParseError("softmax must be the terminal layer")
        elif n != 1:
            raise ParseError(
                f"layer {layer.name!r} must feed exactly one consumer, feeds {n}"
            )
    # both input chains must reach the concat
    concat = concats[0]
    for start in inputs:
        seen = start
        while seen != concat:
            nxt = consumers[seen][0]
            if nxt == softmaxes[0] and nxt != concat:
                raise ParseError(f"input {start!r} never reaches the concat layer")
            seen = nxt
    return (inputs[0], inputs[1]), concat, softmaxes[0]


def _build_chains(
    layers: list[LayerSpec], input_names: tuple[str, str], concat: str
) -> tuple[tuple[list[str], list[str]], list[str]]:
    consumers = {l.name: [] for l in layers}
    for layer in layers:
        for src in layer.inputs:
            consumers[src].append(layer.name)
    chains = []
    for start in input_names:
        chain = [start]
        cur = start
        while consumers[cur] and consumers[cur][0] != concat:
            cur = consumers[cur][0]
            chain.append(cur)
        chains.append(chain)
    head = [concat]
    cur = concat
    while consumers[cur]:
        cur = consumers[cur][0]
        head.append(cur)
    return (chains[0], chains[1]), head


def assemble_model(config: dict, records: dict[str, Record]) -> ModelGraph:
    """Validate a parsed config against a record set and build the graph."""
    if config.get("schema") != SCHEMA:
        raise ParseError(f"unsupported schema {config.get('schema')!r}")
    raw_layers = config.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ParseError("config has no layers")
    layers = [_parse_layer(d) for d in raw_layers]
    names = [l.name for l in layers]
    if len(set(names)) != len(names):
        raise ParseError("layer names must be unique")
    known: set[str] = set()
    for layer in layers:
        for src in layer.inputs:
            if src not in known:
                raise ParseError(
                    f"layer {layer.name!r} consumes {src!r} before it is defined"
                )
        known.add(layer.name)

    shapes = _infer_shapes(layers, raw_layers)

    # bind weights
    claimed: set[str] = set()
    weights: dict[str, dict[str, Tensor]] = {}
    bn_params: dict[str, dict[str, np.ndarray]] = {}
    for layer in layers:
        expected = _expected_records(layer, shapes)
        bound: dict[str, Tensor] = {}
        for rec_name, shape in expected.items():
            rec = records.get(rec_name)
            if rec is None:
                raise ShapeMismatchError(f"weight blob is missing record {rec_name!r}")
            if rec.dtype != DTYPE_F32:
                raise ParseError(f"record {rec_name!r} must be f32 in a float model")
            if rec.shape != shape:
                raise ShapeMismatchError(
                    f"record {rec_name!r} has shape {rec.shape}, expected {shape}"
                )
            bound[rec_name.rsplit(".", 1)[1]] = Tensor(rec.values.reshape(shape))
            claimed.add(rec_name)
        if layer.kind in WEIGHTED_KINDS:
            weights[layer.name] = bound
        elif layer.kind == "batchnorm":
            bn_params[layer.name] = {
                k: v.data.astype(np.float64) for k, v in bound.items()
            }
    extra = set(records) - claimed
    if extra:
        raise DanglingWeightsError(f"blob contains unclaimed records: {sorted(extra)}")

    layers = _fold_batchnorm(layers, weights, shapes, bn_params)
    input_names, concat, output = _check_dag(layers)
    chains, head = _build_chains(layers, input_names, concat)

    overrides = {
        str(k): float(v)
        for k, v in (config.get("sensitivity_overrides") or {}).items()
    }
    return ModelGraph(
        name=str(config.get("name", "model")),
        layers=layers,
        weights=weights,
        shapes=shapes,
        input_names=input_names,
        concat_name=concat,
        output_name=output,
        branch_chains=chains,
        head_chain=head,
        sensitivity_overrides=overrides,
        config=config,
    )


def load_model(config_path, weights_path) -> ModelGraph:
    """Load and validate a model from a config file and a weight blob."""
    try:
        with open(config_path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{config_path}: {exc}") from exc
    records = read_blob(weights_path)
    return assemble_model(config, records)


def cost_report(graph: ModelGraph) -> CostReport:
    """Per-layer parameter and MAC accounting for every weighted layer."""
    report = CostReport()
    for layer in graph.weighted_layers:
        out = graph.shapes[layer.name]
        if layer.kind == "conv2d":
            c = layer.conv
            report.layers.append(
                traditional_conv_cost(c.in_channels, c.kernel_size, c.out_channels, out[0], out[1], layer.name)
            )
        elif layer.kind == "ds_conv2d":
            c = layer.conv
            report.layers.append(
                ds_conv_cost(c.in_channels, c.kernel_size, c.out_channels, out[0], out[1], layer.name)
            )
        else:
            d = layer.dense
            report.layers.append(dense_cost(d.in_features, d.out_features, layer.name))
    return report


# -- float execution ----------------------------------------------------------

def _eval_float(
    graph: ModelGraph,
    layer: LayerSpec,
    value: Tensor,
    record: dict[str, CalibrationStats] | None,
) -> Tensor:
    if layer.kind == "conv2d":
        w = graph.weights[layer.name]
        out = K.conv2d_fp(value, w["w"], w["b"], layer.conv)
    elif layer.kind == "ds_conv2d":
        w = graph.weights[layer.name]
        mid = K.depthwise_conv2d_fp(value, w["dw"], layer.conv)
        if record is not None:
            record.setdefault(f"{layer.name}.dw", CalibrationStats()).update(mid.data)
        out = K.pointwise_conv2d_fp(mid, w["pw"], w["b"])
    elif layer.kind == "dense":
        w = graph.weights[layer.name]
        out = K.dense_fp(value, w["w"], w["b"])
    elif layer.kind == "maxpool":
        out = K.maxpool2d(value, layer.pool)
    elif layer.kind == "relu":
        out = K.relu(value)
    elif layer.kind == "flatten":
        out = K.flatten(value)
    elif layer.kind == "dropout":
        out = value  # inference-time identity
    elif layer.kind == "softmax":
        out = K.softmax(value)
    else:
        raise ParseError(f"cannot execute layer kind {layer.kind!r}")
    if record is not None:
        record.setdefault(layer.name, CalibrationStats()).update(out.data)
    return out


def _run_branch_float(graph, chain, value, record):
    for name in chain[1:]:
        value = _eval_float(graph, graph.layer(name), value, record)
    return value


def _run_float(
    graph: ModelGraph,
    inputs: dict[str, Tensor],
    record: dict[str, CalibrationStats] | None = None,
    parallel: bool = False,
) -> Tensor:
    starts = {}
    for name in graph.input_names:
        starts[name] = inputs[name]
        if record is not None:
            record.setdefault(name, CalibrationStats()).update(inputs[name].data)
    ca, cb = graph.branch_chains
    if parallel and record is None:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fa = pool.submit(_run_branch_float, graph, ca, starts[ca[0]], None)
            fb = pool.submit(_run_branch_float, graph, cb, starts[cb[0]], None)
            va, vb = fa.result(), fb.result()
    else:
        va = _run_branch_float(graph, ca, starts[ca[0]], record)
        vb = _run_branch_float(graph, cb, starts[cb[0]], record)
    value = concat_last_axis(va, vb)
    if record is not None:
        record.setdefault(graph.concat_name, CalibrationStats()).update(value.data)
    for name in graph.head_chain[1:]:
        value = _eval_float(graph, graph.layer(name), value, record)
    return value


def calibrate(
    graph: ModelGraph, calibration_inputs: list[dict[str, Tensor]]
) -> dict[str, CalibrationStats]:
    """Record activation min/max at every edge over a float-mode sweep."""
    if not calibration_inputs:
        raise EmptyCalibrationSetError("calibration needs at least one input pair")
    stats: dict[str, CalibrationStats] = {}
    for pair in calibration_inputs:
        _run_float(graph, _as_input_dict(graph, pair), record=stats, parallel=False)
    return stats


# -- quantized execution --------------------------------------------------------

@dataclass
class QuantizedPlan:
    """Everything integer inference needs: weights, biases and edge params."""

    assignment: dict[str, int]
    qweights: dict[str, dict[str, QuantTensor]]
    qbiases: dict[str, np.ndarray]
    in_params: dict[str, QuantParams]    # params each weighted layer consumes
    out_params: dict[str, QuantParams]   # params each weighted layer produces
    mid_params: dict[str, QuantParams]   # depthwise-stage params of ds layers
    input_params: dict[str, QuantParams]
    concat_params: QuantParams


def _layer_bits(layer: LayerSpec, assignment: dict[str, int]) -> int:
    if layer.name not in assignment:
        raise MissingAssignmentError(f"no bits assigned for layer {layer.name!r}")
    bits = int(assignment[layer.name])
    if isinstance(layer.bit_policy, int) and bits != layer.bit_policy:
        raise MissingAssignmentError(
            f"layer {layer.name!r} is fixed at {layer.bit_policy} bits, assignment says {bits}"
        )
    return bits


def _stats_for(stats: dict[str, CalibrationStats], edge: str) -> CalibrationStats:
    if edge not in stats or not stats[edge].ready:
        raise MissingCalibrationError(f"no calibration stats for edge {edge!r}")
    return stats[edge]


def _first_weighted_bits(graph, chain, assignment, default=8) -> int:
    for name in chain:
        layer = graph.layer(name)
        if layer.kind in WEIGHTED_KINDS:
            return _layer_bits(layer, assignment)
    return default


def prepare_quantized_plan(
    graph: ModelGraph,
    assignment: dict[str, int],
    stats: dict[str, CalibrationStats],
) -> QuantizedPlan:
    """Quantize weights and fix every edge's parameters ahead of execution."""
    plan = QuantizedPlan(
        assignment={}, qweights={}, qbiases={}, in_params={}, out_params={},
        mid_params={}, input_params={},
        concat_params=QuantParams(1.0, 0, 8),
    )

    def quant_weight(t: Tensor, bits: int) -> QuantTensor:
        params = symmetric_params(float(np.abs(t.data).max()), bits)
        return QuantTensor(quantize_array(t.data, params), params)

    def walk(chain: list[str], cur: QuantParams, cur_edge: str) -> tuple[QuantParams, str]:
        for name in chain:
            layer = graph.layer(name)
            if layer.kind in WEIGHTED_KINDS:
                bits = _layer_bits(layer, assignment)
                plan.assignment[name] = bits
                if cur.bits != bits:
                    cur = affine_params(_stats_for(stats, cur_edge), bits)
                plan.in_params[name] = cur
                out = affine_params(_stats_for(stats, name), bits)
                w = graph.weights[name]
                if layer.kind == "ds_conv2d":
                    dw = quant_weight(w["dw"], bits)
                    pw = quant_weight(w["pw"], bits)
                    mid = affine_params(_stats_for(stats, f"{name}.dw"), bits)
                    plan.qweights[name] = {"dw": dw, "pw": pw}
                    plan.mid_params[name] = mid
                    plan.qbiases[name] = ik.quantize_bias(w["b"], mid.scale, pw.params.scale)
                    ik.check_accumulator(layer.conv.kernel_size ** 2, bits)
                    ik.check_accumulator(layer.conv.in_channels, bits)
                else:
                    qw = quant_weight(w["w"], bits)
                    plan.qweights[name] = {"w": qw}
                    plan.qbiases[name] = ik.quantize_bias(w["b"], cur.scale, qw.params.scale)
                    terms = (
                        layer.conv.kernel_size ** 2 * layer.conv.in_channels
                        if layer.kind == "conv2d"
                        else layer.dense.in_features
                    )
                    ik.check_accumulator(terms, bits)
                plan.out_params[name] = out
                cur = out
            cur_edge = name
        return cur, cur_edge

    ca, cb = graph.branch_chains
    head_bits = _first_weighted_bits(graph, graph.head_chain, assignment)
    for chain in (ca, cb):
        start_bits = _first_weighted_bits(graph, chain + graph.head_chain, assignment)
        cur = affine_params(_stats_for(stats, chain[0]), start_bits)
        plan.input_params[chain[0]] = cur
        walk(chain[1:], cur, chain[0])
    plan.concat_params = affine_params(_stats_for(stats, graph.concat_name), head_bits)
    walk(graph.head_chain[1:], plan.concat_params, graph.concat_name)
    return plan


def _eval_int(graph: ModelGraph, plan: QuantizedPlan, layer: LayerSpec, q: QuantTensor):
    if layer.kind in WEIGHTED_KINDS:
        want = plan.in_params[layer.name]
        if q.params != want:
            q = ik.requantize_tensor(q, want)
        if layer.kind == "conv2d":
            return ik.conv2d_int(
                q, plan.qweights[layer.name]["w"], plan.qbiases[layer.name],
                plan.out_params[layer.name], layer.conv,
            )
        if layer.kind == "ds_conv2d":
            w = plan.qweights[layer.name]
            return ik.depthwise_separable_conv2d_int(
                q, w["dw"], w["pw"], plan.qbiases[layer.name],
                plan.mid_params[layer.name], plan.out_params[layer.name], layer.conv,
            )
        return ik.dense_int(
            q, plan.qweights[layer.name]["w"], plan.qbiases[layer.name],
            plan.out_params[layer.name],
        )
    if layer.kind == "maxpool":
        return ik.maxpool2d_int(q, layer.pool)
    if layer.kind == "relu":
        return ik.relu_int(q)
    if layer.kind == "flatten":
        return ik.flatten_int(q)
    if layer.kind == "dropout":
        return q
    raise ParseError(f"cannot execute layer kind {layer.kind!r} in integer mode")


def _run_branch_int(graph, plan, chain, value: Tensor) -> QuantTensor:
    params = plan.input_params[chain[0]]
    q = QuantTensor(quantize_array(value.data, params), params)
    for name in chain[1:]:
        q = _eval_int(graph, plan, graph.layer(name), q)
    return q


def _run_quantized(
    graph: ModelGraph,
    plan: QuantizedPlan,
    inputs: dict[str, Tensor],
    parallel: bool = False,
) -> Tensor:
    ca, cb = graph.branch_chains
    if parallel:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fa = pool.submit(_run_branch_int, graph, plan, ca, inputs[ca[0]])
            fb = pool.submit(_run_branch_int, graph, plan, cb, inputs[cb[0]])
            qa, qb = fa.result(), fb.result()
    else:
        qa = _run_branch_int(graph, plan, ca, inputs[ca[0]])
        qb = _run_branch_int(graph, plan, cb, inputs[cb[0]])
    qa = ik.requantize_tensor(qa, plan.concat_params)
    qb = ik.requantize_tensor(qb, plan.concat_params)
    q = QuantTensor(np.concatenate([qa.qdata, qb.qdata]), plan.concat_params)
    for name in graph.head_chain[1:]:
        layer = graph.layer(name)
        if layer.kind == "softmax":
            vals = (q.qdata.astype(np.float64) - q.params.zero_point) * q.params.scale
            return K.softmax(Tensor(vals.astype(np.float32)))
        q = _eval_int(graph, plan, layer, q)
    raise ParseError("model has no softmax terminal")  # unreachable after validation


# -- public inference ----------------------------------------------------------

def _as_input_dict(graph: ModelGraph, inputs) -> dict[str, Tensor]:
    if isinstance(inputs, dict):
        pair = inputs
    else:
        seq = list(inputs)
        if len(seq) != 2:
            raise ShapeMismatchError("expected one tensor per input branch")
        pair = {graph.input_names[0]: seq[0], graph.input_names[1]: seq[1]}
    for name in graph.input_names:
        if name not in pair:
            raise ShapeMismatchError(f"missing input {name!r}")
        if pair[name].shape != graph.shapes[name]:
            raise ShapeMismatchError(
                f"input {name!r} has shape {pair[name].shape}, expected {graph.shapes[name]}"
            )
    return pair


def infer(
    graph: ModelGraph,
    inputs,
    mode: str = "float32",
    assignment: dict[str, int] | None = None,
    calibration: dict[str, CalibrationStats] | None = None,
    plan: QuantizedPlan | None = None,
    parallel_branches: bool = False,
) -> Tensor:
    """Run the model end to end; returns the class probability vector."""
    pair = _as_input_dict(graph, inputs)
    if mode == "float32":
        return _run_float(graph, pair, record=None, parallel=parallel_branches)
    if mode == "quantized":
        if plan is None:
            if assignment is None:
                raise MissingAssignmentError("quantized mode needs a bit assignment")
            if calibration is None:
                raise MissingCalibrationError("quantized mode needs calibration stats")
            plan = prepare_quantized_plan(graph, assignment, calibration)
        return _run_quantized(graph, plan, pair, parallel=parallel_branches)
    raise ParseError(f"unknown inference mode {mode!r}")


# -- quantized blob serialization ------------------------------------------------

def _params_record(name: str, p: QuantParams) -> Record:
    return Record(name, DTYPE_F32, (3,), np.array([p.scale, p.zero_point, p.bits], dtype=np.float32))


def _params_from_record(rec: Record) -> QuantParams:
    scale, zp, bits = (float(v) for v in rec.values)
    return QuantParams(scale=scale, zero_point=int(zp), bits=int(bits))


def plan_to_records(graph: ModelGraph, plan: QuantizedPlan) -> list[Record]:
    """Serialize a quantized plan as blob records (weights packed to width)."""
    records: list[Record] = []
    for name, bits in plan.assignment.items():
        tag = DTYPE_I4 if bits == 4 else DTYPE_I8
        for key, q in plan.qweights[name].items():
            records.append(Record(f"{name}.{key}q", tag, q.shape, q.qdata))
            records.append(
                Record(f"{name}.{key}_scale", DTYPE_F32, (1,), np.array([q.params.scale], dtype=np.float32))
            )
        records.append(Record(f"{name}.b", DTYPE_F32, graph.weights[name]["b"].shape, graph.weights[name]["b"].data))
        records.append(_params_record(f"{name}.in_params", plan.in_params[name]))
        records.append(_params_record(f"{name}.out_params", plan.out_params[name]))
        if name in plan.mid_params:
            records.append(_params_record(f"{name}.mid_params", plan.mid_params[name]))
    for name, p in plan.input_params.items():
        records.append(_params_record(f"{name}.params", p))
    records.append(_params_record(f"{graph.concat_name}.params", plan.concat_params))
    return records


def plan_from_records(graph: ModelGraph, records: dict[str, Record]) -> QuantizedPlan:
    """Rebuild an executable plan from a quantized blob."""
    try:
        return _plan_from_records(graph, records)
    except KeyError as exc:
        raise ParseError(f"quantized blob is missing record {exc}") from exc


def _plan_from_records(graph: ModelGraph, records: dict[str, Record]) -> QuantizedPlan:
    plan = QuantizedPlan(
        assignment={}, qweights={}, qbiases={}, in_params={}, out_params={},
        mid_params={}, input_params={},
        concat_params=_params_from_record(records[f"{graph.concat_name}.params"]),
    )
    for name in graph.input_names:
        plan.input_params[name] = _params_from_record(records[f"{name}.params"])
    for layer in graph.weighted_layers:
        name = layer.name
        keys = ("dw", "pw") if layer.kind == "ds_conv2d" else ("w",)
        qws: dict[str, QuantTensor] = {}
        bits = None
        for key in keys:
            rec = records.get(f"{name}.{key}q")
            if rec is None:
                raise ShapeMismatchError(f"quantized blob is missing {name}.{key}q")
            bits = 4 if rec.dtype == DTYPE_I4 else 8
            scale = float(records[f"{name}.{key}_scale"].values[0])
            qws[key] = QuantTensor(
                rec.values.reshape(rec.shape), QuantParams(scale, 0, bits)
            )
        plan.assignment[name] = bits
        plan.qweights[name] = qws
        plan.in_params[name] = _params_from_record(records[f"{name}.in_params"])
        plan.out_params[name] = _params_from_record(records[f"{name}.out_params"])
        bias = Tensor(records[f"{name}.b"].values.reshape(records[f"{name}.b"].shape))
        if layer.kind == "ds_conv2d":
            plan.mid_params[name] = _params_from_record(records[f"{name}.mid_params"])
            plan.qbiases[name] = ik.quantize_bias(
                bias, plan.mid_params[name].scale, qws["pw"].params.scale
            )
        else:
            plan.qbiases[name] = ik.quantize_bias(
                bias, plan.in_params[name].scale, qws["w"].params.scale
            )
    return plan
