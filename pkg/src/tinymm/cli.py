"""Command-line surface.

    tinymm inspect   MODEL [--weights BLOB] [--out FILE]
    tinymm allocate  MODEL [--weights BLOB] [--size-budget BITS]
                     [--bops-budget N] [--sweep B1,B2,...] [--out FILE]
    tinymm quantize  MODEL --assignment FILE --calibration-dir DIR
                     [--weights BLOB] --out BLOB
    tinymm infer     MODEL [--weights BLOB] --audio A.wav
                     (--audio2 B.wav | --image IMG.ppm)
                     [--quantized ASSIGNMENT] [--out FILE]
    tinymm bench     MODEL [--weights BLOB] [--reps N]
                     [--quantized ASSIGNMENT] [--out FILE]

MODEL is a config path or a built-in name ("covid", "battlefield"); for
built-ins, weights are generated from --seed when --weights is omitted.
Exit codes: 0 ok, 2 load failure, 3 infeasible budgets, 4 calibration
failure, 5 input/preprocessing failure.

With --quantized, infer calibrates on the supplied input pair itself
(one-shot float pre-pass) before running integer inference; bench
calibrates on its synthesized inputs.
"""
from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import allocate as alloc
from . import audio as aud
from . import blob as blobio
from . import graph as g
from . import image as img
from .costs import format_table, report_to_dict
from .errors import (
    EmptyCalibrationSetError,
    InfeasibleError,
    MissingCalibrationError,
    TinymmError,
)
from .quantize import build_sensitivity_table
from .reference_models import (
    DEFAULT_SEED,
    REFERENCE_NAMES,
    build_reference,
    reference_config,
)
from .tensor import Tensor

EXIT_OK = 0
EXIT_LOAD = 2
EXIT_INFEASIBLE = 3
EXIT_CALIBRATION = 4
EXIT_INPUT = 5


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load_model(model: str, weights: str | None, seed: int) -> g.ModelGraph:
    try:
        if model in REFERENCE_NAMES:
            if weights is None:
                return build_reference(model, seed)
            return g.assemble_model(reference_config(model), blobio.read_blob(weights))
        if weights is None:
            raise CliFailure(EXIT_LOAD, f"--weights is required for model file {model}")
        if not Path(model).exists():
            raise CliFailure(EXIT_LOAD, f"no such model config: {model}")
        return g.load_model(model, weights)
    except TinymmError as exc:
        raise CliFailure(EXIT_LOAD, f"cannot load model: {exc}") from exc


def _write_json(path: str | None, doc: dict) -> None:
    if path is None:
        return
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# -- input preprocessing -------------------------------------------------------

def _input_source(graph: g.ModelGraph, name: str) -> dict:
    layer = graph.layer(name)
    return layer.source or {"type": "raw"}


def _prep_audio(graph: g.ModelGraph, name: str, path: str) -> Tensor:
    source = _input_source(graph, name)
    if source.get("type") != "mfcc":
        raise CliFailure(EXIT_INPUT, f"input {name!r} does not take audio")
    cfg = aud.MfccConfig.from_dict(source)
    clip = aud.load_wav(path)
    if clip.sample_rate != cfg.sample_rate:
        raise CliFailure(
            EXIT_INPUT,
            f"{path}: sample rate {clip.sample_rate} Hz, expected {cfg.sample_rate} Hz",
        )
    chunks = aud.chunk_audio(clip, float(source.get("chunk_seconds", clip.duration)))
    if not chunks:
        raise CliFailure(EXIT_INPUT, f"{path}: clip shorter than one chunk")
    feats = aud.mfcc(chunks[0], cfg)
    want = graph.shapes[name]
    if feats.shape != want[:2]:
        raise CliFailure(
            EXIT_INPUT, f"{path}: features {feats.shape} do not match input {want}"
        )
    return feats.reshape(want)


def _prep_image(graph: g.ModelGraph, name: str, path: str) -> Tensor:
    source = _input_source(graph, name)
    if source.get("type") != "image":
        raise CliFailure(EXIT_INPUT, f"input {name!r} does not take an image")
    want = graph.shapes[name]
    pixels = img.load_ppm(path)
    return img.image_to_input(pixels, want[0], want[1])


def _audio_input_names(graph: g.ModelGraph) -> list[str]:
    return [n for n in graph.input_names if _input_source(graph, n).get("type") == "mfcc"]


def _image_input_names(graph: g.ModelGraph) -> list[str]:
    return [n for n in graph.input_names if _input_source(graph, n).get("type") == "image"]


def _gather_inputs(graph: g.ModelGraph, args) -> dict[str, Tensor]:
    audio_names = _audio_input_names(graph)
    image_names = _image_input_names(graph)
    inputs: dict[str, Tensor] = {}
    try:
        if args.audio is None:
            raise CliFailure(EXIT_INPUT, "--audio is required")
        inputs[audio_names[0]] = _prep_audio(graph, audio_names[0], args.audio)
        if image_names:
            if args.image is None:
                raise CliFailure(EXIT_INPUT, "this model needs --image")
            inputs[image_names[0]] = _prep_image(graph, image_names[0], args.image)
        else:
            if args.audio2 is None:
                raise CliFailure(EXIT_INPUT, "this model needs --audio2")
            inputs[audio_names[1]] = _prep_audio(graph, audio_names[1], args.audio2)
    except TinymmError as exc:
        raise CliFailure(EXIT_INPUT, str(exc)) from exc
    except OSError as exc:
        raise CliFailure(EXIT_INPUT, str(exc)) from exc
    return inputs


def _synth_inputs(graph: g.ModelGraph, rng: np.random.Generator) -> dict[str, Tensor]:
    """Random tensors shaped like the post-preprocessing inputs."""
    return {
        name: Tensor(rng.normal(0.0, 1.0, size=graph.shapes[name]).astype(np.float32))
        for name in graph.input_names
    }


def _quantized_plan(graph, assignment_path, calibration_inputs):
    assignment = alloc.load_assignment(assignment_path).bits
    stats = g.calibrate(graph, calibration_inputs)
    return g.prepare_quantized_plan(graph, assignment, stats)


# -- subcommands ----------------------------------------------------------------

def cmd_inspect(args) -> int:
    graph = _load_model(args.model, args.weights, args.seed)
    report = g.cost_report(graph)
    print(format_table(report))
    _write_json(args.out, report_to_dict(report))
    return EXIT_OK


def cmd_allocate(args) -> int:
    graph = _load_model(args.model, args.weights, args.seed)
    report = g.cost_report(graph)
    weights = {}
    for layer in graph.weighted_layers:
        parts = [t.data.reshape(-1) for k, t in graph.weights[layer.name].items() if k != "b"]
        weights[layer.name] = Tensor(np.concatenate(parts))
    table = build_sensitivity_table(weights, (4, 8), graph.sensitivity_overrides)
    problem = alloc.build_problem(report, table, args.size_budget, args.bops_budget)
    for i, layer in enumerate(graph.weighted_layers):
        if isinstance(layer.bit_policy, int):  # config pins this layer's width
            c = problem.layers[i]
            k = c.options.index(layer.bit_policy)
            problem.layers[i] = alloc.LayerChoice(
                c.name, (c.options[k],), (c.omega[k],), (c.size_bits[k],), (c.bops[k],)
            )
    try:
        if args.sweep:
            budgets = sorted(int(b) for b in args.sweep.split(","))
            entries = alloc.budget_sweep(problem, budgets)
            doc = {
                "schema": "tinymm-sweep-v1",
                "entries": [
                    {"size_budget_bits": b, **alloc.assignment_to_dict(a)}
                    for b, a in entries
                ],
            }
            for b, a in entries:
                print(f"budget {b}: objective {a.objective:.6g}, size {a.size_bits}, bops {a.bops}")
            _write_json(args.out, doc)
            return EXIT_OK
        result = alloc.solve_exact(problem)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    for name, bits in result.bits.items():
        print(f"{name}: {bits}")
    print(f"objective {result.objective:.6g}, size_bits {result.size_bits}, bops {result.bops}")
    _write_json(args.out, alloc.assignment_to_dict(result))
    return EXIT_OK


def _calibration_pairs(graph: g.ModelGraph, cal_dir: str) -> list[dict[str, Tensor]]:
    root = Path(cal_dir)
    if not root.is_dir():
        raise CliFailure(EXIT_CALIBRATION, f"no such calibration directory: {cal_dir}")
    stems: dict[str, dict[str, Path]] = {}
    for path in sorted(root.iterdir()):
        parts = path.name.split(".")
        if len(parts) < 3:
            continue
        stem, input_name = ".".join(parts[:-2]), parts[-2]
        stems.setdefault(stem, {})[input_name] = path
    pairs = []
    try:
        for stem in sorted(stems):
            group = stems[stem]
            if set(group) != set(graph.input_names):
                continue
            pair = {}
            for name, path in group.items():
                if _input_source(graph, name).get("type") == "image":
                    pair[name] = _prep_image(graph, name, str(path))
                else:
                    pair[name] = _prep_audio(graph, name, str(path))
            pairs.append(pair)
    except (TinymmError, CliFailure) as exc:
        raise CliFailure(EXIT_CALIBRATION, f"calibration input failed: {exc}") from exc
    if not pairs:
        raise CliFailure(
            EXIT_CALIBRATION,
            f"{cal_dir} has no complete sample (need <stem>.<input>.wav/.ppm per input)",
        )
    return pairs


def cmd_quantize(args) -> int:
    graph = _load_model(args.model, args.weights, args.seed)
    try:
        assignment = alloc.load_assignment(args.assignment).bits
    except (TinymmError, OSError) as exc:
        raise CliFailure(EXIT_LOAD, f"cannot read assignment: {exc}") from exc
    pairs = _calibration_pairs(graph, args.calibration_dir)
    try:
        stats = g.calibrate(graph, pairs)
        plan = g.prepare_quantized_plan(graph, assignment, stats)
    except (EmptyCalibrationSetError, MissingCalibrationError) as exc:
        raise CliFailure(EXIT_CALIBRATION, str(exc)) from exc
    except TinymmError as exc:
        raise CliFailure(EXIT_LOAD, str(exc)) from exc
    records = g.plan_to_records(graph, plan)
    blobio.write_blob(args.out, records)
    payload = blobio.payload_size(records)
    print(f"wrote {args.out}: {len(records)} records, {payload} payload bytes")
    return EXIT_OK


def cmd_infer(args) -> int:
    graph = _load_model(args.model, args.weights, args.seed)
    inputs = _gather_inputs(graph, args)
    try:
        if args.quantized:
            plan = _quantized_plan(graph, args.quantized, [inputs])
            probs = g.infer(graph, inputs, mode="quantized", plan=plan,
                            parallel_branches=args.parallel)
        else:
            probs = g.infer(graph, inputs, parallel_branches=args.parallel)
    except TinymmError as exc:
        raise CliFailure(EXIT_INPUT, str(exc)) from exc
    except OSError as exc:
        raise CliFailure(EXIT_LOAD, str(exc)) from exc
    vec = [float(p) for p in probs.data]
    label = int(np.argmax(probs.data))
    print(f"class {label}")
    print("probs " + " ".join(f"{p:.6f}" for p in vec))
    _write_json(args.out, {"argmax": label, "probs": vec})
    return EXIT_OK


def cmd_bench(args) -> int:
    graph = _load_model(args.model, args.weights, args.seed)
    rng = np.random.default_rng(args.seed)
    inputs = _synth_inputs(graph, rng)
    mode = "quantized" if args.quantized else "float32"
    plan = None
    if args.quantized:
        try:
            plan = _quantized_plan(graph, args.quantized, [inputs])
        except TinymmError as exc:
            raise CliFailure(EXIT_CALIBRATION, str(exc)) from exc
        except OSError as exc:
            raise CliFailure(EXIT_LOAD, str(exc)) from exc
    timings = []
    for _ in range(args.reps):
        t0 = time.perf_counter()
        if plan is not None:
            g.infer(graph, inputs, mode="quantized", plan=plan)
        else:
            g.infer(graph, inputs)
        timings.append(time.perf_counter() - t0)
    doc = {
        "model": graph.name,
        "mode": mode,
        "reps": args.reps,
        "batch_size": 1,
        "min_s": min(timings),
        "median_s": statistics.median(timings),
        "mean_s": statistics.fmean(timings),
    }
    print(
        f"{doc['model']} [{mode}] reps={args.reps} batch=1: "
        f"min {doc['min_s']:.4f}s median {doc['median_s']:.4f}s mean {doc['mean_s']:.4f}s"
    )
    _write_json(args.out, doc)
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tinymm",
        description="Quantized two-branch multimodal CNN toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("model", help="config path or built-in name (covid, battlefield)")
        p.add_argument("--weights", help="weight blob path")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--out", help="machine-readable output path")

    p = sub.add_parser("inspect", help="per-layer parameter/MAC table")
    common(p)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("allocate", help="solve the bit-allocation problem")
    common(p)
    p.add_argument("--size-budget", type=int, help="weight payload budget in bits")
    p.add_argument("--bops-budget", type=int, help="bit-operations budget")
    p.add_argument("--sweep", help="comma-separated list of size budgets")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("quantize", help="calibrate and write a quantized blob")
    common(p)
    p.add_argument("--assignment", required=True, help="bit assignment file")
    p.add_argument("--calibration-dir", required=True)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("infer", help="classify one input pair")
    common(p)
    p.add_argument("--audio", help="first audio input (WAV)")
    p.add_argument("--audio2", help="second audio input (WAV)")
    p.add_argument("--image", help="image input (PPM P6)")
    p.add_argument("--quantized", help="bit assignment file for integer inference")
    p.add_argument("--parallel", action="store_true", help="run branches concurrently")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("bench", help="wall-clock latency over synthesized inputs")
    common(p)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--quantized", help="bit assignment file for integer inference")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if getattr(args, "reps", 1) < 1:
        print("--reps must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except CliFailure as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
