"""Built-in two-branch reference architectures.

"covid" pairs a cough-audio branch (203x20x1 MFCC input) with a
speech-audio branch (333x13x1) into a 2-way classifier head; "battlefield"
pairs an audio branch (44x13x1 MFCC) with a 32x32x3 image branch into a
4-way head. Weights are random with a fixed seed.

The cough/speech MFCC settings are reconstructions chosen so that a
2-second clip yields exactly the expected frame counts (the battlefield
audio settings follow directly from a 1-second clip at 22050 Hz with hop
512). Where a published layer listing is internally inconsistent, the
builders follow plain shape arithmetic; the affected speech-branch
intermediates come out as 331x11x32 and 163x3x16 but converge to the same
81x1x16 map and 1296-wide flatten.
"""
from __future__ import annotations

import numpy as np

from .blob import DTYPE_F32, Record
from .graph import SCHEMA, ModelGraph, assemble_model

DEFAULT_SEED = 7

REFERENCE_NAMES = ("covid", "battlefield")


def _branch(prefix: str, layers: list[dict]) -> list[dict]:
    """Prefix layer names and wire each layer to its predecessor."""
    out = []
    prev = None
    for doc in layers:
        doc = dict(doc)
        doc["name"] = f"{prefix}_{doc['name']}"
        if prev is not None:
            doc["inputs"] = [prev]
        prev = doc["name"]
        out.append(doc)
    return out


def _conv(name, out_channels, padding, bn=True):
    layers = [
        {"name": name, "kind": "conv2d", "out_channels": out_channels,
         "kernel_size": 3, "stride": 1, "padding": padding},
    ]
    if bn:
        layers.append({"name": f"{name}_bn", "kind": "batchnorm"})
    layers.append({"name": f"{name}_relu", "kind": "relu"})
    return layers


def _sep(name, out_channels, padding):
    return [
        {"name": name, "kind": "ds_conv2d", "out_channels": out_channels,
         "kernel_size": 3, "stride": 1, "padding": padding},
        {"name": f"{name}_relu", "kind": "relu"},
    ]


def _pool(name, size, rate=0.2):
    return [
        {"name": name, "kind": "maxpool", "pool_size": size},
        {"name": f"{name}_drop", "kind": "dropout", "rate": rate},
    ]


def _dense(name, width, rate=0.2):
    return [
        {"name": name, "kind": "dense", "out_features": width},
        {"name": f"{name}_relu", "kind": "relu"},
        {"name": f"{name}_drop", "kind": "dropout", "rate": rate},
    ]


def _covid_config() -> dict:
    cough = _branch("cough", [
        {"name": "in", "kind": "input", "shape": [203, 20, 1],
         "source": {"type": "mfcc", "sample_rate": 22050, "frame_length": 2048,
                    "hop_length": 218, "num_mel_filters": 40,
                    "num_coefficients": 20, "chunk_seconds": 2.0}},
        *_conv("conv1", 16, "valid"),
        *_sep("sep1", 32, "valid"),
        *_pool("pool1", 3),
        *_sep("sep2", 32, "valid"),
        *_pool("pool2", 3),
        {"name": "flat", "kind": "flatten"},
        *_dense("fc", 32),
    ])
    speech = _branch("speech", [
        {"name": "in", "kind": "input", "shape": [333, 13, 1],
         "source": {"type": "mfcc", "sample_rate": 16600, "frame_length": 1024,
                    "hop_length": 100, "num_mel_filters": 40,
                    "num_coefficients": 13, "chunk_seconds": 2.0}},
        *_conv("conv1", 64, "same"),
        *_sep("sep1", 32, "valid"),
        *_pool("pool1", 2),
        *_sep("sep2", 16, "valid"),
        *_pool("pool2", 2),
        {"name": "flat", "kind": "flatten"},
        *_dense("fc", 32),
    ])
    head = [
        {"name": "concat", "kind": "concat",
         "inputs": [cough[-1]["name"], speech[-1]["name"]]},
        *_branch("head", [
            {"name": "fc1", "kind": "dense", "out_features": 256, "inputs": ["concat"]},
            {"name": "fc1_relu", "kind": "relu"},
            {"name": "fc1_drop", "kind": "dropout", "rate": 0.2},
            {"name": "fc2", "kind": "dense", "out_features": 128},
            {"name": "fc2_relu", "kind": "relu"},
            {"name": "fc2_drop", "kind": "dropout", "rate": 0.2},
            {"name": "out", "kind": "dense", "out_features": 2},
            {"name": "probs", "kind": "softmax"},
        ]),
    ]
    return {"schema": SCHEMA, "name": "covid", "layers": cough + speech + head}


def _battlefield_config() -> dict:
    audio = _branch("audio", [
        {"name": "in", "kind": "input", "shape": [44, 13, 1],
         "source": {"type": "mfcc", "sample_rate": 22050, "frame_length": 2048,
                    "hop_length": 512, "num_mel_filters": 40,
                    "num_coefficients": 13, "chunk_seconds": 1.0}},
        *_conv("conv1", 64, "same"),
        *_sep("sep1", 32, "same"),
        *_pool("pool1", 2),
        *_sep("sep2", 64, "same"),
        *_pool("pool2", 2),
        {"name": "flat", "kind": "flatten"},
        *_dense("fc", 64),
    ])
    image = _branch("image", [
        {"name": "in", "kind": "input", "shape": [32, 32, 3],
         "source": {"type": "image", "height": 32, "width": 32}},
        *_conv("conv1", 64, "same"),
        *_sep("sep1", 64, "same"),
        *_pool("pool1", 2),
        *_sep("sep2", 64, "same"),
        *_pool("pool2", 2),
        {"name": "flat", "kind": "flatten"},
        *_dense("fc", 64),
    ])
    head = [
        {"name": "concat", "kind": "concat",
         "inputs": [audio[-1]["name"], image[-1]["name"]]},
        *_branch("head", [
            {"name": "fc1", "kind": "dense", "out_features": 64, "inputs": ["concat"]},
            {"name": "fc1_relu", "kind": "relu"},
            {"name": "fc1_drop", "kind": "dropout", "rate": 0.2},
            {"name": "out", "kind": "dense", "out_features": 4},
            {"name": "probs", "kind": "softmax"},
        ]),
    ]
    return {"schema": SCHEMA, "name": "battlefield", "layers": audio + image + head}


def reference_config(name: str) -> dict:
    if name == "covid":
        return _covid_config()
    if name == "battlefield":
        return _battlefield_config()
    raise KeyError(f"unknown reference model {name!r}; choose from {REFERENCE_NAMES}")


def _he_normal(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(np.float32)


def reference_weight_records(name: str, seed: int = DEFAULT_SEED) -> list[Record]:
    """Seeded random weights for every layer of a reference config."""
    config = reference_config(name)
    rng = np.random.default_rng(seed)
    records: list[Record] = []
    shapes: dict[str, tuple[int, ...]] = {}

    def put(rec_name, values):
        arr = np.asarray(values, dtype=np.float32)
        records.append(Record(rec_name, DTYPE_F32, arr.shape, arr.reshape(-1)))

    for doc in config["layers"]:
        lname, kind = doc["name"], doc["kind"]
        if kind == "input":
            shapes[lname] = tuple(doc["shape"])
            continue
        src = shapes[doc["inputs"][0]] if doc.get("inputs") else shapes[lname]
        if kind == "conv2d":
            k, n, m = int(doc["kernel_size"]), int(doc["out_channels"]), src[2]
            put(f"{lname}.w", _he_normal(rng, (k, k, m, n), k * k * m))
            put(f"{lname}.b", rng.normal(0.0, 0.01, size=n))
            h = src[0] if doc.get("padding") == "same" else src[0] - k + 1
            w = src[1] if doc.get("padding") == "same" else src[1] - k + 1
            shapes[lname] = (h, w, n)
        elif kind == "ds_conv2d":
            k, n, m = int(doc["kernel_size"]), int(doc["out_channels"]), src[2]
            put(f"{lname}.dw", _he_normal(rng, (k, k, m), k * k))
            put(f"{lname}.pw", _he_normal(rng, (1, 1, m, n), m))
            put(f"{lname}.b", rng.normal(0.0, 0.01, size=n))
            h = src[0] if doc.get("padding") == "same" else src[0] - k + 1
            w = src[1] if doc.get("padding") == "same" else src[1] - k + 1
            shapes[lname] = (h, w, n)
        elif kind == "batchnorm":
            c = src[-1]
            put(f"{lname}.gamma", rng.uniform(0.9, 1.1, size=c))
            put(f"{lname}.beta", rng.normal(0.0, 0.05, size=c))
            put(f"{lname}.mean", rng.normal(0.0, 0.05, size=c))
            put(f"{lname}.var", rng.uniform(0.8, 1.2, size=c))
            shapes[lname] = src
        elif kind == "dense":
            k, l = src[0], int(doc["out_features"])
            put(f"{lname}.w", _he_normal(rng, (k, l), k))
            put(f"{lname}.b", rng.normal(0.0, 0.01, size=l))
            shapes[lname] = (l,)
        elif kind == "maxpool":
            p = int(doc["pool_size"])
            shapes[lname] = (src[0] // p, src[1] // p, src[2])
        elif kind == "flatten":
            shapes[lname] = (int(np.prod(src)),)
        elif kind == "concat":
            a = shapes[doc["inputs"][0]]
            b = shapes[doc["inputs"][1]]
            shapes[lname] = (a[0] + b[0],)
        else:  # relu, dropout, softmax
            shapes[lname] = src
    return records


def build_reference(name: str, seed: int = DEFAULT_SEED) -> ModelGraph:
    """Assemble a reference model with seeded random weights."""
    records = {r.name: r for r in reference_weight_records(name, seed)}
    return assemble_model(reference_config(name), records)
