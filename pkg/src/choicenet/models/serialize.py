"""Self-describing JSON weights files; arrays are stored as base64 float64 bytes."""
from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

FORMAT = "choicenet-weights/1"


def encode_array(a) -> dict:
    a = np.ascontiguousarray(np.asarray(a, dtype="<f8"))
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(float)


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return {"__array__": encode_array(obj)}
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if set(obj) == {"__array__"}:
            return decode_array(obj["__array__"])
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def dump(path, payload: dict):
    body = {"format": FORMAT, **_encode(payload)}
    Path(path).write_text(json.dumps(body, indent=1) + "\n", encoding="utf-8")


def load(path) -> dict:
    body = json.loads(Path(path).read_text(encoding="utf-8"))
    if body.get("format") != FORMAT:
        raise ValueError(f"{path}: not a {FORMAT} file")
    body.pop("format")
    return _decode(body)


def model_payload(model) -> dict:
    return {
        "arch": model.arch.to_dict(),
        "x_dims": list(model.x_dims),
        "d_z": model.d_z,
        "batch_norm": model.batch_norm,
        "dropout": model.dropout,
        "params": dict(model.params),
        "state": dict(model.state),
        "weight_names": list(model.weight_names),
    }


def model_from_payload(d: dict):
    from . import build_model
    from .arch import ArchSpec

    model = build_model(ArchSpec.from_dict(d["arch"]), d["x_dims"], d["d_z"],
                        batch_norm=d["batch_norm"], dropout=d["dropout"])
    model.params = dict(d["params"])
    model.state = dict(d["state"])
    model.weight_names = list(d["weight_names"])
    return model
