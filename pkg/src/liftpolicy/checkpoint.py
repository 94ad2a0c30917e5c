"""JSON checkpoints, format tag ``liftpolicy-ckpt-v1``.

Layout::

    {
      "format": "liftpolicy-ckpt-v1",
      "config": {<WaveletPolicyConfig fields>},
      "params": {"<name>": {"shape": [...], "data": [row-major doubles]}, ...},
      "extra":  {...}          # optimizer moments, step, normalizers, ...
    }

Python's ``json`` writes floats with ``repr`` so doubles round-trip exactly.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

FORMAT = "liftpolicy-ckpt-v1"


def encode_arrays(arrays: Dict[str, np.ndarray]) -> dict:
    return {
        k: {"shape": list(np.shape(v)), "data": np.asarray(v, dtype=np.float64).ravel().tolist()}
        for k, v in arrays.items()
    }


def decode_arrays(blob: dict) -> Dict[str, np.ndarray]:
    out = {}
    for k, v in blob.items():
        arr = np.asarray(v["data"], dtype=np.float64)
        shape = tuple(v["shape"])
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise ValueError(f"{k}: {arr.size} values for shape {shape}")
        out[k] = arr.reshape(shape)
    return out


def save_checkpoint(path, config, params: Dict[str, np.ndarray], extra: dict | None = None) -> None:
    doc = {
        "format": FORMAT,
        "config": dataclasses.asdict(config),
        "params": encode_arrays(params),
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> Tuple[dict, Dict[str, np.ndarray], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {doc.get('format')!r}")
    return doc["config"], decode_arrays(doc["params"]), doc.get("extra", {})
