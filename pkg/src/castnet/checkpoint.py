"""JSON checkpoints: parameter name -> shape + flat values."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .tensor import Tensor, parameter


def params_to_json(params: dict[str, Tensor]) -> dict[str, Any]:
    return {name: {"shape": list(p.shape), "values": p.data.reshape(-1).tolist()}
            for name, p in params.items()}


def params_from_json(doc: dict[str, Any]) -> dict[str, Tensor]:
    return {name: parameter(np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"]))
            for name, entry in doc.items()}


def save_checkpoint(path: str | Path, params: dict[str, Tensor], **extra: Any) -> None:
    """Write params plus any extra JSON-serializable blocks (config, fingerprints)."""
    doc = dict(extra)
    doc["params"] = params_to_json(params)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_checkpoint(path: str | Path) -> tuple[dict[str, Tensor], dict[str, Any]]:
    doc = json.loads(Path(path).read_text())
    params = params_from_json(doc.pop("params"))
    return params, doc
