"""JSON model artifacts.

Layout::

    {"format": "anvil-model", "version": 1, "framework": "anvil" | "ffdnn" | "knn",
     "config": {...}, "registry": {"sha256": ..., "ap_ids": [...]},
     "rp_coords": [[x, y], ...], "tensors": {name: {"shape": [...], "data": [...]}},
     ...framework specific fields...}

Floats are written with ``repr`` precision, so a load/save cycle is exact and
the bytes depend only on the model.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .attention import AnvilConfig, AttentionModel
from .baselines import AdTrainConfig, FfdnnModel, KnnConfig, KnnModel
from .errors import DataError, SchemaError
from .fingerprint import ApRegistry, load_database

FORMAT = "anvil-model"
VERSION = 1


def _tensor(a):
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _array(doc):
    return np.array(doc["data"], dtype=float).reshape(doc["shape"])


def _registry_doc(reg: ApRegistry):
    return {"sha256": reg.digest(), "ap_ids": list(reg.ap_ids)}


def _registry(doc):
    reg = ApRegistry(tuple(doc["ap_ids"]))
    if reg.digest() != doc["sha256"]:
        raise SchemaError("registry hash does not match its identifiers")
    return reg


def model_to_dict(model, data_ref=None) -> dict:
    doc = {"format": FORMAT, "version": VERSION}
    if isinstance(model, AttentionModel):
        doc.update(framework="anvil", config=model.config.to_dict(),
                   keys=_tensor(model.keys), values=_tensor(model.values),
                   tensors={k: _tensor(v) for k, v in model.params.items()})
    elif isinstance(model, FfdnnModel):
        doc.update(framework="ffdnn", config=model.config.to_dict(),
                   tensors={k: _tensor(v) for k, v in model.params.items()})
    elif isinstance(model, KnnModel):
        if data_ref is None:
            raise DataError("a KNN model is stored as a reference to its training data")
        path, rows = data_ref
        doc.update(framework="knn", config={"k": model.config.k, "metric": model.config.metric},
                   data={"path": str(path), "rows": [int(i) for i in rows]})
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    reg = model.registry
    doc["registry"] = _registry_doc(reg)
    coords = model.db.rp_coords if isinstance(model, KnnModel) else model.rp_coords
    doc["rp_coords"] = np.asarray(coords, dtype=float).tolist()
    return doc


def save_model(model, path, data_ref=None) -> Path:
    """Write ``model``; KNN models need ``data_ref=(csv_path, row_indices)``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, data_ref), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    return path


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model {path}: {exc}") from None
    if doc.get("format") != FORMAT or "version" not in doc:
        raise SchemaError(f"{path} is not a model artifact")
    if doc["version"] != VERSION:
        raise SchemaError(f"unsupported model version {doc['version']}")
    reg = _registry(doc["registry"])
    coords = np.array(doc["rp_coords"], dtype=float).reshape(-1, 2)
    kind = doc["framework"]
    if kind == "anvil":
        params = {k: _array(v) for k, v in doc["tensors"].items()}
        return AttentionModel(AnvilConfig.from_dict(doc["config"]), params, _array(doc["keys"]),
                              _array(doc["values"]), reg, coords)
    if kind == "ffdnn":
        params = {k: _array(v) for k, v in doc["tensors"].items()}
        return FfdnnModel(AdTrainConfig.from_dict(doc["config"]), params, reg, coords)
    if kind == "knn":
        db = load_database(doc["data"]["path"])
        if db.registry.digest() != reg.digest():
            raise SchemaError("KNN reference data no longer matches the stored registry")
        db = db.subset(doc["data"]["rows"])
        return KnnModel(db, KnnConfig(**doc["config"]))
    raise SchemaError(f"unknown framework tag {kind!r}")
