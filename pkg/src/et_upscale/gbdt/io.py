"""JSON model files.

Floats (thresholds, leaf values, gains, base score) are written as
hexadecimal strings so a loaded model predicts bit-identically on any
platform. A ``<name>.schema.json`` sidecar with the feature schema is
written next to the model.
"""
from __future__ import annotations

import json
from pathlib import Path

from ..errors import MalformedModelError, ModelVersionError, SchemaMismatchError
from ..features import FeatureSchema
from .config import TrainConfig
from .ensemble import Ensemble
from .tree import Tree

FORMAT = "et-upscale-model"
VERSION = 1


def _node(tree, i):
    if tree.left[i] < 0:
        return {"leaf": float(tree.value[i]).hex(), "count": int(tree.count[i])}
    return {
        "feature": int(tree.feature[i]),
        "threshold": float(tree.threshold[i]).hex(),
        "default_left": bool(tree.nan_left[i]),
        "gain": float(tree.gain[i]).hex(),
        "count": int(tree.count[i]),
        "left": _node(tree, tree.left[i]),
        "right": _node(tree, tree.right[i]),
    }


def _tree_from(doc):
    cols = {k: [] for k in ("feature", "threshold", "nan_left", "left", "right", "value", "gain", "count")}

    def visit(node):
        i = len(cols["value"])
        for k in cols:
            cols[k].append(None)
        cols["count"][i] = int(node["count"])
        if "leaf" in node:
            cols["feature"][i], cols["threshold"][i], cols["nan_left"][i] = -1, float("nan"), True
            cols["left"][i] = cols["right"][i] = -1
            cols["value"][i], cols["gain"][i] = float.fromhex(node["leaf"]), 0.0
            return i
        cols["feature"][i] = int(node["feature"])
        cols["threshold"][i] = float.fromhex(node["threshold"])
        cols["nan_left"][i] = bool(node["default_left"])
        cols["gain"][i] = float.fromhex(node["gain"])
        cols["value"][i] = float("nan")
        cols["left"][i] = visit(node["left"])
        cols["right"][i] = visit(node["right"])
        return i

    visit(doc)
    return Tree(*cols.values())


def model_to_dict(model: Ensemble) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": model.config.to_dict(),
        "n_features": model.n_features,
        "schema": model.schema.to_dict() if model.schema is not None else None,
        "schema_digest": model.schema.digest if model.schema is not None else None,
        "base_score": float(model.base_score).hex(),
        "train_rmse": [float(v).hex() for v in model.train_rmse],
        "trees": [_node(t, 0) for t in model.trees],
    }


def model_from_dict(doc: dict) -> Ensemble:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise MalformedModelError("not an et-upscale model document")
    if doc.get("version") != VERSION:
        raise ModelVersionError(f"unsupported model version {doc.get('version')!r}")
    try:
        schema = FeatureSchema.from_dict(doc["schema"]) if doc["schema"] is not None else None
        if schema is not None and schema.digest != doc["schema_digest"]:
            raise MalformedModelError("embedded schema does not match its digest")
        return Ensemble(
            base_score=float.fromhex(doc["base_score"]),
            trees=[_tree_from(t) for t in doc["trees"]],
            config=TrainConfig.from_dict(doc["config"]),
            n_features=int(doc["n_features"]),
            schema=schema,
            train_rmse=[float.fromhex(v) for v in doc.get("train_rmse", [])],
        )
    except (KeyError, TypeError, ValueError, RecursionError) as exc:
        raise MalformedModelError(f"malformed model: {exc}") from exc


def schema_sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".schema.json")


def save_model(model: Ensemble, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model), separators=(",", ":")))
    if model.schema is not None:
        schema_sidecar(path).write_text(model.schema.to_json())
    return path


def load_model(path, schema: FeatureSchema | None = None) -> Ensemble:
    """Read a model file; with ``schema`` given, refuse a model trained on
    a different feature layout."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedModelError(f"{path}: not valid JSON ({exc})") from exc
    model = model_from_dict(doc)
    if schema is not None and (model.schema is None or model.schema.digest != schema.digest):
        raise SchemaMismatchError(f"{path}: model schema differs from the supplied schema")
    return model
