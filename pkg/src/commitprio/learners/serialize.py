"""Versioned JSON model documents.

GBDT trees are written as nested nodes, network weights as row-major nested
lists. Floats go through ``repr`` round-tripping, so load(save(m)) predicts
bit-identically.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import InputError
from .gbdt import GbdtModel, Tree
from .mlp import MlpModel

FORMAT = "commitprio.model"
VERSION = 1


def _tree_to_nested(t: Tree, i: int = 0) -> dict:
    if t.feature[i] < 0:
        return {"leaf": float(t.value[i])}
    return {
        "feature": int(t.feature[i]),
        "threshold": float(t.threshold[i]),
        "gain": float(t.gain[i]),
        "left": _tree_to_nested(t, int(t.left[i])),
        "right": _tree_to_nested(t, int(t.right[i])),
    }


def _tree_from_nested(doc: dict) -> Tree:
    feature, threshold, left, right, value, gain = [], [], [], [], [], []

    def visit(node) -> int:
        i = len(feature)
        for lst in (feature, threshold, left, right, value, gain):
            lst.append(None)
        if "leaf" in node:
            feature[i], threshold[i], left[i], right[i], value[i], gain[i] = -1, 0.0, -1, -1, node["leaf"], 0.0
            return i
        feature[i], threshold[i], value[i], gain[i] = node["feature"], node["threshold"], 0.0, node["gain"]
        left[i] = visit(node["left"])
        right[i] = visit(node["right"])
        return i

    visit(doc)
    return Tree(np.array(feature, dtype=int), np.array(threshold, dtype=float),
                np.array(left, dtype=int), np.array(right, dtype=int),
                np.array(value, dtype=float), np.array(gain, dtype=float))


def model_to_dict(model) -> dict:
    if isinstance(model, GbdtModel):
        return {
            "format": FORMAT, "version": VERSION, "kind": "gbdt",
            "n_features": model.n_features,
            "feature_names": list(model.feature_names),
            "shrinkage": model.shrinkage,
            "base_score": model.base_score,
            "pos_weight": model.pos_weight,
            "gain_by_feature": [float(g) for g in model.gain_by_feature],
            "train_loss": [float(v) for v in model.train_loss],
            "trees": [_tree_to_nested(t) for t in model.trees],
        }
    if isinstance(model, MlpModel):
        return {
            "format": FORMAT, "version": VERSION, "kind": "mlp",
            "n_features": model.n_features,
            "feature_names": list(model.feature_names),
            "architecture": [model.n_features] + [int(W.shape[1]) for W in model.weights],
            "weights": [W.tolist() for W in model.weights],
            "biases": [b.tolist() for b in model.biases],
            "mean": model.mean.tolist(),
            "std": model.std.tolist(),
        }
    raise TypeError(f"cannot serialise {type(model).__name__}")


def model_from_dict(doc: dict):
    if doc.get("format") != FORMAT:
        raise InputError("not a commitprio model document")
    if doc.get("version") != VERSION:
        raise InputError(f"unsupported model document version {doc.get('version')}")
    kind = doc.get("kind")
    if kind == "gbdt":
        return GbdtModel(
            trees=[_tree_from_nested(t) for t in doc["trees"]],
            shrinkage=doc["shrinkage"],
            base_score=doc["base_score"],
            pos_weight=doc["pos_weight"],
            n_features=doc["n_features"],
            feature_names=tuple(doc["feature_names"]),
            gain_by_feature=np.array(doc["gain_by_feature"], dtype=float),
            train_loss=list(doc["train_loss"]),
        )
    if kind == "mlp":
        return MlpModel(
            weights=[np.array(W, dtype=float) for W in doc["weights"]],
            biases=[np.array(b, dtype=float) for b in doc["biases"]],
            mean=np.array(doc["mean"], dtype=float),
            std=np.array(doc["std"], dtype=float),
            feature_names=tuple(doc["feature_names"]),
        )
    raise InputError(f"unknown model kind {kind!r}")


def save_model(model, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n")


def load_model(path: str | Path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"missing file: {path}")
    return model_from_dict(json.loads(path.read_text()))
