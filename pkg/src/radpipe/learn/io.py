"""Model files for every learner, in the shared versioned document format."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import numpy as np

from ..errors import ModelFormatError
from ..serial import array_doc, doc_array, load_document, save_document
from .linear import LinearModel
from .tree import Forest, Leaf, Split, predict_tree, tree_from_doc, tree_to_doc

Model = Union[LinearModel, Leaf, Split, Forest]


def model_body(model: Model, keys: Sequence[str]) -> tuple[str, dict]:
    body: dict = {"feature_keys": list(keys)}
    if isinstance(model, LinearModel):
        if len(model.w) != len(keys):
            raise ValueError(f"model has {len(model.w)} weights but {len(keys)} feature keys")
        body.update(model=model.kind, w=array_doc(model.w), b=float(model.b))
        return "linear", body
    if isinstance(model, Forest):
        body.update(mtry=model.mtry, n_features=model.n_features, seeds=list(model.seeds),
                    importances=array_doc(model.importances),
                    trees=[tree_to_doc(t) for t in model.trees])
        return "forest", body
    if isinstance(model, (Leaf, Split)):
        body["tree"] = tree_to_doc(model)
        return "tree", body
    raise TypeError(f"not a model: {type(model).__name__}")


def save_model(path: str | Path, model: Model, keys: Sequence[str]) -> None:
    kind, body = model_body(model, keys)
    save_document(path, kind, body)


def load_model(path: str | Path) -> tuple[Model, list[str]]:
    doc = load_document(path, None)
    kind = doc.get("kind")
    try:
        keys = list(doc["feature_keys"])
        if kind == "linear":
            w = doc_array(doc["w"])
            if doc["model"] not in ("lasso", "logistic", "svm") or w.shape != (len(keys),):
                raise ModelFormatError(f"{path}: inconsistent linear model")
            return LinearModel(w, float(doc["b"]), doc["model"]), keys
        if kind == "tree":
            return tree_from_doc(doc["tree"]), keys
        if kind == "forest":
            trees = [tree_from_doc(t) for t in doc["trees"]]
            imp = doc_array(doc["importances"])
            return Forest(trees, [int(s) for s in doc["seeds"]], int(doc["mtry"]),
                          int(doc["n_features"]), imp), keys
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed {kind} model ({exc})") from None
    raise ModelFormatError(f"{path}: not a learner model (kind {kind!r})")


def predict(model: Model, X) -> np.ndarray:
    X = np.asarray(X)
    if isinstance(model, (LinearModel, Forest)):
        return model.predict(X)
    return predict_tree(model, X)


def predict_score(model: LinearModel, X) -> np.ndarray:
    return model.decision_function(X)
