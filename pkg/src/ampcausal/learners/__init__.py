"""Base learners used by the effect estimators, plus JSON persistence."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .elastic_net import LinearModel, fit_elastic_net, soft_threshold
from .forest import ForestConfig, ForestModel, fit_random_forest
from .mlp import MlpConfig, MlpModel, fit_mlp

__all__ = [
    "ForestConfig",
    "ForestModel",
    "LinearModel",
    "MlpConfig",
    "MlpModel",
    "fit_elastic_net",
    "fit_mlp",
    "fit_random_forest",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "predict",
    "save_model",
    "soft_threshold",
]

FORMAT_VERSION = 1


def predict(model, X) -> np.ndarray:
    return model.predict(X)


def _enc(a) -> list:
    arr = np.asarray(a)
    if arr.dtype.kind in "iu":
        return arr.tolist()
    return [format(float(x), ".17g") for x in arr.ravel()]


def _dec(values, shape=None, dtype=float) -> np.ndarray:
    arr = np.array([float(v) for v in values] if dtype is float else values, dtype=dtype)
    return arr.reshape(shape) if shape is not None else arr


def model_to_dict(model) -> dict:
    if isinstance(model, LinearModel):
        return {
            "kind": "linear",
            "version": FORMAT_VERSION,
            "intercept": format(model.intercept, ".17g"),
            "coefficients": _enc(model.coefficients),
            "lam": model.lam,
            "alpha_mix": model.alpha_mix,
            "converged": model.converged,
            "n_iter": model.n_iter,
        }
    if isinstance(model, ForestModel):
        return {
            "kind": "forest",
            "version": FORMAT_VERSION,
            "config": asdict(model.config),
            "n_features": model.n_features,
            "feature": _enc(model.feature),
            "threshold": _enc(model.threshold),
            "left": _enc(model.left),
            "right": _enc(model.right),
            "value": _enc(model.value),
            "leaf_count": _enc(model.leaf_count),
            "offsets": _enc(model.offsets),
        }
    if isinstance(model, MlpModel):
        cfg = asdict(model.config)
        return {
            "kind": "mlp",
            "version": FORMAT_VERSION,
            "config": cfg,
            "layer_sizes": list(model.layer_sizes),
            "weights": [_enc(W) for W in model.weights],
            "biases": [_enc(b) for b in model.biases],
            "x_shift": _enc(model.x_shift),
            "x_scale": _enc(model.x_scale),
            "y_shift": format(model.y_shift, ".17g"),
            "y_scale": format(model.y_scale, ".17g"),
            "loss_history": _enc(model.loss_history),
        }
    raise TypeError(f"cannot serialise {type(model).__name__}")


def model_from_dict(d: dict):
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('version')}")
    kind = d["kind"]
    if kind == "linear":
        coef = _dec(d["coefficients"])
        return LinearModel(float(d["intercept"]), coef, d["lam"], d["alpha_mix"], d["converged"], d["n_iter"])
    if kind == "forest":
        cfg = ForestConfig(**d["config"])
        ints = {k: np.array(d[k], dtype=np.int64) for k in ("feature", "left", "right", "leaf_count", "offsets")}
        return ForestModel(
            cfg,
            d["n_features"],
            ints["feature"],
            _dec(d["threshold"]),
            ints["left"],
            ints["right"],
            _dec(d["value"]),
            ints["leaf_count"],
            ints["offsets"],
        )
    if kind == "mlp":
        cfg = d["config"]
        cfg["hidden"] = tuple(cfg["hidden"])
        sizes = tuple(d["layer_sizes"])
        weights = [_dec(w, (a, b)) for w, a, b in zip(d["weights"], sizes[:-1], sizes[1:])]
        biases = [_dec(bv) for bv in d["biases"]]
        return MlpModel(
            sizes,
            weights,
            biases,
            MlpConfig(**cfg),
            _dec(d["x_shift"]),
            _dec(d["x_scale"]),
            float(d["y_shift"]),
            float(d["y_scale"]),
            [float(v) for v in d["loss_history"]],
        )
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path: str | Path):
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
