"""JSON model checkpoints with base64-packed float64 parameter arrays."""
from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from ..features import MinMaxFeatureScaler
from .models import CogNetwork, COGClassifier, EnsembleMLPClassifier, _MlpMember

CHECKPOINT_SCHEMA = "prunex.checkpoint/1"


class CheckpointError(ValueError):
    pass


def _pack(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _unpack(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(np.float64)


def _load_into(target: np.ndarray, d: dict, name: str) -> None:
    a = _unpack(d)
    if a.shape != target.shape:
        raise CheckpointError(f"parameter {name}: shape {a.shape} != {target.shape}")
    target[...] = a


def to_dict(model) -> dict:
    if isinstance(model, COGClassifier):
        net = model.network_
        return {
            "schema": CHECKPOINT_SCHEMA,
            "kind": "cog",
            "architecture": net.architecture(),
            "estimator": model.get_params(),
            "alpha": model.alpha_,
            "scaler": model.scaler_.to_dict() if model.scaler_ is not None else None,
            "params": {name: _pack(p) for name, p, _ in net.named_params()},
            "loss_curve": model.loss_curve_,
        }
    if isinstance(model, EnsembleMLPClassifier):
        return {
            "schema": CHECKPOINT_SCHEMA,
            "kind": "ensemble_mlp",
            "architecture": {"n_features": model.n_features_in_, "hidden": list(model.hidden)},
            "estimator": {**model.get_params(), "member_seeds": model._seeds()},
            "alpha": model.alpha_,
            "scaler": model.scaler_.to_dict() if model.scaler_ is not None else None,
            "members": [[_pack(p) for p in m.mlp.params] for m in model.members_],
            "loss_curves": model.loss_curves_,
        }
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def from_dict(d: dict):
    if d.get("schema") != CHECKPOINT_SCHEMA:
        raise CheckpointError(f"checkpoint schema {d.get('schema')!r} != {CHECKPOINT_SCHEMA!r}")
    est = dict(d["estimator"])
    scaler = MinMaxFeatureScaler.from_dict(d["scaler"]) if d["scaler"] is not None else None
    if d["kind"] == "cog":
        arch = d["architecture"]
        est["trunk"] = tuple(est["trunk"])
        model = COGClassifier(**est)
        net = CogNetwork(arch["n_heads"], arch["n_channels"], arch["embed_dim"], arch["trunk"])
        names = [name for name, _, _ in net.named_params()]
        if sorted(names) != sorted(d["params"]):
            raise CheckpointError("parameter names do not match the architecture")
        for name, p, _ in net.named_params():
            _load_into(p, d["params"][name], name)
        model.network_ = net
        model.n_features_in_ = arch["n_channels"]
        model.loss_curve_ = d["loss_curve"]
    elif d["kind"] == "ensemble_mlp":
        arch = d["architecture"]
        est["hidden"] = tuple(est["hidden"])
        model = EnsembleMLPClassifier(**est)
        model.members_ = []
        for k, packed in enumerate(d["members"]):
            m = _MlpMember(arch["n_features"], arch["hidden"], 0)
            if len(packed) != len(m.mlp.params):
                raise CheckpointError(f"member {k}: wrong parameter count")
            for i, (p, a) in enumerate(zip(m.mlp.params, packed)):
                _load_into(p, a, f"member{k}.{i}")
            model.members_.append(m)
        model.n_features_in_ = arch["n_features"]
        model.loss_curves_ = d["loss_curves"]
    else:
        raise CheckpointError(f"unknown model kind {d['kind']!r}")
    model.classes_ = np.array([0, 1])
    model.scaler_ = scaler
    model.alpha_ = d["alpha"]
    return model


def save_checkpoint(model, path) -> None:
    Path(path).write_text(json.dumps(to_dict(model), sort_keys=True) + "\n")


def load_checkpoint(path):
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a JSON checkpoint ({exc})") from exc
    return from_dict(d)
