"""Versioned JSON persistence for trained models.

Parameters are stored as plain decimal JSON numbers (shortest repr), so a
save/load round trip reproduces every value exactly. Files carry an explicit
format_version; unknown versions are rejected rather than guessed at.
"""

from __future__ import annotations

import json

import numpy as np

from .data import DimensionSplit
from .gaussian import GaussianState
from .hmm import HmmModel
from .tsc import TscModel

__all__ = ["FORMAT_VERSION", "save_model", "load_model"]

FORMAT_VERSION = 1


def _hmm_to_dict(model: HmmModel) -> dict:
    return {
        "priors": model.priors.tolist(),
        "transitions": model.transitions.tolist(),
        "emissions": [
            {"mean": g.mean.tolist(), "cov": g.cov.tolist()} for g in model.emissions
        ],
        "split": {
            "human_idx": list(model.split.human_idx),
            "robot_idx": list(model.split.robot_idx),
        },
    }


def _hmm_from_dict(d: dict) -> HmmModel:
    split = DimensionSplit(
        tuple(d["split"]["human_idx"]), tuple(d["split"]["robot_idx"])
    )
    emissions = tuple(
        GaussianState(np.array(e["mean"]), np.array(e["cov"])) for e in d["emissions"]
    )
    return HmmModel(np.array(d["priors"]), np.array(d["transitions"]), emissions, split)


def save_model(model, path) -> None:
    if isinstance(model, TscModel):
        payload = {
            "base": _hmm_to_dict(model.base),
            "transition": None if model.fallback else _hmm_to_dict(model.transition),
            "window": model.window,
            "mode": model.mode,
            "fallback": model.fallback,
        }
        kind = "tsc"
    elif isinstance(model, HmmModel):
        payload = _hmm_to_dict(model)
        kind = "hmm"
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    doc = {"format_version": FORMAT_VERSION, "model_kind": kind, "model": payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: not a model file")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(
            f"{path}: unsupported format_version {version!r}, expected {FORMAT_VERSION}"
        )
    kind = doc.get("model_kind")
    payload = doc.get("model")
    if kind == "hmm":
        return _hmm_from_dict(payload)
    if kind == "tsc":
        return TscModel(
            base=_hmm_from_dict(payload["base"]),
            transition=(
                None
                if payload["fallback"]
                else _hmm_from_dict(payload["transition"])
            ),
            window=int(payload["window"]),
            mode=payload["mode"],
            fallback=bool(payload["fallback"]),
        )
    raise ValueError(f"{path}: unknown model_kind {kind!r}")
