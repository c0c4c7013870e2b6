"""Transition-state clustering on top of a trained joint HMM.

Frames where the most-likely state under the human-only observations
disagrees with the most-likely state under the joint observations mark
transitions between interaction phases. Those frames, widened by a window,
train a second small HMM over the same feature space; at prediction time its
states take over wherever they explain the human observation better than the
base mixture does.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import FeatureSequence
from .gaussian import _conditional_affine, log_density, marginalize
from .hmm import (
    HmmModel,
    SegmentLabels,
    TrainingError,
    _frames_of,
    baum_welch,
    forward,
    gmr_predict,
    init_temporal_bins,
    viterbi_labels,
)

__all__ = [
    "TscModel",
    "SegmentLabels",
    "dilate_mask",
    "detect_transition_states",
    "fit",
    "predict",
]

logger = logging.getLogger(__name__)

MODES = ("gate", "blend")


@dataclass(frozen=True)
class TscModel:
    """Base HMM plus the transition HMM trained on windowed mismatch frames.

    fallback is set when too few transition samples existed to train the
    second model; predictions then defer entirely to the base model.
    """

    base: HmmModel
    transition: HmmModel | None
    window: int
    mode: str = "gate"
    fallback: bool = False

    def __post_init__(self):
        if self.window < 0:
            raise ValueError("window must be non-negative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.fallback:
            if self.transition is not None:
                raise ValueError("fallback model must not carry a transition HMM")
        else:
            if self.transition is None:
                raise ValueError("non-fallback model requires a transition HMM")
            if self.transition.dim != self.base.dim:
                raise ValueError(
                    f"transition HMM dimension {self.transition.dim} "
                    f"differs from base {self.base.dim}"
                )


def dilate_mask(mask, w: int) -> np.ndarray:
    """Widen every true entry by w frames on each side, clipped to bounds."""
    if w < 0:
        raise ValueError("window must be non-negative")
    mask = np.asarray(mask, dtype=bool)
    if w == 0 or mask.size == 0:
        return mask.copy()
    kernel = np.ones(2 * w + 1)
    return np.convolve(mask.astype(float), kernel, mode="same") > 0.0


def detect_transition_states(
    base: HmmModel, demos: Sequence, w: int
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Windowed label-mismatch frames across a demo batch.

    A frame mismatches when the most-likely state from the human-only
    forward pass differs from the most-likely state from the joint pass.
    Returns the pooled joint observations at masked frames as an (N, D)
    array plus one dilated boolean mask per demo.
    """
    human_idx = list(base.split.human_idx)
    samples = []
    masks = []
    for demo in demos:
        frames = _frames_of(demo)
        joint_labels = viterbi_labels(base, frames).labels
        human_labels = viterbi_labels(base, frames[:, human_idx], human_idx).labels
        mask = dilate_mask(joint_labels != human_labels, w)
        masks.append(mask)
        samples.append(frames[mask])
    pooled = np.vstack(samples) if samples else np.zeros((0, base.dim))
    return pooled, masks


def _masked_runs(frames: np.ndarray, mask: np.ndarray) -> list[np.ndarray]:
    """Contiguous masked stretches as separate short sequences."""
    runs = []
    start = None
    for t, flag in enumerate(mask):
        if flag and start is None:
            start = t
        elif not flag and start is not None:
            runs.append(frames[start:t])
            start = None
    if start is not None:
        runs.append(frames[start:])
    return runs


def fit(
    base: HmmModel,
    demos: Sequence,
    num_states: int = 3,
    w: int = 2,
    eps: float = 1e-2,
    max_iter: int = 40,
    tol: float = 1e-4,
) -> TscModel:
    """Detect transition frames and train the transition HMM on them.

    Requires at least num_states * (D + 1) pooled samples to attempt a fit;
    otherwise returns a fallback model. Contiguous masked runs are kept as
    separate training sequences so no artificial transitions appear between
    unrelated events.
    """
    if num_states < 1:
        raise ValueError("num_states must be at least 1")
    samples, masks = detect_transition_states(base, demos, w)
    if len(samples) < num_states * (base.dim + 1):
        logger.info(
            "only %d transition samples for %d states over %d dims; falling back "
            "to the base model",
            len(samples),
            num_states,
            base.dim,
        )
        return TscModel(base=base, transition=None, window=w, fallback=True)

    runs = []
    for demo, mask in zip(demos, masks):
        frames = _frames_of(demo)
        runs.extend(FeatureSequence(r, base.split) for r in _masked_runs(frames, mask))
    # bins need sequences at least num_states long; short corpora fall back
    # to initializing from the pooled samples as one stretch
    init_runs = [r for r in runs if len(r) >= num_states]
    if not init_runs:
        init_runs = [FeatureSequence(samples, base.split)]
    init = init_temporal_bins(init_runs, num_states, eps)
    transition, _ = baum_welch(init, runs, max_iter, tol, eps)
    return TscModel(base=base, transition=transition, window=w, fallback=False)


def predict(model: TscModel, human_obs) -> FeatureSequence:
    """Predict robot dims, letting transition states take over where they win.

    gate mode: a frame switches to the transition model when the best
    transition state explains the human observation better than the base
    mixture does; unswitched frames reproduce the base prediction exactly.
    blend mode: base and transition states are weighted jointly per frame.
    """
    base_pred = gmr_predict(model.base, human_obs)
    if model.fallback:
        return base_pred

    human_idx = list(model.base.split.human_idx)
    frames = _frames_of(human_obs)
    trans_marg = [marginalize(g, human_idx) for g in model.transition.emissions]
    log_b_trans = np.column_stack([log_density(frames, g) for g in trans_marg])
    trans_cond = np.stack(
        [
            frames @ gain.T + offset
            for gain, offset, _ in (
                _conditional_affine(g, human_idx) for g in model.transition.emissions
            )
        ],
        axis=1,
    )

    h = forward(model.base, frames, human_idx).h
    base_marg = [marginalize(g, human_idx) for g in model.base.emissions]
    log_b_base = np.column_stack([log_density(frames, g) for g in base_marg])

    if model.mode == "gate":
        with np.errstate(divide="ignore"):
            log_mix_base = _logsumexp_rows(np.log(h) + log_b_base)
        fire = log_b_trans.max(axis=1) > log_mix_base
        out = np.array(base_pred.frames)
        if np.any(fire):
            resp = _softmax_rows(log_b_trans[fire])
            out[fire] = np.einsum("ts,tsr->tr", resp, trans_cond[fire])
        return FeatureSequence(out, base_pred.split)

    # blend: joint responsibilities over S + S_t components
    with np.errstate(divide="ignore"):
        log_w = np.hstack([np.log(h) + log_b_base, log_b_trans])
    resp = _softmax_rows(log_w)
    base_cond = np.stack(
        [
            frames @ gain.T + offset
            for gain, offset, _ in (
                _conditional_affine(g, human_idx) for g in model.base.emissions
            )
        ],
        axis=1,
    )
    cond = np.concatenate([base_cond, trans_cond], axis=1)
    out = np.einsum("ts,tsr->tr", resp, cond)
    return FeatureSequence(out, base_pred.split)


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    peak = a.max(axis=1)
    safe = np.where(np.isfinite(peak), peak, 0.0)
    return safe + np.log(np.exp(a - safe[:, None]).sum(axis=1))


def _softmax_rows(a: np.ndarray) -> np.ndarray:
    peak = a.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(peak)):
        raise TrainingError("responsibility weights collapsed to zero mass")
    e = np.exp(a - peak)
    return e / e.sum(axis=1, keepdims=True)
