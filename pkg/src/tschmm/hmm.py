"""Gaussian-emission hidden Markov models over paired trajectories.

Provides temporal-bin initialization, the per-step normalized (scaled)
forward recursion with log-likelihood recovered from the scaling constants,
Baum-Welch re-estimation with covariance regularization, marginal sub-models
over a dimension subset, per-frame most-likely-state labels, and conditional
prediction of the unobserved dimensions by Gaussian mixture regression.

Emission densities enter the recursions through their log values; each step
shifts by the largest log density before exponentiating, so the scaled
recursion never underflows even for long, high-dimensional sequences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .data import DimensionSplit, FeatureSequence
from .gaussian import (
    GaussianState,
    _conditional_affine,
    log_density,
    marginalize,
    regularize,
)

__all__ = [
    "HmmModel",
    "ForwardResult",
    "SegmentLabels",
    "TrainingError",
    "DimensionSplit",
    "init_temporal_bins",
    "forward",
    "baum_welch",
    "marginal_model",
    "gmr_predict",
    "viterbi_labels",
]

logger = logging.getLogger(__name__)

_SIMPLEX_ATOL = 1e-9
# below this total responsibility a state is considered collapsed
_RESP_FLOOR = 1e-12


class TrainingError(RuntimeError):
    """A numerical failure that makes a model untrainable or unevaluable."""


@dataclass(frozen=True)
class HmmModel:
    """Immutable Gaussian-emission HMM.

    priors:      state distribution at the first frame, length S
    transitions: row-stochastic S x S matrix
    emissions:   one GaussianState per hidden state, all of dimension D
    split:       partition of the D dims into human and robot indices
    """

    priors: np.ndarray
    transitions: np.ndarray
    emissions: tuple[GaussianState, ...]
    split: DimensionSplit

    def __post_init__(self):
        priors = np.array(self.priors, dtype=float)
        trans = np.array(self.transitions, dtype=float)
        emissions = tuple(self.emissions)
        if priors.ndim != 1 or priors.size == 0:
            raise ValueError("priors must be a non-empty vector")
        s = priors.size
        if not np.all(np.isfinite(priors)) or np.any(priors < 0):
            raise ValueError("priors must be finite and non-negative")
        if abs(priors.sum() - 1.0) > _SIMPLEX_ATOL:
            raise ValueError(f"priors sum to {priors.sum()!r}, expected 1")
        if trans.shape != (s, s):
            raise ValueError(f"transitions must be {s}x{s}, got {trans.shape}")
        if not np.all(np.isfinite(trans)) or np.any(trans < 0):
            raise ValueError("transitions must be finite and non-negative")
        row_err = np.max(np.abs(trans.sum(axis=1) - 1.0))
        if row_err > _SIMPLEX_ATOL:
            raise ValueError(f"transition rows deviate from 1 by {row_err!r}")
        if len(emissions) != s:
            raise ValueError(f"expected {s} emissions, got {len(emissions)}")
        dims = {g.dim for g in emissions}
        if len(dims) != 1:
            raise ValueError(f"emissions disagree on dimension: {sorted(dims)}")
        d = emissions[0].dim
        if self.split.dim != d:
            raise ValueError(f"split covers {self.split.dim} dims, emissions have {d}")
        priors.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "transitions", trans)
        object.__setattr__(self, "emissions", emissions)

    @property
    def num_states(self) -> int:
        return self.priors.size

    @property
    def dim(self) -> int:
        return self.emissions[0].dim


@dataclass(frozen=True)
class ForwardResult:
    """Forward pass output: h rows are the normalized forward variables."""

    h: np.ndarray
    log_alpha: np.ndarray
    log_likelihood: float

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        la = np.asarray(self.log_alpha, dtype=float)
        h.setflags(write=False)
        la.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "log_alpha", la)


@dataclass(frozen=True)
class SegmentLabels:
    """Per-frame most-likely-state labels and a transition-frame mask."""

    labels: np.ndarray
    mismatch_mask: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        mask = np.asarray(self.mismatch_mask, dtype=bool)
        if labels.ndim != 1 or mask.shape != labels.shape:
            raise ValueError("labels and mismatch_mask must be vectors of equal length")
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be non-negative")
        labels.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "mismatch_mask", mask)

    def __len__(self) -> int:
        return self.labels.size


def _frames_of(obs) -> np.ndarray:
    """Accept a FeatureSequence or a raw (T, D) array."""
    frames = obs.frames if isinstance(obs, FeatureSequence) else np.asarray(obs, dtype=float)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ValueError("observations must be a non-empty (T, D) matrix")
    if not np.all(np.isfinite(frames)):
        raise ValueError("observations must be finite")
    return frames


def _log_emissions(emissions: Sequence[GaussianState], frames: np.ndarray) -> np.ndarray:
    return np.column_stack([log_density(frames, g) for g in emissions])


def _emission_scale(log_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame shifted emission likelihoods: max entry per row is 1."""
    shift = log_b.max(axis=1)
    if not np.all(np.isfinite(shift)):
        t = int(np.argmin(np.isfinite(shift)))
        raise TrainingError(f"all states have zero emission likelihood at frame {t}")
    return np.exp(log_b - shift[:, None]), shift


def _scaled_forward(
    priors: np.ndarray, trans: np.ndarray, b_hat: np.ndarray, shift: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Normalized forward variables and per-step log scaling constants."""
    n, s = b_hat.shape
    a_hat = np.empty((n, s))
    log_c = np.empty(n)
    a = priors * b_hat[0]
    for t in range(n):
        if t:
            a = b_hat[t] * (a_hat[t - 1] @ trans)
        total = float(a.sum())
        if not np.isfinite(total) or total <= 0.0:
            raise TrainingError(f"forward mass vanished at frame {t}")
        a_hat[t] = a / total
        log_c[t] = np.log(total) + shift[t]
    return a_hat, log_c


def _scaled_backward(trans: np.ndarray, b_hat: np.ndarray) -> np.ndarray:
    """Backward variables, renormalized per step (scale cancels later)."""
    n, s = b_hat.shape
    beta_hat = np.empty((n, s))
    beta_hat[-1] = 1.0
    for t in range(n - 2, -1, -1):
        v = trans @ (b_hat[t + 1] * beta_hat[t + 1])
        total = float(v.sum())
        if not np.isfinite(total) or total <= 0.0:
            raise TrainingError(f"backward mass vanished at frame {t}")
        beta_hat[t] = v / total
    return beta_hat


def forward(model: HmmModel, obs, dims: Sequence[int] | None = None) -> ForwardResult:
    """Scaled forward recursion over the model restricted to `dims`.

    The first frame uses priors times emission density; later frames apply
    the transition-weighted sum. `obs` must have one column per entry of
    `dims` (all model dimensions when dims is None).
    """
    frames = _frames_of(obs)
    dims = list(range(model.dim)) if dims is None else [int(d) for d in dims]
    if frames.shape[1] != len(dims):
        raise ValueError(
            f"observations have {frames.shape[1]} dims but {len(dims)} were requested"
        )
    sub = model if dims == list(range(model.dim)) else marginal_model(model, dims)
    log_b = _log_emissions(sub.emissions, frames)
    b_hat, shift = _emission_scale(log_b)
    a_hat, log_c = _scaled_forward(sub.priors, sub.transitions, b_hat, shift)
    log_cum = np.cumsum(log_c)
    with np.errstate(divide="ignore"):
        log_alpha = np.log(a_hat) + log_cum[:, None]
    return ForwardResult(h=a_hat, log_alpha=log_alpha, log_likelihood=float(log_cum[-1]))


def init_temporal_bins(demos: Sequence, num_states: int, eps: float) -> HmmModel:
    """Initialize emissions from S contiguous temporal bins per sequence.

    Each sequence is cut into S near-equal bins, earlier bins taking the
    remainder; bin k pooled across sequences yields emission k's mean and
    eps-regularized covariance. Priors and transition rows start uniform.
    """
    if num_states < 1:
        raise ValueError("num_states must be at least 1")
    demos = list(demos)
    if not demos:
        raise ValueError("demo list is empty")
    seqs = [_frames_of(d) for d in demos]
    dim = seqs[0].shape[1]
    split = None
    for k, (demo, seq) in enumerate(zip(demos, seqs)):
        if seq.shape[1] != dim:
            raise ValueError(f"demo {k} has dimension {seq.shape[1]}, expected {dim}")
        if len(seq) < num_states:
            raise ValueError(
                f"demo {k} has {len(seq)} frames, fewer than {num_states} bins"
            )
        if isinstance(demo, FeatureSequence):
            if split is None:
                split = demo.split
            elif demo.split != split:
                raise ValueError("demos carry inconsistent dimension splits")
    if split is None:
        split = DimensionSplit(tuple(range(dim)), ())

    bins: list[list[np.ndarray]] = [[] for _ in range(num_states)]
    for seq in seqs:
        q, r = divmod(len(seq), num_states)
        start = 0
        for k in range(num_states):
            n = q + 1 if k < r else q
            bins[k].append(seq[start : start + n])
            start += n

    emissions = []
    for chunks in bins:
        x = np.vstack(chunks)
        mean = x.mean(axis=0)
        centered = x - mean
        cov = (centered.T @ centered) / len(x)
        cov = regularize(0.5 * (cov + cov.T), eps)
        emissions.append(GaussianState(mean, cov))

    priors = np.full(num_states, 1.0 / num_states)
    trans = np.full((num_states, num_states), 1.0 / num_states)
    return HmmModel(priors, trans, tuple(emissions), split)


def marginal_model(model: HmmModel, dims: Sequence[int]) -> HmmModel:
    """Same chain, emissions marginalized to `dims`, split remapped."""
    dims = [int(d) for d in dims]
    emissions = tuple(marginalize(g, dims) for g in model.emissions)
    return HmmModel(model.priors, model.transitions, emissions, model.split.restrict(dims))


class _EStats(NamedTuple):
    pi_acc: np.ndarray
    trans_acc: np.ndarray
    resp: np.ndarray
    mean_acc: np.ndarray
    gammas: list


def _e_step(model: HmmModel, seqs: list[np.ndarray]) -> tuple[_EStats, float]:
    s, d = model.num_states, model.dim
    # one Cholesky per state for the whole batch
    log_b_all = _log_emissions(model.emissions, np.vstack(seqs))
    pi_acc = np.zeros(s)
    trans_acc = np.zeros((s, s))
    resp = np.zeros(s)
    mean_acc = np.zeros((s, d))
    gammas = []
    total_ll = 0.0
    offset = 0
    for frames in seqs:
        n = len(frames)
        log_b = log_b_all[offset : offset + n]
        offset += n
        b_hat, shift = _emission_scale(log_b)
        a_hat, log_c = _scaled_forward(model.priors, model.transitions, b_hat, shift)
        beta_hat = _scaled_backward(model.transitions, b_hat)
        joint = a_hat * beta_hat
        row_tot = joint.sum(axis=1, keepdims=True)
        if not np.all(np.isfinite(row_tot)) or np.any(row_tot <= 0):
            raise TrainingError("state posterior collapsed to zero mass")
        gamma = joint / row_tot
        if n > 1:
            # pairwise posteriors; each (S, S) slice sums to 1 exactly
            m = (
                a_hat[:-1, :, None]
                * model.transitions[None, :, :]
                * (b_hat[1:] * beta_hat[1:])[:, None, :]
            )
            slice_tot = m.sum(axis=(1, 2))
            if not np.all(np.isfinite(slice_tot)) or np.any(slice_tot <= 0):
                raise TrainingError("pairwise posterior collapsed to zero mass")
            trans_acc += (m / slice_tot[:, None, None]).sum(axis=0)
        pi_acc += gamma[0]
        resp += gamma.sum(axis=0)
        mean_acc += gamma.T @ frames
        gammas.append(gamma)
        total_ll += float(log_c.sum())
    return _EStats(pi_acc, trans_acc, resp, mean_acc, gammas), total_ll


def _m_step(
    model: HmmModel,
    stats: _EStats,
    seqs: list[np.ndarray],
    eps: float,
    global_cov: np.ndarray,
) -> HmmModel:
    s, d = model.num_states, model.dim
    priors = stats.pi_acc / stats.pi_acc.sum()

    trans = np.array(model.transitions)
    for i in range(s):
        row_sum = stats.trans_acc[i].sum()
        if row_sum > 0:
            trans[i] = stats.trans_acc[i] / row_sum

    emissions = []
    for i in range(s):
        if stats.resp[i] < _RESP_FLOOR:
            logger.warning(
                "state %d received responsibility %.3g; resetting its covariance "
                "to the regularized global covariance",
                i,
                stats.resp[i],
            )
            emissions.append(GaussianState(model.emissions[i].mean, global_cov))
            continue
        mean = stats.mean_acc[i] / stats.resp[i]
        acc = np.zeros((d, d))
        for frames, gamma in zip(seqs, stats.gammas):
            centered = frames - mean
            acc += (gamma[:, i] * centered.T) @ centered
        cov = regularize(0.5 * (acc + acc.T) / stats.resp[i], eps)
        try:
            emissions.append(GaussianState(mean, cov))
        except ValueError as exc:
            raise TrainingError(f"state {i} re-estimation produced {exc}") from exc
    return HmmModel(priors, trans, tuple(emissions), model.split)


def baum_welch(
    model: HmmModel,
    demos: Sequence,
    max_iter: int = 40,
    tol: float = 1e-4,
    eps: float = 1e-2,
) -> tuple[HmmModel, list[float]]:
    """EM re-estimation over a batch of sequences, all weighted equally.

    Returns the refined model and the log-likelihood history; history[0] is
    the likelihood of the input model and one entry is appended per accepted
    iteration. Stops at max_iter, when the improvement drops below tol, or
    when a regularized update would lower the likelihood (the update is then
    discarded, keeping the history non-decreasing).
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if tol < 0 or eps < 0:
        raise ValueError("tol and eps must be non-negative")
    demos = list(demos)
    if not demos:
        raise ValueError("demo list is empty")
    seqs = [_frames_of(d) for d in demos]
    for k, seq in enumerate(seqs):
        if seq.shape[1] != model.dim:
            raise ValueError(f"demo {k} has dimension {seq.shape[1]}, expected {model.dim}")

    pooled = np.vstack(seqs)
    centered = pooled - pooled.mean(axis=0)
    global_cov = (centered.T @ centered) / len(pooled)
    global_cov = regularize(0.5 * (global_cov + global_cov.T), eps)
    global_cov.setflags(write=False)

    current = model
    stats, ll = _e_step(current, seqs)
    history = [ll]
    for _ in range(max_iter):
        candidate = _m_step(current, stats, seqs, eps, global_cov)
        new_stats, new_ll = _e_step(candidate, seqs)
        if new_ll < ll:
            # the eps floor on covariances can push the update off the EM
            # ascent direction; keep the better previous model
            logger.info(
                "discarding EM update that lowered log-likelihood (%.6g -> %.6g)",
                ll,
                new_ll,
            )
            break
        history.append(new_ll)
        gain = new_ll - ll
        current, stats, ll = candidate, new_stats, new_ll
        if gain < tol:
            break
    return current, history


def gmr_predict(model: HmmModel, human_obs) -> FeatureSequence:
    """Predict robot dims from human dims by Gaussian mixture regression.

    Per frame, responsibilities come from the forward pass over the human
    marginal; the output is the responsibility-weighted sum of each state's
    conditional mean given the frame's human observation.
    """
    human_idx = list(model.split.human_idx)
    robot_idx = list(model.split.robot_idx)
    if not human_idx or not robot_idx:
        raise ValueError("model split must include human and robot dimensions")
    frames = _frames_of(human_obs)
    if frames.shape[1] != len(human_idx):
        raise ValueError(
            f"human observations have {frames.shape[1]} dims, expected {len(human_idx)}"
        )
    result = forward(model, frames, human_idx)
    # conditional means are affine in the observation; stack per state
    cond = np.stack(
        [
            frames @ gain.T + offset
            for gain, offset, _ in (
                _conditional_affine(g, human_idx) for g in model.emissions
            )
        ],
        axis=1,
    )
    out = np.einsum("ts,tsr->tr", result.h, cond)
    return FeatureSequence(out, model.split.restrict(robot_idx))


def viterbi_labels(model: HmmModel, obs, dims: Sequence[int] | None = None) -> SegmentLabels:
    """Per-frame argmax of the normalized forward variable; ties -> lowest."""
    result = forward(model, obs, dims)
    labels = np.argmax(result.h, axis=1)
    return SegmentLabels(labels, np.zeros(labels.size, dtype=bool))
