"""Command-line interface: synth, train, predict, segment, eval.

Exit codes are stable for scripting: 0 success, 1 unexpected failure,
2 IO or usage problems, 3 training failure, 4 dimension mismatch between a
model and the supplied data. All randomness flows from explicit --seed
flags, so every command is deterministic given its arguments.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import tsc
from .data import SYNTH_KINDS, build_features, load_csv, save_csv, synth_generate
from .evaluation import (
    ExperimentConfig,
    mse,
    render_csv,
    render_table,
    run_experiment,
)
from .hmm import (
    HmmModel,
    TrainingError,
    baum_welch,
    gmr_predict,
    init_temporal_bins,
    viterbi_labels,
)
from .model_io import load_model, save_model
from .tsc import TscModel, detect_transition_states, dilate_mask

__all__ = ["main"]


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return value


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--states", type=_positive_int, default=4,
                   help="base HMM states (default 4)")
    p.add_argument("--tsc-states", type=_positive_int, default=3,
                   help="transition HMM states (default 3)")
    p.add_argument("--reg", type=_nonneg_float, default=1e-2,
                   help="covariance regularization (default 1e-2)")
    p.add_argument("--max-iter", type=_positive_int, default=40,
                   help="EM iteration cap (default 40)")
    p.add_argument("--tol", type=_nonneg_float, default=1e-4,
                   help="EM convergence threshold (default 1e-4)")
    p.add_argument("--window", type=_nonneg_int, default=2,
                   help="frames marked on each side of a mismatch (default 2)")
    p.add_argument("--mode", choices=tsc.MODES, default="gate",
                   help="how transition states enter prediction (default gate)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tschmm",
        description="Learn joint human-robot interaction models and predict "
        "robot motion from observed human motion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic interaction dataset")
    p.add_argument("--kind", choices=SYNTH_KINDS, required=True)
    p.add_argument("--n", type=_positive_int, default=30, help="demos (default 30)")
    p.add_argument("--noise", type=_nonneg_float, default=0.005,
                   help="measurement noise sigma in meters (default 0.005)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="dataset CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the base HMM and transition model")
    p.add_argument("--data", required=True, help="dataset CSV path")
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict robot positions from human motion")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="prediction CSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("segment", help="emit per-frame labels and transition flags")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="segmentation CSV path")
    p.add_argument("--window", type=_nonneg_int, default=2,
                   help="dilation window when the model file has none (default 2)")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="run the batched multi-seed experiment")
    p.add_argument("--data", required=True)
    _add_train_flags(p)
    p.add_argument("--batch", type=_positive_int, default=15,
                   help="training demos per seed (default 15)")
    p.add_argument("--seeds", type=_positive_int, default=100,
                   help="number of seeds (default 100)")
    p.add_argument("--out", help="report CSV path (optional)")
    p.set_defaults(func=cmd_eval)

    return parser


def _boundaries_path(out: str) -> Path:
    p = Path(out)
    return p.with_name(p.stem + ".boundaries.csv")


def cmd_synth(args) -> int:
    ds, boundaries = synth_generate(args.kind, args.n, args.noise, args.seed)
    save_csv(ds, args.out)
    side = _boundaries_path(args.out)
    with open(side, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["demo_id", "t"])
        for demo_id, bounds in enumerate(boundaries):
            for t in bounds:
                writer.writerow([demo_id, t])
    print(f"wrote {len(ds.demos)} {args.kind} demos to {args.out} "
          f"(boundaries in {side})")
    return 0


def _base_of(model):
    return model.base if isinstance(model, TscModel) else model


def _check_dims(model, feats) -> str | None:
    base = _base_of(model)
    width = feats[0].width
    if base.dim != width:
        return f"model expects {base.dim} dims but the data has {width}"
    return None


def cmd_train(args) -> int:
    ds = load_csv(args.data)
    feats = [build_features(d) for d in ds.demos]
    init = init_temporal_bins(feats, args.states, args.reg)
    base, history = baum_welch(init, feats, args.max_iter, args.tol, args.reg)
    samples, _ = detect_transition_states(base, feats, args.window)
    model = tsc.fit(base, feats, args.tsc_states, args.window, args.reg,
                    args.max_iter, args.tol)
    if model.mode != args.mode:
        model = replace(model, mode=args.mode)
    save_model(model, args.out)
    print(f"log-likelihood: {history[-1]!r} after {len(history) - 1} iterations")
    print(f"transition samples: {len(samples)}")
    if model.fallback:
        print("too few transition samples; model falls back to the base HMM")
    print(f"wrote model to {args.out}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    ds = load_csv(args.data)
    feats = [build_features(d) for d in ds.demos]
    problem = _check_dims(model, feats)
    if problem:
        print(f"error: {problem}", file=sys.stderr)
        return 4
    base = _base_of(model)
    human_idx = list(base.split.human_idx)
    n_pos = max(1, len(base.split.robot_idx) // 2)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["demo_id", "t",
                         "pred_x", "pred_y", "pred_z",
                         "true_x", "true_y", "true_z"])
        for demo_id, (demo, feat) in enumerate(zip(ds.demos, feats)):
            human = feat.restrict(human_idx)
            if isinstance(model, TscModel):
                pred = tsc.predict(model, human)
            else:
                pred = gmr_predict(model, human)
            for t in range(len(feat)):
                row = [demo_id, t]
                row += [repr(float(v)) for v in pred.frames[t, :n_pos]]
                row += [repr(float(v)) for v in demo.robot_pos[t]]
                writer.writerow(row)
    print(f"wrote predictions for {len(ds.demos)} demos to {args.out}")
    return 0


def cmd_segment(args) -> int:
    model = load_model(args.model)
    ds = load_csv(args.data)
    feats = [build_features(d) for d in ds.demos]
    problem = _check_dims(model, feats)
    if problem:
        print(f"error: {problem}", file=sys.stderr)
        return 4
    base = _base_of(model)
    window = model.window if isinstance(model, TscModel) else args.window
    human_idx = list(base.split.human_idx)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["demo_id", "t", "label_joint", "label_human",
                         "mismatch", "windowed"])
        for demo_id, feat in enumerate(feats):
            joint = viterbi_labels(base, feat).labels
            human = viterbi_labels(base, feat.frames[:, human_idx], human_idx).labels
            mismatch = joint != human
            windowed = dilate_mask(mismatch, window)
            for t in range(len(feat)):
                writer.writerow([demo_id, t, int(joint[t]), int(human[t]),
                                 int(mismatch[t]), int(windowed[t])])
    print(f"wrote segmentation for {len(ds.demos)} demos to {args.out}")
    return 0


def cmd_eval(args) -> int:
    ds = load_csv(args.data)
    cfg = ExperimentConfig(
        base_states=args.states,
        tsc_states=args.tsc_states,
        reg_eps=args.reg,
        max_iter=args.max_iter,
        tol=args.tol,
        batch_size=args.batch,
        n_seeds=args.seeds,
        window=args.window,
        mode=args.mode,
    )
    report = run_experiment(ds, cfg)
    print(render_table(report), end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(render_csv(report))
        print(f"wrote report to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TrainingError, np.linalg.LinAlgError) as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last-resort contract
        print(f"unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
