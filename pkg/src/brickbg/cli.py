"""Command-line interface.

Subcommands::

    brickbg run    --input FRAMES --output DIR [--config FILE] [options]
    brickbg eval   --truth DIR (--pred DIR | --sweep DIR) [--report FILE]
    brickbg synth  --scene FILE --output DIR [--truth DIR]
    brickbg bench  (--input FRAMES | --scene FILE) [--config FILE] [options]

Exit codes: 0 on success, 2 for unusable arguments or configuration, 3 for
runtime failures (missing/short/malformed data, numerical breakdown).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, EngineConfig, load_config, with_overrides
from .evaluation import evaluate, per_frame_fscores, pr_sweep, write_report
from .imageio import FrameFormatError, load_frames, load_masks, write_frames, write_masks
from .linalg import NumericalFailure
from .pipeline import process_video
from .subspace import InsufficientData
from .synth import load_scene, render

USAGE_ERROR = 2
RUNTIME_ERROR = 3


def _load_engine_config(args) -> EngineConfig:
    config = load_config(args.config) if args.config else EngineConfig()
    return with_overrides(config, mode=args.mode, stride=args.stride)


def _add_engine_options(sub):
    sub.add_argument("--config", help="key=value config file")
    sub.add_argument("--mode", help="descriptor mode override (cs_stltp or rgb)")
    sub.add_argument("--stride", type=int, help="window stride override (1..brick depth)")


def _cmd_run(args) -> int:
    config = _load_engine_config(args)
    frames = load_frames(args.input)
    started = time.perf_counter()
    masks, state = process_video(frames, config)
    elapsed = time.perf_counter() - started
    write_masks(args.output, masks)
    fps = frames.shape[0] / elapsed if elapsed > 0 else float("inf")
    print(
        f"processed {frames.shape[0]} frames "
        f"({state.geometry.grid_w}x{state.geometry.grid_h} bricks, {config.mode}) "
        f"in {elapsed:.2f}s ({fps:.1f} fps)"
    )
    if args.truth:
        truth = load_masks(args.truth)
        if truth.shape != masks.shape:
            raise FrameFormatError(
                f"truth shape {truth.shape} does not match output {masks.shape}"
            )
        report = evaluate(masks, truth)
        mean_f = float(per_frame_fscores(masks, truth).mean())
        print(
            f"precision {report.precision:.4f}  recall {report.recall:.4f}  "
            f"fscore {report.fscore:.4f}  mean-frame-fscore {mean_f:.4f}"
        )
        if args.report:
            write_report(args.report, report)
    return 0


def _cmd_eval(args) -> int:
    truth = load_masks(args.truth)
    if args.pred:
        predicted = load_masks(args.pred)
        if predicted.shape != truth.shape:
            raise FrameFormatError(
                f"prediction shape {predicted.shape} does not match truth {truth.shape}"
            )
        report = evaluate(predicted, truth)
        mean_f = float(per_frame_fscores(predicted, truth).mean())
        print(
            f"precision {report.precision:.4f}  recall {report.recall:.4f}  "
            f"fscore {report.fscore:.4f}  mean-frame-fscore {mean_f:.4f}"
        )
        if args.report:
            write_report(args.report, report)
        return 0

    root = Path(args.sweep)
    subdirs = sorted(p for p in root.iterdir() if p.is_dir()) if root.is_dir() else []
    if not subdirs:
        raise FrameFormatError(f"{root}: no operating-point subdirectories found")
    mask_sets = []
    reports = []
    for sub in subdirs:
        predicted = load_masks(sub)
        if predicted.shape != truth.shape:
            raise FrameFormatError(
                f"{sub}: shape {predicted.shape} does not match truth {truth.shape}"
            )
        mask_sets.append(predicted)
        reports.append(evaluate(predicted, truth))
    points = pr_sweep(mask_sets, truth)
    for sub, report in zip(subdirs, reports):
        print(
            f"{sub.name}: precision {report.precision:.4f}  "
            f"recall {report.recall:.4f}  fscore {report.fscore:.4f}"
        )
    if args.report:
        best = max(reports, key=lambda r: r.fscore)
        write_report(args.report, best, points)
    return 0


def _cmd_synth(args) -> int:
    scene = load_scene(args.scene)
    if not scene.quantize:
        raise ConfigError("synth writes 8-bit frames; the scene must set quantize = true")
    frames, truth = render(scene)
    write_frames(args.output, frames[..., 0] if frames.shape[-1] == 1 else frames)
    print(f"wrote {frames.shape[0]} frames to {args.output}")
    if args.truth:
        write_masks(args.truth, truth)
        print(f"wrote truth masks to {args.truth}")
    return 0


def _cmd_bench(args) -> int:
    config = _load_engine_config(args)
    if args.input:
        frames = load_frames(args.input)
    else:
        scene = load_scene(args.scene)
        frames, _ = render(scene)
        if frames.dtype != np.uint8:
            frames = np.clip(np.rint(frames), 0, 255).astype(np.uint8)
    started = time.perf_counter()
    masks, state = process_video(frames, config)
    elapsed = time.perf_counter() - started
    fps = frames.shape[0] / elapsed if elapsed > 0 else float("inf")
    print(
        f"{frames.shape[0]} frames of {frames.shape[2]}x{frames.shape[1]} "
        f"({config.mode}, stride {config.effective_stride})"
    )
    print(f"total {elapsed:.3f}s  {fps:.2f} fps  foreground px {int(masks.sum())}")
    for phase, seconds in sorted(state.timings.items()):
        print(f"  {phase:<12s} {seconds:.3f}s")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brickbg",
        description="Streaming background subtraction with per-brick linear models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="segment a frame sequence and write masks")
    run.add_argument("--input", required=True, help="frame directory or manifest file")
    run.add_argument("--output", required=True, help="directory for mask images")
    run.add_argument("--truth", help="optional truth masks to score against")
    run.add_argument("--report", help="optional CSV report path (needs --truth)")
    _add_engine_options(run)
    run.set_defaults(func=_cmd_run)

    ev = sub.add_parser("eval", help="score predicted masks against truth")
    ev.add_argument("--truth", required=True, help="truth mask directory")
    group = ev.add_mutually_exclusive_group(required=True)
    group.add_argument("--pred", "--masks", dest="pred", help="predicted mask directory")
    group.add_argument(
        "--sweep",
        help="directory whose subdirectories each hold one operating point's masks",
    )
    ev.add_argument("--report", help="CSV report path (sweep: best point + curve)")
    ev.set_defaults(func=_cmd_eval)

    synth = sub.add_parser("synth", help="render a synthetic scene script")
    synth.add_argument("--scene", "--script", dest="scene", required=True,
                       help="scene script file")
    synth.add_argument("--output", required=True, help="directory for frames")
    synth.add_argument("--truth", help="optional directory for truth masks")
    synth.set_defaults(func=_cmd_synth)

    bench = sub.add_parser("bench", help="time the engine on frames or a scene")
    source = bench.add_mutually_exclusive_group(required=True)
    source.add_argument("--input", help="frame directory or manifest file")
    source.add_argument("--scene", help="scene script to render and process")
    _add_engine_options(bench)
    bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (FrameFormatError, InsufficientData, NumericalFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
