#!/usr/bin/env python3
"""Run both descriptor modes on the reference scene and report quality.

Renders ``scenes/moving_box.scene`` (and its color variant), streams each
video through the engine, and prints per-mode mean/min per-frame F-scores
plus where the time went.  Pass ``--scene`` to try another script.

    python3 scripts/run_demo.py
    python3 scripts/run_demo.py --scene scenes/illumination_step.scene --mode cs_stltp
"""

import argparse
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from brickbg.config import EngineConfig
from brickbg.evaluation import evaluate, per_frame_fscores
from brickbg.pipeline import process_video
from brickbg.synth import load_scene, render


def run_one(scene_path: Path, mode: str) -> None:
    scene = load_scene(scene_path)
    frames, truth = render(scene)
    config = EngineConfig(mode=mode)
    started = time.perf_counter()
    masks, state = process_video(frames, config)
    seconds = time.perf_counter() - started

    report = evaluate(masks, truth)
    fscores = per_frame_fscores(masks, truth)
    fps = frames.shape[0] / seconds
    print(f"mode={mode:8s}  F={report.fscore:.4f}  "
          f"per-frame mean={fscores.mean():.4f} min={fscores.min():.4f}  "
          f"{seconds:.1f}s ({fps:.1f} fps)")
    total = sum(state.timings.values()) or 1.0
    stages = "  ".join(
        f"{name} {share / total:4.0%}"
        for name, share in sorted(state.timings.items(), key=lambda kv: -kv[1])
    )
    print(f"  stage share: {stages}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--scene", type=Path, default=None,
                        help="scene script (default: the bundled reference pair)")
    parser.add_argument("--mode", choices=["cs_stltp", "rgb"], default=None,
                        help="run a single mode instead of both")
    args = parser.parse_args()

    if args.scene is not None:
        modes = [args.mode] if args.mode else ["cs_stltp", "rgb"]
        for mode in modes:
            run_one(args.scene, mode)
        return

    run_one(ROOT / "scenes" / "moving_box.scene", "cs_stltp")
    run_one(ROOT / "scenes" / "moving_box_rgb.scene", "rgb")


if __name__ == "__main__":
    main()
