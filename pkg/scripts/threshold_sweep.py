#!/usr/bin/env python3
"""Sweep the innovation threshold and print a precision/recall curve.

Runs the reference scene once per threshold setting and prints one
operating point per line, plus the best-F setting.  Useful for picking
``t_eps`` for a new kind of footage.

    python3 scripts/threshold_sweep.py
    python3 scripts/threshold_sweep.py --mode rgb --values 2,3,4,5,6
"""

import argparse
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

import dataclasses

from brickbg.config import EngineConfig
from brickbg.evaluation import evaluate
from brickbg.pipeline import process_video
from brickbg.synth import load_scene, render


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--scene", type=Path,
                        default=ROOT / "scenes" / "moving_box.scene")
    parser.add_argument("--mode", choices=["cs_stltp", "rgb"], default="cs_stltp")
    parser.add_argument("--values", default="1.5,2,2.5,3,4,5,7,10",
                        help="comma-separated t_eps values to try")
    args = parser.parse_args()

    scene = load_scene(args.scene)
    if args.mode == "rgb" and scene.channels != 3:
        scene = dataclasses.replace(scene, channels=3)
    frames, truth = render(scene)

    best = None
    print(f"{'t_eps':>6}  {'precision':>9}  {'recall':>7}  {'F':>7}")
    for raw in args.values.split(","):
        t_eps = float(raw)
        config = EngineConfig(mode=args.mode, t_eps=t_eps)
        masks, _ = process_video(frames, config)
        report = evaluate(masks, truth)
        print(f"{t_eps:6.2f}  {report.precision:9.4f}  {report.recall:7.4f}  "
              f"{report.fscore:7.4f}")
        if best is None or report.fscore > best[1]:
            best = (t_eps, report.fscore)
    print(f"best: t_eps={best[0]:g} (F={best[1]:.4f})")


if __name__ == "__main__":
    main()
