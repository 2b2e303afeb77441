#!/usr/bin/env python3
"""Trace one brick's model through a long full occlusion.

Streams ``scenes/occlusion.scene`` window by window and reports, for the
brick at the center of the occluded block: whether it was flagged
foreground, how far the model's synthesized appearance has drifted from its
pre-occlusion prediction, and how quickly the location is reclassified as
background after the occluder leaves.

    python3 scripts/trace_occlusion.py
"""

import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from brickbg.config import EngineConfig
from brickbg.maintenance import synthesize
from brickbg.pipeline import initialize, model_at, step
from brickbg.synth import load_scene, render


def main() -> None:
    scene = load_scene(ROOT / "scenes" / "occlusion.scene")
    video, _ = render(scene)
    config = EngineConfig(mode="cs_stltp")
    depth = config.brick_depth

    state = initialize(video[: config.init_frames], config)
    cell_x = cell_y = 32 // config.brick_width    # brick under the block center
    v_ref = None

    print(f"scene {scene.width}x{scene.height}, {scene.frame_count} frames; "
          f"tracing brick ({cell_x}, {cell_y}); occluder covers frames 100..179")
    print(f"{'frames':>12}  {'flag':>10}  {'drift from pre-occlusion':>24}")
    for start in range(config.init_frames, scene.frame_count - depth + 1, depth):
        if start == 100:
            v_ref = synthesize(model_at(state, cell_x, cell_y))
        result = step(state, video[start : start + depth])
        flag = "background" if result.brick_background[cell_y, cell_x] else "FOREGROUND"
        if v_ref is None:
            drift = ""
        else:
            v_now = synthesize(model_at(state, cell_x, cell_y))
            drift = f"{np.linalg.norm(v_now - v_ref) / np.linalg.norm(v_ref):24.2e}"
        print(f"{start:>5}..{start + depth - 1:<5}  {flag:>10}  {drift}")


if __name__ == "__main__":
    main()
