"""Synthetic test scenes with exact ground-truth masks.

A scene script fixes the frame geometry, a background process, an optional
illumination gain change, and a set of moving rectangles.  Rendering is a
pure function of the script (seeded generator), so the same script always
produces bit-identical frames and truth masks.

Background processes:

* flat or per-pixel random static base image
* i.i.d. Gaussian sensor noise per frame (applied after objects are drawn)
* an optional planted low-dimensional linear process: a random pattern
  matrix maps a slowly evolving state vector to a per-frame additive term,
  so rendered frames follow a known subspace model exactly when noise and
  quantization are turned off.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .config import ConfigError, parse_kv_text

BACKGROUND_KINDS = ("constant", "gaussian_noise", "planted_arma")
BASE_KINDS = ("flat", "texture", "two_tone", "three_tone")


@dataclass
class MovingRect:
    """A solid rectangle translating at constant velocity.

    Position at frame f is ``start + velocity * (f - enter)``; the object
    exists for frames ``enter <= f < exit`` (``exit`` None = forever).
    With ``jump = j > 0`` the elapsed time is quantized to multiples of j,
    so the rectangle sits still for j frames then jumps ahead (useful for
    keeping it static within each temporal analysis window).
    """

    width: int
    height: int
    color: tuple
    start: tuple
    velocity: tuple = (0.0, 0.0)
    enter: int = 0
    exit: int | None = None
    jump: int = 0

    def position(self, frame: int):
        steps = frame - self.enter
        if self.jump > 0:
            steps = self.jump * (steps // self.jump)
        x = self.start[0] + self.velocity[0] * steps
        y = self.start[1] + self.velocity[1] * steps
        return int(round(x)), int(round(y))

    def alive(self, frame: int) -> bool:
        return frame >= self.enter and (self.exit is None or frame < self.exit)


@dataclass
class SceneScript:
    width: int = 96
    height: int = 96
    frame_count: int = 100
    channels: int = 1
    seed: int = 0
    background: str = "constant"
    base_kind: str = "flat"
    base_value: float = 120.0
    base_low: float = 60.0
    base_high: float = 160.0
    noise_sigma: float = 0.0
    arma_dim: int = 0
    arma_step: int = 1
    arma_amplitude: float = 8.0
    arma_radius: float = 0.95
    gain: float = 1.0
    gain_frame: int = 0
    gain_ramp: int = 0          # frames to ramp from 1.0 to gain; 0 = step
    quantize: bool = True
    objects: list = field(default_factory=list)

    def __post_init__(self):
        if self.background not in BACKGROUND_KINDS:
            raise ConfigError(f"background must be one of {BACKGROUND_KINDS}")
        if self.base_kind not in BASE_KINDS:
            raise ConfigError(f"base must be one of {BASE_KINDS}")
        if self.channels not in (1, 3):
            raise ConfigError("channels must be 1 or 3")
        if self.width < 1 or self.height < 1 or self.frame_count < 1:
            raise ConfigError("scene dimensions must be positive")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        if self.background == "gaussian_noise" and self.noise_sigma == 0:
            raise ConfigError("gaussian_noise background needs noise_sigma > 0")
        if self.background == "planted_arma" and self.arma_dim < 1:
            raise ConfigError("planted_arma background needs arma_dim >= 1")
        if self.arma_step < 1:
            raise ConfigError("arma_step must be positive")
        if self.gain <= 0:
            raise ConfigError("gain must be positive")


def _check_bounds(script: SceneScript):
    for i, rect in enumerate(script.objects):
        if rect.width < 1 or rect.height < 1:
            raise ConfigError(f"object {i}: size must be positive")
        if rect.jump < 0:
            raise ConfigError(f"object {i}: jump must be non-negative")
        last = script.frame_count if rect.exit is None else min(rect.exit, script.frame_count)
        for f in range(max(rect.enter, 0), last):
            x, y = rect.position(f)
            if x < 0 or y < 0 or x + rect.width > script.width or y + rect.height > script.height:
                raise ConfigError(
                    f"object {i}: leaves the frame at frame {f} (position {x},{y})"
                )


def _stable_transition(rng: np.random.Generator, d: int, radius: float) -> np.ndarray:
    """Random transition matrix with spectral radius <= radius."""
    raw = rng.normal(size=(d, d))
    q, _ = np.linalg.qr(raw)
    scales = radius * rng.uniform(0.8, 1.0, size=d)
    return q @ np.diag(scales) @ q.T


def planted_model(script: SceneScript):
    """The pattern matrix, transition and state track of a planted scene.

    Returns ``(patterns, transition, states)`` where ``patterns`` is
    (H*W*channels, arma_dim) and ``states`` is (frame_count, arma_dim);
    the background of frame f is ``base + (patterns @ states[f]).reshape``.
    """
    if script.background != "planted_arma":
        raise ConfigError("scene has no planted background process")
    rng = np.random.default_rng(script.seed + 1)
    npix = script.height * script.width * script.channels
    patterns = rng.normal(size=(npix, script.arma_dim)) * script.arma_amplitude
    transition = _stable_transition(rng, script.arma_dim, script.arma_radius)
    z = rng.normal(size=script.arma_dim)
    states = np.empty((script.frame_count, script.arma_dim))
    for f in range(script.frame_count):
        if f and f % script.arma_step == 0:
            z = transition @ z
            if script.noise_sigma:
                z = z + rng.normal(scale=script.noise_sigma, size=script.arma_dim)
        states[f] = z
    return patterns, transition, states


def render(script: SceneScript):
    """Render a scene to ``(frames, truth)``.

    frames: (F, H, W, channels) uint8 (float64 when ``quantize`` is off);
    truth: (F, H, W) bool, True where a live object covers the pixel.
    """
    _check_bounds(script)
    h, w, ch, n = script.height, script.width, script.channels, script.frame_count
    rng = np.random.default_rng(script.seed)

    if script.base_kind == "flat":
        base = np.full((h, w, ch), float(script.base_value))
    elif script.base_kind == "two_tone":
        tones = np.array([script.base_low, script.base_high])
        base = rng.choice(tones, size=(h, w, ch))
    elif script.base_kind == "three_tone":
        middle = float(np.sqrt(script.base_low * script.base_high))
        tones = np.array([script.base_low, middle, script.base_high])
        base = rng.choice(tones, size=(h, w, ch))
    else:
        base = rng.uniform(script.base_low, script.base_high, size=(h, w, ch))

    arma_terms = None
    if script.background == "planted_arma":
        patterns, _, states = planted_model(script)
        arma_terms = (states @ patterns.T).reshape(n, h, w, ch)

    frames = np.empty((n, h, w, ch), dtype=np.float64)
    truth = np.zeros((n, h, w), dtype=bool)
    for f in range(n):
        frame = base.copy()
        if arma_terms is not None:
            frame += arma_terms[f]
        for rect in script.objects:
            if not rect.alive(f):
                continue
            x, y = rect.position(f)
            raw = np.atleast_1d(np.asarray(rect.color, dtype=np.float64))
            if raw.size not in (1, ch):
                raise ConfigError(
                    f"object color has {raw.size} channels, scene has {ch}"
                )
            color = np.broadcast_to(raw, (ch,)) if raw.size == 1 else raw
            frame[y : y + rect.height, x : x + rect.width, :] = color
            truth[f, y : y + rect.height, x : x + rect.width] = True
        if script.noise_sigma:
            frame = frame + rng.normal(scale=script.noise_sigma, size=frame.shape)
        frames[f] = frame

    if script.gain != 1.0:
        ramp = max(int(script.gain_ramp), 0)
        for f in range(script.gain_frame, n):
            if ramp and f < script.gain_frame + ramp:
                g = 1.0 + (script.gain - 1.0) * (f - script.gain_frame + 1) / ramp
            else:
                g = script.gain
            frames[f] *= g

    if script.quantize:
        frames = np.clip(np.rint(frames), 0, 255).astype(np.uint8)
    return frames, truth


def illumination_scene(script: SceneScript, gain: float, step_frame: int, ramp: int = 0) -> SceneScript:
    """Copy of a scene with a multiplicative illumination change added."""
    return replace(script, gain=float(gain), gain_frame=int(step_frame), gain_ramp=int(ramp))


# --- script files ----------------------------------------------------------

_SCENE_FLOATS = {"base_value", "base_low", "base_high", "noise_sigma",
                 "arma_amplitude", "arma_radius", "gain"}
_SCENE_INTS = {
    "width": "width", "height": "height", "frames": "frame_count",
    "channels": "channels", "seed": "seed", "arma_dim": "arma_dim",
    "arma_step": "arma_step", "gain_frame": "gain_frame", "gain_ramp": "gain_ramp",
}


def _num_pair(key, value):
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"{key} must be 'x,y', got {value!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigError(f"{key} must be numeric, got {value!r}") from None


def _color(value):
    parts = [p.strip() for p in value.split(",")]
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"color must be numeric, got {value!r}") from None


def parse_scene_text(text: str) -> SceneScript:
    pairs = parse_kv_text(text)
    kwargs = {}
    objects: dict[str, dict] = {}
    for key, value in pairs.items():
        if "." in key:
            name, prop = key.split(".", 1)
            objects.setdefault(name, {})[prop] = value
            continue
        if key in _SCENE_INTS:
            try:
                kwargs[_SCENE_INTS[key]] = int(value)
            except ValueError:
                raise ConfigError(f"{key} must be an integer, got {value!r}") from None
        elif key in _SCENE_FLOATS:
            try:
                kwargs[key] = float(value)
            except ValueError:
                raise ConfigError(f"{key} must be a number, got {value!r}") from None
        elif key == "background":
            kwargs["background"] = value
        elif key == "base":
            kwargs["base_kind"] = value
        elif key == "quantize":
            lowered = value.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"quantize must be boolean, got {value!r}")
            kwargs["quantize"] = lowered in ("true", "1", "yes")
        else:
            raise ConfigError(f"unknown scene key {key!r}")

    rects = []
    allowed = {"size", "color", "start", "velocity", "enter", "exit", "jump"}
    for name in sorted(objects):
        props = objects[name]
        unknown = set(props) - allowed
        if unknown:
            raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
        missing = {"size", "color", "start"} - set(props)
        if missing:
            raise ConfigError(f"{name}: missing {sorted(missing)}")
        size = props["size"].lower().split("x")
        if len(size) != 2:
            raise ConfigError(f"{name}.size must be 'WxH', got {props['size']!r}")
        try:
            rw, rh = int(size[0]), int(size[1])
        except ValueError:
            raise ConfigError(f"{name}.size must be integers") from None
        rect = MovingRect(
            width=rw,
            height=rh,
            color=_color(props["color"]),
            start=_num_pair(f"{name}.start", props["start"]),
            velocity=_num_pair(f"{name}.velocity", props["velocity"]) if "velocity" in props else (0.0, 0.0),
            enter=int(props.get("enter", 0)),
            exit=None if props.get("exit", "").strip() in ("", "none", "-1") else int(props["exit"]),
            jump=int(props.get("jump", 0)),
        )
        rects.append(rect)
    kwargs["objects"] = rects
    return SceneScript(**kwargs)


def load_scene(path) -> SceneScript:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read scene script {path}: {exc}") from None
    return parse_scene_text(text)
