"""Streaming engine tying descriptors, models, segmentation and upkeep together.

The frame area is tiled by a fixed grid of bricks (edge bricks anchor
inward so every brick is full-size; each pixel is owned by exactly one
grid cell, with overlap only where a clamped edge brick reaches back into
its neighbour's area).  One linear model per grid cell is identified from
an initial frame window; the engine then consumes the video in
brick-depth windows.  Per window it gathers descriptors for all cells at
once, classifies them with the appearance/innovation residual tests,
assembles pixel masks, and updates every model from its
occlusion-composed, robustly reweighted observation.

All per-cell linear algebra runs through the stacked kernels in
``linalg``/``subspace``/``maintenance``, grouped into buckets of equal
state dimension, so one step costs a handful of LAPACK calls regardless
of grid size.  ``cs_stltp`` histograms cannot localize foreground inside
a brick, so flagged bricks are refined against a running per-pixel mean
of the background.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import linalg
from .config import EngineConfig
from .features import COUNTS_PER_VOXEL, HISTOGRAM_BINS, MODE_CS, MODE_RGB, bin_volume
from .maintenance import robust_scale, update_basis_stack, weight
from .subspace import InsufficientData, SubspaceModel, fit_dynamics_stack, identify_stack

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass
class GridGeometry:
    """Brick tiling of a frame plus precomputed gather/scatter indices."""

    frame_height: int
    frame_width: int
    brick_width: int
    brick_height: int
    grid_w: int
    grid_h: int
    x0: np.ndarray        # (grid_w,) window anchor of each grid column
    y0: np.ndarray        # (grid_h,)
    window_x: np.ndarray  # (locations, brick_width) frame columns per cell
    window_y: np.ndarray  # (locations, brick_height) frame rows per cell
    owner: np.ndarray     # (H, W) owning cell id, row-major gy * grid_w + gx
    local_x: np.ndarray   # (W,) pixel column inside its owner's window
    local_y: np.ndarray   # (H,)

    @property
    def locations(self) -> int:
        return self.grid_w * self.grid_h


def make_grid(frame_height: int, frame_width: int, brick_height: int, brick_width: int) -> GridGeometry:
    """Tile a frame with bricks; the last row/column anchors to the edge."""
    if brick_width > frame_width or brick_height > frame_height:
        raise ValueError(
            f"brick {brick_width}x{brick_height} larger than frame "
            f"{frame_width}x{frame_height}"
        )
    grid_w = -(-frame_width // brick_width)
    grid_h = -(-frame_height // brick_height)
    x0 = np.minimum(np.arange(grid_w) * brick_width, frame_width - brick_width)
    y0 = np.minimum(np.arange(grid_h) * brick_height, frame_height - brick_height)
    col_owner = np.minimum(np.arange(frame_width) // brick_width, grid_w - 1)
    row_owner = np.minimum(np.arange(frame_height) // brick_height, grid_h - 1)
    owner = (row_owner[:, None] * grid_w + col_owner[None, :]).astype(np.intp)
    local_x = (np.arange(frame_width) - x0[col_owner]).astype(np.intp)
    local_y = (np.arange(frame_height) - y0[row_owner]).astype(np.intp)
    gxs = np.tile(np.arange(grid_w), grid_h)
    gys = np.repeat(np.arange(grid_h), grid_w)
    window_x = (x0[gxs][:, None] + np.arange(brick_width)[None, :]).astype(np.intp)
    window_y = (y0[gys][:, None] + np.arange(brick_height)[None, :]).astype(np.intp)
    return GridGeometry(
        frame_height=frame_height,
        frame_width=frame_width,
        brick_width=brick_width,
        brick_height=brick_height,
        grid_w=grid_w,
        grid_h=grid_h,
        x0=x0,
        y0=y0,
        window_x=window_x,
        window_y=window_y,
        owner=owner,
        local_x=local_x,
        local_y=local_y,
    )


@dataclass
class ModelBucket:
    """Models of all cells sharing one state dimension, stored as arrays.

    ``b`` is zero-padded to (g, d, d); columns past ``d_eps[i]`` are zero
    and the matching ``b_pinv`` rows are zero, so padded innovation
    coordinates come out exactly 0 and never affect a max test.
    """

    indices: np.ndarray   # (g,) row-major cell ids
    c: np.ndarray         # (g, m, d)
    lam: np.ndarray       # (g, d)
    a: np.ndarray         # (g, d, d)
    b: np.ndarray         # (g, d, d)
    b_pinv: np.ndarray    # (g, d, d)
    d_eps: np.ndarray     # (g,)
    z_latest: np.ndarray  # (g, d)
    states: np.ndarray    # (g, history, d) ring storage, oldest first
    observed: np.ndarray  # (g, history) which ring states came from real data
    n_states: int

    @property
    def d(self) -> int:
        return self.c.shape[2]


@dataclass
class EngineState:
    config: EngineConfig
    geometry: GridGeometry
    channels: int
    buckets: list
    aux_mean: np.ndarray           # (H, W, C) running background pixel mean
    brick_background: np.ndarray   # (locations,) labels from the last step
    steps: int = 0
    timings: dict = field(default_factory=dict)


@dataclass
class StepResult:
    masks: np.ndarray             # (depth, H, W) bool after min-area filtering
    raw_masks: np.ndarray         # (depth, H, W) bool before filtering
    brick_background: np.ndarray  # (grid_h, grid_w) bool
    timings: dict


def _as_video(frames) -> np.ndarray:
    arr = np.asarray(frames)
    if arr.ndim == 3:
        arr = arr[..., None]
    if arr.ndim != 4:
        raise ValueError(f"expected frames shaped (F, H, W[, channels]), got {arr.shape}")
    if arr.shape[3] not in (1, 3):
        raise ValueError("only 1- or 3-channel video is supported")
    return arr


def _window_stack(geometry: GridGeometry, volume: np.ndarray) -> np.ndarray:
    """Every cell's voxels: (locations, t, brick_h, brick_w, channels)."""
    gathered = volume[:, geometry.window_y[:, :, None], geometry.window_x[:, None, :], :]
    return np.moveaxis(gathered, 0, 1)


def batch_descriptors(geometry: GridGeometry, volume: np.ndarray, mode: str, tau: float) -> np.ndarray:
    """Descriptor matrix (locations, m) for one brick-depth frame window.

    Equal to ``features.brick_descriptor`` applied cell by cell with the
    window frames as the brick volume, but computed for the whole grid at
    once (ternary patterns are evaluated once per frame, not per brick).
    """
    if mode == MODE_RGB:
        stack = _window_stack(geometry, volume)
        return np.ascontiguousarray(stack.reshape(stack.shape[0], -1))
    if mode != MODE_CS:
        raise ValueError(f"unknown mode {mode!r}")
    n = geometry.locations
    chunks = []
    for ch in range(volume.shape[3]):
        bins = bin_volume(volume[..., ch], tau)
        wins = np.moveaxis(
            bins[:, geometry.window_y[:, :, None], geometry.window_x[:, None, :]], 0, 1
        )
        offsets = (np.arange(n) * HISTOGRAM_BINS)[:, None, None, None]
        flat = (wins.astype(np.intp) + offsets).reshape(-1)
        counts = np.bincount(flat, minlength=n * HISTOGRAM_BINS).reshape(n, HISTOGRAM_BINS)
        chunks.append(counts.astype(np.float64) * COUNTS_PER_VOXEL)
    return np.concatenate(chunks, axis=1)


def initialize(frames, config: EngineConfig) -> EngineState:
    """Identify one model per grid cell from the first ``init_frames`` frames."""
    frames = _as_video(frames)
    total, height, width, channels = frames.shape
    if total < config.init_frames:
        raise InsufficientData(
            f"initialization needs {config.init_frames} frames, got {total}"
        )
    depth = config.brick_depth
    n_windows = config.init_frames // depth
    if n_windows < 2:
        raise InsufficientData(
            "initialization needs at least two brick-depth windows "
            f"({config.init_frames} frames / depth {depth} gives {n_windows})"
        )
    geometry = make_grid(height, width, config.brick_height, config.brick_width)
    init = frames[: n_windows * depth].astype(np.float64)
    columns = [
        batch_descriptors(geometry, init[i * depth : (i + 1) * depth], config.mode, config.tau)
        for i in range(n_windows)
    ]
    w = np.stack(columns, axis=2)                     # (locations, m, n_windows)
    u, sigma, q = linalg.svd_stack(w)
    dims = np.maximum((sigma > config.t_d * sigma[:, :1]).sum(axis=1), 1)

    buckets = []
    for d in np.unique(dims):
        idx = np.nonzero(dims == d)[0]
        c, lam, z, a, b, b_pinv, d_eps = identify_stack(
            u[idx], sigma[idx], q[idx], int(d), config.t_deps
        )
        ring = np.zeros((idx.size, config.history, int(d)))
        seed = min(config.history, n_windows)
        ring[:, :seed] = np.swapaxes(z, 1, 2)[:, n_windows - seed :]
        flags = np.zeros((idx.size, config.history), dtype=bool)
        flags[:, :seed] = True
        buckets.append(
            ModelBucket(
                indices=idx,
                c=c,
                lam=lam,
                a=a,
                b=b,
                b_pinv=b_pinv,
                d_eps=d_eps,
                z_latest=z[:, :, -1].copy(),
                states=ring,
                observed=flags,
                n_states=seed,
            )
        )
    return EngineState(
        config=config,
        geometry=geometry,
        channels=channels,
        buckets=buckets,
        aux_mean=init.mean(axis=0),
        brick_background=np.ones(geometry.locations, dtype=bool),
    )


def _ring_append(bucket: ModelBucket, z_new: np.ndarray, from_data: np.ndarray):
    if bucket.n_states < bucket.states.shape[1]:
        bucket.states[:, bucket.n_states] = z_new
        bucket.observed[:, bucket.n_states] = from_data
        bucket.n_states += 1
    else:
        bucket.states[:, :-1] = bucket.states[:, 1:]
        bucket.states[:, -1] = z_new
        bucket.observed[:, :-1] = bucket.observed[:, 1:]
        bucket.observed[:, -1] = from_data


def _assemble_masks(geometry: GridGeometry, vox_masks: np.ndarray) -> np.ndarray:
    """Scatter (locations, t, h, w) voxel masks to (t, H, W) frame masks."""
    per_pixel = vox_masks[geometry.owner, :, geometry.local_y[:, None], geometry.local_x[None, :]]
    return np.ascontiguousarray(np.moveaxis(per_pixel, 2, 0))


def remove_small_components(mask: np.ndarray, min_area: int) -> np.ndarray:
    """Drop 8-connected foreground blobs smaller than ``min_area`` pixels."""
    mask = np.asarray(mask, dtype=bool)
    if min_area <= 1 or not mask.any():
        return mask.copy()
    labels, count = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    if count == 0:
        return mask.copy()
    areas = np.bincount(labels.ravel())
    keep = areas >= min_area
    keep[0] = False
    return keep[labels]


def step(state: EngineState, window) -> StepResult:
    """Consume one brick-depth window of frames; label it and update models."""
    config = state.config
    geometry = state.geometry
    window = _as_video(window)
    t, height, width, channels = window.shape
    if (height, width) != (geometry.frame_height, geometry.frame_width):
        raise ValueError(
            f"frame size {width}x{height} does not match the engine "
            f"({geometry.frame_width}x{geometry.frame_height})"
        )
    if channels != state.channels:
        raise ValueError(f"expected {state.channels}-channel frames, got {channels}")
    if t != config.brick_depth:
        raise ValueError(f"a step consumes exactly {config.brick_depth} frames, got {t}")
    volume = window.astype(np.float64)
    timings = {}

    tick = time.perf_counter()
    descriptors = batch_descriptors(geometry, volume, config.mode, config.tau)
    timings["descriptors"] = time.perf_counter() - tick

    n = geometry.locations
    bh, bw = config.brick_height, config.brick_width
    vox_masks = np.zeros((n, t, bh, bw), dtype=bool)
    background = np.zeros(n, dtype=bool)
    t_omega = config.effective_t_omega
    t_eps = config.effective_t_eps

    seg_time = 0.0
    maintain_time = 0.0
    for bucket in state.buckets:
        tick = time.perf_counter()
        v = descriptors[bucket.indices]
        z_prime = np.einsum("gmd,gm->gd", bucket.c, v)
        omega = v - np.einsum("gmd,gd->gm", bucket.c, z_prime)
        predicted = np.einsum("gde,ge->gd", bucket.a, bucket.z_latest)
        epsilon = np.einsum("ged,gd->ge", bucket.b_pinv, z_prime - predicted)
        eps_quiet = np.abs(epsilon).max(axis=1) < t_eps
        omega_quiet = np.abs(omega).max(axis=1) < t_omega
        bg = np.where(bucket.d_eps > 0, eps_quiet, omega_quiet)
        background[bucket.indices] = bg
        if config.mode == MODE_RGB:
            vm = (np.abs(omega).reshape(-1, t, bh, bw, channels) > t_omega).any(axis=-1)
            vm[bg] = False
        else:
            vm = np.broadcast_to((~bg)[:, None, None, None], (bg.size, t, bh, bw)).copy()
        vox_masks[bucket.indices] = vm
        seg_time += time.perf_counter() - tick

        tick = time.perf_counter()
        v_hat = np.einsum("gmd,gd->gm", bucket.c, predicted)
        if config.mode == MODE_RGB:
            entry_mask = np.repeat(vm.reshape(vm.shape[0], -1), channels, axis=1)
            v_bar = np.where(entry_mask, v_hat, v)
        else:
            v_bar = np.where(bg[:, None], v, v_hat)
        z_bar = np.einsum("gmd,gm->gd", bucket.c, v_bar)
        residual = np.einsum("gmd,gd->gm", bucket.c, z_bar) - v_bar
        rho = robust_scale(bucket.c, bucket.lam, config.beta)
        v_tilde = np.sqrt(weight(residual, rho)) * v_bar
        bucket.c, bucket.lam = update_basis_stack(bucket.c, bucket.lam, v_tilde, config.alpha)
        z_new = np.einsum("gmd,gm->gd", bucket.c, v_tilde)
        _ring_append(bucket, z_new, bg)
        bucket.z_latest = z_new.copy()
        bucket.a, bucket.b, bucket.b_pinv, bucket.d_eps = fit_dynamics_stack(
            bucket.states[:, : bucket.n_states],
            config.t_deps,
            observed=bucket.observed[:, : bucket.n_states],
        )
        maintain_time += time.perf_counter() - tick
    timings["segmentation"] = seg_time
    timings["maintenance"] = maintain_time

    tick = time.perf_counter()
    frame_masks = _assemble_masks(geometry, vox_masks)
    window_mean = volume.mean(axis=0)
    if config.mode == MODE_CS:
        # The histograms are invariant to a global intensity rescale, so the
        # pixel gate must track illumination as well: a gain step would
        # otherwise leave every flagged brick entirely above t_rgb until the
        # slow exponential blend catches up.  The median intensity ratio over
        # the frame estimates the global factor robustly (foreground covers
        # far less than half the frame).
        steady = state.aux_mean > 1.0
        if steady.any():
            state.aux_mean *= np.median(window_mean[steady] / state.aux_mean[steady])
        # Histograms only localize to brick granularity; cut flagged bricks
        # down to the pixels that differ from the running background mean.
        difference = np.abs(volume - state.aux_mean).max(axis=-1)
        frame_masks &= difference > config.effective_t_rgb
    quiet = ~frame_masks.any(axis=0)
    state.aux_mean[quiet] += config.alpha * (window_mean[quiet] - state.aux_mean[quiet])
    timings["assembly"] = time.perf_counter() - tick

    tick = time.perf_counter()
    cleaned = np.stack([remove_small_components(m, config.min_area) for m in frame_masks])
    timings["postprocess"] = time.perf_counter() - tick

    state.brick_background = background
    state.steps += 1
    for key, value in timings.items():
        state.timings[key] = state.timings.get(key, 0.0) + value
    return StepResult(
        masks=cleaned,
        raw_masks=frame_masks,
        brick_background=background.reshape(geometry.grid_h, geometry.grid_w).copy(),
        timings=timings,
    )


def process_video(frames, config: EngineConfig):
    """Initialize on the head of a clip and stream the rest.

    Returns ``(masks, state)``: masks is (F, H, W) bool with the
    initialization frames reported as all-background.  Each streamed
    window starts ``stride`` frames after the previous one and emits masks
    for its first ``stride`` frames; a final short window is padded by
    repeating the last frame.
    """
    frames = _as_video(frames)
    total = frames.shape[0]
    state = initialize(frames, config)
    depth = config.brick_depth
    stride = config.effective_stride
    masks = np.zeros(frames.shape[:3], dtype=bool)
    start = config.init_frames
    while start < total:
        window = frames[start : start + depth]
        if window.shape[0] < depth:
            pad = np.repeat(window[-1:], depth - window.shape[0], axis=0)
            window = np.concatenate([window, pad], axis=0)
        result = step(state, window)
        emit = min(stride, total - start)
        masks[start : start + emit] = result.masks[:emit]
        start += stride
    return masks, state


def model_at(state: EngineState, grid_x: int, grid_y: int) -> SubspaceModel:
    """Materialize the cell's model as a standalone ``SubspaceModel`` copy."""
    geometry = state.geometry
    if not (0 <= grid_x < geometry.grid_w and 0 <= grid_y < geometry.grid_h):
        raise IndexError(
            f"grid cell ({grid_x}, {grid_y}) outside {geometry.grid_w}x{geometry.grid_h}"
        )
    cell = grid_y * geometry.grid_w + grid_x
    for bucket in state.buckets:
        hits = np.nonzero(bucket.indices == cell)[0]
        if not hits.size:
            continue
        i = int(hits[0])
        de = int(bucket.d_eps[i])
        model = SubspaceModel(
            c=bucket.c[i].copy(),
            lam=bucket.lam[i].copy(),
            a=bucket.a[i].copy(),
            b=bucket.b[i][:, :de].copy(),
            b_pinv=bucket.b_pinv[i][:de, :].copy(),
            z_latest=bucket.z_latest[i].copy(),
            history=state.config.history,
        )
        for k in range(bucket.n_states):
            model.states.append(bucket.states[i, k].copy())
        return model
    raise KeyError(f"no model stored for grid cell ({grid_x}, {grid_y})")


def background_flags(state: EngineState) -> np.ndarray:
    """(grid_h, grid_w) bool: True where the last step judged background."""
    geometry = state.geometry
    return state.brick_background.reshape(geometry.grid_h, geometry.grid_w).copy()
