"""Streaming engine: grid geometry, batching, and the full update loop.

The deepest test here mirrors one grid cell through a whole engine step
using only the public single-model functions (residuals -> label ->
prediction -> composition -> robust reweight -> basis update -> dynamics
refit) and requires the bucketed engine to land on the same model and the
same mask for that cell.
"""

import numpy as np
import pytest

from brickbg.config import EngineConfig
from brickbg.features import VideoBrick, brick_descriptor
from brickbg.maintenance import compose, robust_reweight, synthesize, update_appearance, update_dynamics
from brickbg.pipeline import (
    EngineState,
    background_flags,
    batch_descriptors,
    initialize,
    make_grid,
    model_at,
    process_video,
    remove_small_components,
    step,
)
from brickbg.segmentation import classify, compute_residuals
from brickbg.subspace import InsufficientData


def noisy_video(frames, height, width, channels=1, seed=0, base=None):
    gen = np.random.default_rng(seed)
    if base is None:
        base = gen.choice([70.0, 105.0, 160.0], size=(height, width, channels))
    video = base + gen.normal(scale=5.0, size=(frames, height, width, channels))
    return np.clip(np.rint(video), 0, 255).astype(np.uint8), base


# --- geometry ---------------------------------------------------------------


def test_make_grid_divisible():
    g = make_grid(8, 12, 4, 4)
    assert (g.grid_w, g.grid_h) == (3, 2)
    assert list(g.x0) == [0, 4, 8]
    assert list(g.y0) == [0, 4]


def test_make_grid_anchors_edge_bricks_inward():
    g = make_grid(6, 10, 4, 4)
    assert (g.grid_w, g.grid_h) == (3, 2)
    assert list(g.x0) == [0, 4, 6]      # last column reaches back
    assert list(g.y0) == [0, 2]


def test_make_grid_ownership_partitions_pixels():
    g = make_grid(11, 13, 4, 4)
    assert g.owner.shape == (11, 13)
    # every cell id appears; owners form a partition by construction
    assert set(np.unique(g.owner)) == set(range(g.locations))
    # each pixel lies inside its owner's window at the stored local offset
    for y in range(11):
        for x in range(13):
            cell = g.owner[y, x]
            gx, gy = cell % g.grid_w, cell // g.grid_w
            assert g.x0[gx] + g.local_x[x] == x
            assert g.y0[gy] + g.local_y[y] == y
            assert 0 <= g.local_x[x] < 4 and 0 <= g.local_y[y] < 4


def test_make_grid_rejects_oversized_brick():
    with pytest.raises(ValueError):
        make_grid(3, 10, 4, 4)


# --- batched descriptors ------------------------------------------------------


@pytest.mark.parametrize("mode", ["cs_stltp", "rgb"])
@pytest.mark.parametrize("channels", [1, 3])
def test_batch_descriptors_match_per_brick(mode, channels):
    gen = np.random.default_rng(4)
    volume = gen.integers(0, 256, size=(5, 8, 12, channels)).astype(np.float64)
    geometry = make_grid(8, 12, 4, 4)
    batch = batch_descriptors(geometry, volume, mode, tau=0.2)
    for cell in range(geometry.locations):
        gx, gy = cell % geometry.grid_w, cell // geometry.grid_w
        brick = VideoBrick(
            grid_x=gx, grid_y=gy, frame_start=0,
            x0=int(geometry.x0[gx]), y0=int(geometry.y0[gy]),
            width=4, height=4, volume=volume,
        )
        single = brick_descriptor(brick, mode=mode, tau=0.2)
        assert np.array_equal(batch[cell], single.values), f"cell {cell}"


def test_batch_descriptors_rejects_unknown_mode():
    geometry = make_grid(8, 8, 4, 4)
    with pytest.raises(ValueError):
        batch_descriptors(geometry, np.zeros((5, 8, 8, 1)), "luma", 0.2)


# --- initialization -------------------------------------------------------------


def test_initialize_builds_models_for_every_cell():
    video, base = noisy_video(20, 8, 12, seed=1)
    config = EngineConfig(init_frames=20)
    state = initialize(video, config)
    assert state.geometry.locations == 6
    covered = np.concatenate([b.indices for b in state.buckets])
    assert sorted(covered) == list(range(6))
    for bucket in state.buckets:
        g, m, d = bucket.c.shape
        assert bucket.lam.shape == (g, d)
        assert bucket.a.shape == (g, d, d)
        assert bucket.z_latest.shape == (g, d)
        assert bucket.n_states == 4              # 20 frames / depth 5
        assert bucket.observed[:, :4].all()      # seeded states are real data
        assert not bucket.observed[:, 4:].any()


def test_initialize_aux_mean_is_window_mean():
    video, _ = noisy_video(20, 8, 8, seed=2)
    state = initialize(video, EngineConfig(init_frames=20))
    assert np.allclose(state.aux_mean, video[:20].astype(np.float64).mean(axis=0))


def test_initialize_insufficient_frames():
    video, _ = noisy_video(30, 8, 8, seed=3)
    with pytest.raises(InsufficientData):
        initialize(video[:10], EngineConfig(init_frames=20))
    with pytest.raises(InsufficientData):
        initialize(video[:8], EngineConfig(init_frames=8))  # one window only


def test_initialize_rejects_bad_channel_count():
    with pytest.raises(ValueError):
        initialize(np.zeros((20, 8, 8, 2), dtype=np.uint8), EngineConfig(init_frames=20))


# --- step validation ---------------------------------------------------------------


def test_step_validates_window():
    video, _ = noisy_video(25, 8, 8, seed=4)
    state = initialize(video[:20], EngineConfig(init_frames=20))
    with pytest.raises(ValueError, match="frame size"):
        step(state, np.zeros((5, 8, 12, 1), dtype=np.uint8))
    with pytest.raises(ValueError, match="channel"):
        step(state, np.zeros((5, 8, 8, 3), dtype=np.uint8))
    with pytest.raises(ValueError, match="exactly 5"):
        step(state, video[20:23])


def test_step_masks_and_labels_are_consistent():
    video, base = noisy_video(30, 8, 12, seed=5)
    config = EngineConfig(init_frames=20, min_area=3)
    state = initialize(video[:20], config)
    result = step(state, video[20:25])
    assert result.masks.shape == (5, 8, 12)
    assert result.raw_masks.shape == (5, 8, 12)
    assert not (result.masks & ~result.raw_masks).any()   # cleaning only removes
    assert result.brick_background.shape == (2, 3)
    assert np.array_equal(background_flags(state), result.brick_background)
    assert state.steps == 1
    assert set(result.timings) == {
        "descriptors", "segmentation", "maintenance", "assembly", "postprocess",
    }


def test_quiet_scene_stays_background():
    video, _ = noisy_video(40, 8, 12, seed=6)
    config = EngineConfig(init_frames=20)
    state = initialize(video[:20], config)
    for start in (20, 25, 30, 35):
        result = step(state, video[start : start + 5])
        assert result.brick_background.all()
        assert not result.masks.any()


# --- the single-cell mirror ----------------------------------------------------------


def mirror_cell_update(model, v, voxel_shape, mode, config):
    """One cell's engine step recomputed with the single-model functions."""
    residuals = compute_residuals(model, v)
    label = classify(residuals, voxel_shape, mode,
                     t_omega=config.effective_t_omega,
                     t_eps=config.effective_t_eps)
    v_hat = synthesize(model)
    v_bar = compose(v, label, v_hat, mode)
    v_tilde, _ = robust_reweight(model, v_bar, config.beta)
    update_appearance(model, v_tilde, config.alpha)
    z_new = model.c.T @ v_tilde
    observed = [True] * len(model.states) + [label.is_background]
    update_dynamics(model, z_new, config.t_deps, observed=observed)
    return model, label


@pytest.mark.parametrize("mode", ["rgb", "cs_stltp"])
def test_engine_step_equals_single_model_mirror(mode):
    channels = 3 if mode == "rgb" else 1
    video, base = noisy_video(25, 8, 12, channels=channels, seed=7)
    config = EngineConfig(mode=mode, init_frames=20, min_area=1)
    state = initialize(video[:20], config)

    window = video[20:25]
    volume = window.astype(np.float64)
    geometry = state.geometry
    # paint a bright square over cell (2, 0) so both label branches appear
    window = window.copy()
    window[:, 0:4, 8:12] = 250
    volume = window.astype(np.float64)

    mirrors = {}
    labels = {}
    for gx, gy in [(0, 0), (2, 0), (1, 1)]:
        cell_model = model_at(state, gx, gy)
        brick = VideoBrick(
            grid_x=gx, grid_y=gy, frame_start=20,
            x0=int(geometry.x0[gx]), y0=int(geometry.y0[gy]),
            width=4, height=4, volume=volume,
        )
        v = brick_descriptor(brick, mode=mode, tau=config.tau).values
        mirrors[gx, gy], labels[gx, gy] = mirror_cell_update(
            cell_model, v, (5, 4, 4, channels), mode, config
        )

    result = step(state, window)

    saw_foreground = False
    for (gx, gy), mirrored in mirrors.items():
        after = model_at(state, gx, gy)
        label = labels[gx, gy]
        assert label.is_background == result.brick_background[gy, gx]
        saw_foreground |= not label.is_background
        assert np.allclose(after.c, mirrored.c, atol=1e-8), (gx, gy)
        assert np.allclose(after.lam, mirrored.lam, atol=1e-8)
        assert np.allclose(after.a, mirrored.a, atol=1e-8)
        assert after.d_eps == mirrored.d_eps
        assert np.allclose(after.b, mirrored.b, atol=1e-8)
        assert np.allclose(after.z_latest, mirrored.z_latest, atol=1e-8)
        if mode == "rgb":
            x0, y0 = int(geometry.x0[gx]), int(geometry.y0[gy])
            region = result.raw_masks[:, y0 : y0 + 4, x0 : x0 + 4]
            assert np.array_equal(region, label.voxel_mask)
    assert saw_foreground                       # the painted square tripped
    assert labels[0, 0].is_background


# --- streaming ------------------------------------------------------------------------


def test_process_video_shapes_and_init_frames():
    video, _ = noisy_video(38, 8, 12, seed=8)
    config = EngineConfig(init_frames=20)
    masks, state = process_video(video, config)
    assert masks.shape == (38, 8, 12)
    assert not masks[:20].any()                 # init frames are background
    assert state.steps == 4                     # 18 streamed frames, tail padded


def test_process_video_tail_padding_emits_all_frames():
    video, base = noisy_video(27, 8, 8, seed=9)
    bright = video.copy()
    bright[24:, 0:4, 0:4] = 255                 # object appears in the tail
    config = EngineConfig(init_frames=20, min_area=1)
    masks, _ = process_video(bright, config)
    assert masks.shape[0] == 27
    assert masks[24:, 0:4, 0:4].any()


def test_process_video_stride_one():
    video, _ = noisy_video(26, 8, 8, seed=10)
    config = EngineConfig(init_frames=20, stride=1)
    masks, state = process_video(video, config)
    assert masks.shape == (26, 8, 8)
    assert state.steps == 6                     # one window per frame offset


def test_process_video_grayscale_without_channel_axis():
    video, _ = noisy_video(26, 8, 8, seed=11)
    masks, _ = process_video(video[..., 0], EngineConfig(init_frames=20))
    assert masks.shape == (26, 8, 8)


# --- post-processing ----------------------------------------------------------------


def test_remove_small_components_area_threshold():
    mask = np.zeros((12, 40), dtype=bool)
    mask[1:5, 1:6] = True                       # 20 px: kept at min_area 20
    mask[7:8, 10:29] = True                     # 19 px: dropped
    out = remove_small_components(mask, 20)
    assert out[1:5, 1:6].all()
    assert not out[7:8, 10:29].any()


def test_remove_small_components_diagonal_connectivity():
    mask = np.zeros((6, 6), dtype=bool)
    mask[0, 0] = mask[1, 1] = mask[2, 2] = True  # 8-connected diagonal chain
    assert remove_small_components(mask, 3).sum() == 3
    assert remove_small_components(mask, 4).sum() == 0


def test_remove_small_components_trivial_cases():
    mask = np.zeros((4, 4), dtype=bool)
    mask[0, 0] = True
    out = remove_small_components(mask, 1)
    assert np.array_equal(out, mask)
    out[0, 0] = False                            # result is a copy
    assert mask[0, 0]
    empty = remove_small_components(np.zeros((4, 4), dtype=bool), 5)
    assert not empty.any()


# --- model access ----------------------------------------------------------------------


def test_model_at_bounds_and_copy_semantics():
    video, _ = noisy_video(20, 8, 12, seed=12)
    state = initialize(video, EngineConfig(init_frames=20))
    with pytest.raises(IndexError):
        model_at(state, 3, 0)
    with pytest.raises(IndexError):
        model_at(state, 0, 2)
    model = model_at(state, 1, 1)
    model.c[:] = 0.0
    model.z_latest[:] = 99.0
    fresh = model_at(state, 1, 1)
    assert not np.allclose(fresh.c, 0.0)         # engine state untouched
    assert not np.allclose(fresh.z_latest, 99.0)


def test_background_flags_shape():
    video, _ = noisy_video(20, 8, 12, seed=13)
    state = initialize(video, EngineConfig(init_frames=20))
    flags = background_flags(state)
    assert flags.shape == (2, 3)
    assert flags.all()                           # nothing streamed yet
