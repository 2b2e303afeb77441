"""Foreground/background decisions for incoming bricks.

A new descriptor v is split against the location's model into an
appearance residual (the part outside the basis) and a state innovation
expressed in noise coordinates:

    z' = C^T v
    omega = v - C z'
    eps = pinv(B) (z' - A z_latest)

A brick counts as background only when every innovation coordinate stays
below the threshold; when the model has no noise dimensions (d_eps = 0)
the appearance residual alone decides.  Non-background bricks are refined
to voxel granularity: in rgb mode each voxel is foreground when any of its
channels' appearance residuals exceed the threshold, in cs_stltp mode the
histogram is not voxel-separable so the whole brick is marked (the
pipeline re-refines it against a running pixel mean).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import MODE_CS, MODE_RGB, MODES, BrickDescriptor
from .subspace import SubspaceModel

# Residual thresholds from the reference operating point.
DEFAULT_T_OMEGA = {MODE_CS: 3.0, MODE_RGB: 5.0}
DEFAULT_T_EPS = {MODE_CS: 3.0, MODE_RGB: 4.0}


@dataclass
class ResidualPair:
    omega: np.ndarray     # (m,) appearance residual
    epsilon: np.ndarray   # (d_eps,) state innovation, empty when d_eps = 0
    z_prime: np.ndarray   # (d,) projected state


@dataclass
class BrickLabel:
    is_background: bool
    voxel_mask: np.ndarray  # (t, h, w) bool, True = foreground


def _vector(v) -> np.ndarray:
    vec = v.values if isinstance(v, BrickDescriptor) else np.asarray(v, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError("descriptor must be a vector")
    return vec


def compute_residuals(model: SubspaceModel, v) -> ResidualPair:
    vec = _vector(v)
    if vec.shape[0] != model.m:
        raise ValueError(f"descriptor length {vec.shape[0]} != model dimension {model.m}")
    z_prime = model.c.T @ vec
    omega = vec - model.c @ z_prime
    if model.d_eps:
        epsilon = model.b_pinv @ (z_prime - model.a @ model.z_latest)
    else:
        epsilon = np.zeros(0)
    return ResidualPair(omega=omega, epsilon=epsilon, z_prime=z_prime)


def classify(
    residuals: ResidualPair,
    voxel_shape,
    mode: str,
    t_omega: float | None = None,
    t_eps: float | None = None,
) -> BrickLabel:
    """Label one brick from its residuals.

    ``voxel_shape`` is (t, h, w, channels) describing the descriptor
    layout in rgb mode (and the mask shape in either mode).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    t, h, w, ch = voxel_shape
    if t_omega is None:
        t_omega = DEFAULT_T_OMEGA[mode]
    if t_eps is None:
        t_eps = DEFAULT_T_EPS[mode]

    if residuals.epsilon.size:
        background = bool(np.abs(residuals.epsilon).max() < t_eps)
    else:
        background = bool(np.abs(residuals.omega).max() < t_omega)

    if background:
        return BrickLabel(True, np.zeros((t, h, w), dtype=bool))
    if mode == MODE_RGB:
        entries = np.abs(residuals.omega).reshape(t, h, w, ch)
        return BrickLabel(False, (entries > t_omega).any(axis=-1))
    return BrickLabel(False, np.ones((t, h, w), dtype=bool))
