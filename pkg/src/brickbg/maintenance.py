"""Online model maintenance with occlusion compensation.

After a brick is labelled, the model is updated from a composed
observation rather than the raw one: foreground voxels are replaced by the
model's own one-step prediction so moving objects never leak into the
background model.  The composed vector is then down-weighted entrywise by
a robust influence function before a rank-one basis update and a dynamics
refit over the state ring buffer.

The basis update avoids any m x m work: with Y = [sqrt((1-alpha) lam_j) c_j,
sqrt(alpha) v~], the eigendecomposition of the small (d+1) x (d+1) Gram
matrix Y^T Y yields the updated spectrum, and mapping its eigenvectors
through Y recovers the new basis, which is re-orthonormalized and kept
sign-continuous with the previous one.
"""

from __future__ import annotations

import numpy as np

from . import linalg
from .features import MODE_CS, MODE_RGB, MODES, BrickDescriptor
from .segmentation import BrickLabel
from .subspace import (
    DEFAULT_T_DEPS,
    SubspaceModel,
    fit_dynamics_stack,
)

DEFAULT_ALPHA = 0.05
DEFAULT_BETA = 2.3849

# Floor applied to the per-entry robust scale so weights stay defined for
# degenerate (zero-spectrum) models.
RHO_FLOOR = 1e-9


def _vector(v) -> np.ndarray:
    vec = v.values if isinstance(v, BrickDescriptor) else np.asarray(v, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError("expected a vector")
    return vec


def synthesize(model: SubspaceModel) -> np.ndarray:
    """One-step prediction of the next descriptor: C (A z_latest)."""
    return model.c @ (model.a @ model.z_latest)


def compose(v_new, label: BrickLabel, v_hat, mode: str) -> np.ndarray:
    """Blend the observation with the prediction according to the label.

    rgb: per-voxel -- foreground voxels (all their channel entries) come
    from the prediction, background voxels from the observation.
    cs_stltp: histograms are not voxel-separable, so a foreground brick is
    replaced by the prediction wholesale.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    v_new = _vector(v_new)
    v_hat = _vector(v_hat)
    if v_new.shape != v_hat.shape:
        raise ValueError("observation and prediction lengths differ")
    if mode == MODE_CS:
        return v_new.copy() if label.is_background else v_hat.copy()
    mask = np.asarray(label.voxel_mask, dtype=bool)
    channels = v_new.size // mask.size
    if channels * mask.size != v_new.size:
        raise ValueError("voxel mask does not tile the descriptor")
    entry_mask = np.repeat(mask.reshape(-1), channels)
    return np.where(entry_mask, v_hat, v_new)


def robust_scale(c: np.ndarray, lam: np.ndarray, beta: float) -> np.ndarray:
    """Per-entry scale rho_k = max_j beta sqrt(lam_j) |c_jk|, floored."""
    rho = (beta * np.sqrt(np.maximum(lam, 0.0))[..., None, :] * np.abs(c)).max(axis=-1)
    return np.maximum(rho, RHO_FLOOR)


def weight(r, rho):
    """Downweighting function w(r) = 1 / (1 + (r / rho)^2)."""
    ratio = np.asarray(r, dtype=np.float64) / rho
    return 1.0 / (1.0 + ratio * ratio)


def robust_reweight(model: SubspaceModel, v_bar, beta: float = DEFAULT_BETA):
    """Scale composed entries by sqrt of their robust weight.

    Returns ``(v_tilde, weights)``; entries whose reconstruction residual
    is large relative to the model spectrum are shrunk toward zero.
    """
    v_bar = _vector(v_bar)
    r = model.c @ (model.c.T @ v_bar) - v_bar
    rho = robust_scale(model.c, model.lam, beta)
    w = weight(r, rho)
    return np.sqrt(w) * v_bar, w


def update_basis_stack(c: np.ndarray, lam: np.ndarray, v_tilde: np.ndarray, alpha: float):
    """Stacked incremental basis update.

    ``c`` is (g, m, d), ``lam`` (g, d), ``v_tilde`` (g, m).  Returns the
    updated ``(c, lam)``.  The new basis is exactly orthonormal (QR pass)
    and each column keeps the orientation of its predecessor.
    """
    g, m, d = c.shape
    y = np.concatenate(
        [np.sqrt((1.0 - alpha) * np.maximum(lam, 0.0))[:, None, :] * c,
         np.sqrt(alpha) * v_tilde[:, :, None]],
        axis=2,
    )                                           # (g, m, d+1)
    gram = np.swapaxes(y, 1, 2) @ y
    gram = 0.5 * (gram + np.swapaxes(gram, 1, 2))
    vals, vecs = linalg.eigh_stack(gram)        # descending
    top_vals = vals[:, :d]
    mapped = y @ vecs[:, :, :d]                 # (g, m, d)
    norms = np.linalg.norm(mapped, axis=1)
    mapped = np.where(norms[:, None, :] > 0.0, mapped / np.where(norms == 0.0, 1.0, norms)[:, None, :], 0.0)
    q, r = np.linalg.qr(mapped)
    diag = np.diagonal(r, axis1=1, axis2=2)
    signs = np.where(diag < 0.0, -1.0, 1.0)
    q = q * signs[:, None, :]
    cont = np.where(np.sum(q * c, axis=1) < 0.0, -1.0, 1.0)
    q = q * cont[:, None, :]
    return q, np.maximum(top_vals, 0.0)


def update_appearance(model: SubspaceModel, v_tilde, alpha: float = DEFAULT_ALPHA):
    """Fold one reweighted observation into the appearance model in place."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    v_tilde = _vector(v_tilde)
    if v_tilde.shape[0] != model.m:
        raise ValueError("observation length does not match the model")
    c, lam = update_basis_stack(model.c[None], model.lam[None], v_tilde[None], alpha)
    model.c = c[0]
    model.lam = lam[0]
    return model.c, model.lam


def update_dynamics(model: SubspaceModel, z_new, t_deps: float = DEFAULT_T_DEPS,
                    observed=None):
    """Append a state and refit (A, B) over the ring buffer in place.

    ``z_new`` should be the new observation expressed in the updated basis.
    With fewer than two buffered states the refit is skipped.  The noise
    dimension is re-selected each call, so ``b`` may grow or shrink.

    ``observed``, when given, is a boolean sequence aligned with the ring
    buffer after the append, marking states that came from real data; see
    ``fit_dynamics_stack`` for how synthesized states are excluded from the
    noise fit.
    """
    z_new = np.asarray(z_new, dtype=np.float64)
    if z_new.shape != (model.d,):
        raise ValueError("state dimension mismatch")
    model.states.append(z_new.copy())
    model.z_latest = z_new.copy()
    if len(model.states) < 2:
        return model.a, model.b
    window = np.stack(model.states, axis=0)[None]     # (1, k, d)
    flags = None if observed is None else np.asarray(observed, dtype=bool)[None]
    a, b, b_pinv, d_eps = fit_dynamics_stack(window, t_deps, observed=flags)
    de = int(d_eps[0])
    model.a = a[0]
    model.b = b[0][:, :de]
    model.b_pinv = b_pinv[0][:de, :]
    return model.a, model.b
