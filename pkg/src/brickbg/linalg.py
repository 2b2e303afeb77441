"""Small dense linear-algebra kernel used by the model code.

Thin wrappers around LAPACK (through numpy) that pin down the conventions
the rest of the package relies on: descending spectra, deterministic
singular-vector signs, a shared zero cutoff for rank decisions, and
minimum-norm least squares.  Every routine also exists in a stacked form
(leading batch dimension) so the pipeline can run one call across many
spatial locations; the single-matrix API is a stack of one, which keeps
both paths numerically identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Singular values below this fraction of the largest one are treated as
# exact zeros (static video bricks produce genuinely rank-deficient data).
ZERO_CUTOFF = 1e-12

# Default relative cutoff for pseudo-inverse reciprocals.
PINV_RTOL = 1e-10

# How many stacked matrices to hand to LAPACK at once; keeps transient
# buffers small without changing any per-matrix result.
_CHUNK = 1024


class NumericalFailure(RuntimeError):
    """An iterative LAPACK driver failed to converge."""


def _validated(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and column")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _chunked(fn, stack, *extra):
    """Apply fn over leading-axis chunks and concatenate the results."""
    n = stack.shape[0]
    if n <= _CHUNK:
        return fn(stack, *extra)
    parts = [fn(stack[i : i + _CHUNK], *extra) for i in range(0, n, _CHUNK)]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(cols, axis=0) for cols in zip(*parts))
    return np.concatenate(parts, axis=0)


def _fix_signs(u: np.ndarray, q: np.ndarray):
    """Make the largest-magnitude entry of every left vector positive.

    The matching right vector is flipped with it so the factorization is
    unchanged.  Ties and zero columns resolve to +1 deterministically.
    """
    k = np.argmax(np.abs(u), axis=-2)
    picked = np.take_along_axis(u, k[..., None, :], axis=-2)[..., 0, :]
    signs = np.where(picked < 0.0, -1.0, 1.0)
    return u * signs[..., None, :], q * signs[..., None, :]


def _svd_chunk(w: np.ndarray):
    try:
        u, s, vh = np.linalg.svd(w, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rare driver issue
        raise NumericalFailure(f"SVD did not converge: {exc}") from None
    q = np.swapaxes(vh, -1, -2)
    u, q = _fix_signs(u, q)
    smax = s[..., :1]
    s = np.where(s < ZERO_CUTOFF * smax, 0.0, s)
    return u, s, q


def svd_stack(w: np.ndarray):
    """Thin SVD of a (g, m, n) stack: (u, sigma, q) with sigma descending."""
    return _chunked(_svd_chunk, w)


@dataclass
class SvdResult:
    u: np.ndarray
    sigma: np.ndarray
    q: np.ndarray  # right singular vectors, as columns


def svd(w) -> SvdResult:
    """Thin SVD with non-increasing singular values.

    Columns of ``u``/``q`` are sign-normalized so results are reproducible
    run to run; singular values below ``ZERO_CUTOFF`` times the largest
    are snapped to exact zero.
    """
    w = _validated(w, "svd input")
    u, s, q = svd_stack(w[None])
    return SvdResult(u[0], s[0], q[0])


def _eigh_chunk(s: np.ndarray):
    try:
        vals, vecs = np.linalg.eigh(s)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from None
    return vals[..., ::-1].copy(), vecs[..., ::-1].copy()


def eigh_stack(s: np.ndarray):
    """Symmetric eigendecomposition of a stack, eigenvalues descending."""
    return _chunked(_eigh_chunk, s)


def eig_sym(s, sym_tol: float = 1e-9):
    """Eigendecomposition of a symmetric matrix.

    Returns ``(values, vectors)`` with values sorted non-increasing and
    orthonormal eigenvector columns.  Inputs asymmetric beyond ``sym_tol``
    (relative to the matrix magnitude) are rejected.
    """
    s = _validated(s, "eig_sym input")
    if s.shape[0] != s.shape[1]:
        raise ValueError(f"eig_sym needs a square matrix, got {s.shape}")
    scale = max(1.0, float(np.abs(s).max()))
    asym = float(np.abs(s - s.T).max())
    if asym > sym_tol * scale:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    sym = 0.5 * (s + s.T)
    vals, vecs = eigh_stack(sym[None])
    return vals[0], vecs[0]


def _pinv_chunk(a: np.ndarray, tol):
    u, s, q = _svd_chunk(a)
    if tol is None:
        cut = PINV_RTOL * s[..., :1]
    else:
        cut = np.full_like(s[..., :1], float(tol))
    inv = np.where(s > cut, np.divide(1.0, s, out=np.zeros_like(s), where=s > 0), 0.0)
    return (q * inv[..., None, :]) @ np.swapaxes(u, -1, -2)


def pinv_stack(a: np.ndarray, tol=None):
    return _chunked(_pinv_chunk, a, tol)


def pinv(a, tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse via the SVD.

    Reciprocals of singular values at or below ``tol`` (default
    ``PINV_RTOL`` times the largest singular value) are zeroed.
    """
    a = _validated(a, "pinv input")
    if tol is not None and tol < 0:
        raise ValueError("pinv tolerance must be non-negative")
    return pinv_stack(a[None], tol)[0]


def lstsq(coeffs, rhs) -> np.ndarray:
    """Minimum-norm least-squares solution of ``coeffs @ x = rhs``.

    Computed through the pseudo-inverse, so rank-deficient systems get the
    smallest-norm minimizer.
    """
    coeffs = _validated(coeffs, "lstsq coefficients")
    rhs = np.asarray(rhs, dtype=np.float64)
    squeeze = rhs.ndim == 1
    if squeeze:
        rhs = rhs[:, None]
    rhs = _validated(rhs, "lstsq right-hand side")
    if rhs.shape[0] != coeffs.shape[0]:
        raise ValueError(
            f"shape mismatch: coefficients {coeffs.shape} vs rhs {rhs.shape}"
        )
    x = pinv(coeffs) @ rhs
    return x[:, 0] if squeeze else x
