"""Per-brick appearance descriptors.

A video is cut into bricks: w x h patches tracked over t consecutive
frames.  Two descriptor flavours are supported:

``cs_stltp``
    Center-symmetric spatio-temporal ternary patterns.  Around every voxel
    four sampling planes are placed, each containing the vertical (y) axis,
    with in-plane second directions stepping through the x-t subspace at
    0, 45, 90 and 135 degrees.  On the 3x3 ring of each plane the four
    center-symmetric neighbour pairs are compared with a tolerant ternary
    sign, giving 16 trits per voxel.  Each voxel's trit vector is quantized
    to one of 48 levels (transition count x sign of the trit sum) and
    pooled into a per-channel histogram of raw counts, four counts per
    voxel (one per plane).

``rgb``
    The raw voxel intensities stacked in (t, y, x, channel) order.

Neighbour lookups clamp to the edges of the supplied frame volume, so the
first/last frames and the image border reuse their nearest voxels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MODE_CS = "cs_stltp"
MODE_RGB = "rgb"
MODES = (MODE_CS, MODE_RGB)

PATTERN_LENGTH = 16
HISTOGRAM_BINS = 48
COUNTS_PER_VOXEL = 4  # one per sampling plane

DEFAULT_TAU = 0.2

# In-plane second directions, as (dx, dt) steps: 0, 45, 90, 135 degrees in
# the x-t subspace.  Every plane also extends along y.
_PLANE_DIRS = ((1, 0), (1, 1), (0, 1), (-1, 1))

# First half of the 3x3 ring, as (a, b) = (in-plane step, y step).  The
# center-symmetric partner of (a, b) is (-a, -b).
_HALF_RING = ((-1, -1), (0, -1), (1, -1), (1, 0))


def _pair_offsets():
    offs = []
    for dx, dt in _PLANE_DIRS:
        for a, b in _HALF_RING:
            offs.append((a * dt, b, a * dx))  # (dt, dy, dx)
    return tuple(offs)


# 16 (dt, dy, dx) displacements of the first pair member, plane-major; the
# second member sits at the negated displacement.
PAIR_OFFSETS = _pair_offsets()


def ternary_sign(p_m: float, p_s: float, tau: float) -> int:
    """Tolerant three-way comparison of a neighbour pair.

    +1 when ``p_m`` exceeds ``(1 + tau) * p_s``, -1 when it falls below
    ``(1 - tau) * p_s``, else 0.
    """
    if p_m > (1.0 + tau) * p_s:
        return 1
    if p_m < (1.0 - tau) * p_s:
        return -1
    return 0


@dataclass
class TernaryPattern:
    """16 trits for one voxel: four planes x four center-symmetric pairs."""

    trits: np.ndarray

    def __post_init__(self):
        self.trits = np.asarray(self.trits, dtype=np.int8)
        if self.trits.shape != (PATTERN_LENGTH,):
            raise ValueError(f"expected {PATTERN_LENGTH} trits, got {self.trits.shape}")
        if not np.isin(self.trits, (-1, 0, 1)).all():
            raise ValueError("trits must be -1, 0 or +1")


def _check_volume(volume) -> np.ndarray:
    volume = np.asarray(volume, dtype=np.float64)
    if volume.ndim != 3:
        raise ValueError(f"expected a (t, y, x) volume, got shape {volume.shape}")
    return volume


def cs_stltp_pixel(volume, x: int, y: int, t: int, tau: float = DEFAULT_TAU) -> TernaryPattern:
    """Ternary pattern of the voxel at (x, y, t) in a single-channel volume.

    ``volume`` is indexed (t, y, x); out-of-range neighbours clamp to the
    nearest edge, including before frame 0.
    """
    volume = _check_volume(volume)
    nt, ny, nx = volume.shape
    if not (0 <= x < nx and 0 <= y < ny and 0 <= t < nt):
        raise ValueError(f"voxel ({x}, {y}, {t}) outside volume {volume.shape}")
    trits = np.empty(PATTERN_LENGTH, dtype=np.int8)
    for i, (dt, dy, dx) in enumerate(PAIR_OFFSETS):
        pm = volume[
            min(max(t + dt, 0), nt - 1),
            min(max(y + dy, 0), ny - 1),
            min(max(x + dx, 0), nx - 1),
        ]
        ps = volume[
            min(max(t - dt, 0), nt - 1),
            min(max(y - dy, 0), ny - 1),
            min(max(x - dx, 0), nx - 1),
        ]
        trits[i] = ternary_sign(pm, ps, tau)
    return TernaryPattern(trits)


def pattern_to_bin(pattern) -> int:
    """Quantize a 16-trit pattern to one of 48 histogram bins.

    Bin index is ``transitions * 3 + sign + 1`` where ``transitions``
    counts adjacent unequal trits (0..15) and ``sign`` is the sign of the
    trit sum.
    """
    if isinstance(pattern, TernaryPattern):
        trits = pattern.trits
    else:
        trits = TernaryPattern(np.asarray(pattern)).trits
    transitions = int(np.count_nonzero(trits[1:] != trits[:-1]))
    s = int(np.sign(trits.sum()))
    return transitions * 3 + s + 1


def _shifted(vol: np.ndarray, dt: int, dy: int, dx: int) -> np.ndarray:
    nt, ny, nx = vol.shape
    it = np.clip(np.arange(nt) + dt, 0, nt - 1)
    iy = np.clip(np.arange(ny) + dy, 0, ny - 1)
    ix = np.clip(np.arange(nx) + dx, 0, nx - 1)
    return vol[np.ix_(it, iy, ix)]


def trit_volume(volume, tau: float = DEFAULT_TAU) -> np.ndarray:
    """All 16 trits for every voxel of a single-channel volume.

    Returns an int8 array of shape (16, t, y, x), pair order matching
    ``PAIR_OFFSETS``.
    """
    volume = _check_volume(volume)
    out = np.empty((PATTERN_LENGTH,) + volume.shape, dtype=np.int8)
    for i, (dt, dy, dx) in enumerate(PAIR_OFFSETS):
        pm = _shifted(volume, dt, dy, dx)
        ps = _shifted(volume, -dt, -dy, -dx)
        hi = pm > (1.0 + tau) * ps
        lo = pm < (1.0 - tau) * ps
        out[i] = hi.astype(np.int8) - lo.astype(np.int8)
    return out


def bin_volume(volume, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Histogram-bin index of every voxel in a single-channel volume."""
    trits = trit_volume(volume, tau)
    transitions = np.zeros(volume.shape, dtype=np.int16)
    for i in range(PATTERN_LENGTH - 1):
        transitions += trits[i] != trits[i + 1]
    signs = np.sign(trits.sum(axis=0, dtype=np.int16)).astype(np.int16)
    return transitions * 3 + signs + 1


@dataclass
class VideoBrick:
    """A w x h x t voxel window into a batch of frames.

    ``volume`` holds the full frames (t, y, x, channels) the brick was cut
    from; descriptor extraction reads neighbours from it so bricks see
    across their own spatial boundary.
    """

    grid_x: int
    grid_y: int
    frame_start: int
    x0: int
    y0: int
    width: int
    height: int
    volume: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.volume = np.asarray(self.volume, dtype=np.float64)
        if self.volume.ndim == 3:
            self.volume = self.volume[..., None]
        if self.volume.ndim != 4:
            raise ValueError(f"volume must be (t, y, x[, c]), got {self.volume.shape}")
        nt, ny, nx, _ = self.volume.shape
        if self.width < 1 or self.height < 1 or nt < 1:
            raise ValueError("brick dimensions must be positive")
        if not (0 <= self.x0 and self.x0 + self.width <= nx):
            raise ValueError("brick x-window outside volume")
        if not (0 <= self.y0 and self.y0 + self.height <= ny):
            raise ValueError("brick y-window outside volume")

    @property
    def depth(self) -> int:
        return self.volume.shape[0]

    @property
    def channels(self) -> int:
        return self.volume.shape[3]

    @property
    def voxels(self) -> np.ndarray:
        """(t, h, w, channels) view of the brick's own voxels."""
        return self.volume[:, self.y0 : self.y0 + self.height, self.x0 : self.x0 + self.width, :]


@dataclass
class BrickDescriptor:
    """Feature vector of one brick plus the mode that produced it."""

    values: np.ndarray
    mode: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("descriptor values must be a vector")
        if self.mode not in MODES:
            raise ValueError(f"unknown descriptor mode {self.mode!r}")


def brick_descriptor(brick: VideoBrick, mode: str = MODE_CS, tau: float = DEFAULT_TAU) -> BrickDescriptor:
    """Descriptor of one brick.

    cs_stltp: 48 raw histogram counts per channel, concatenated channel by
    channel; every voxel contributes four counts to its pattern's bin.
    rgb: voxel intensities flattened in (t, y, x, channel) order.
    """
    if mode == MODE_RGB:
        return BrickDescriptor(brick.voxels.reshape(-1).copy(), MODE_RGB)
    if mode != MODE_CS:
        raise ValueError(f"unknown descriptor mode {mode!r}")
    chunks = []
    for c in range(brick.channels):
        bins = bin_volume(brick.volume[..., c], tau)
        window = bins[:, brick.y0 : brick.y0 + brick.height, brick.x0 : brick.x0 + brick.width]
        hist = np.bincount(window.reshape(-1), minlength=HISTOGRAM_BINS)
        chunks.append(hist.astype(np.float64) * COUNTS_PER_VOXEL)
    return BrickDescriptor(np.concatenate(chunks), MODE_CS)
