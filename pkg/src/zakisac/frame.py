"""Delay-Doppler grid geometry, frame assembly and constellations.

Vectors over the M x N delay-Doppler grid are linearized with
``idx(l, k) = k * M + l`` (delay index fastest). Every module in the package
uses this single convention; ``grid_to_vec`` and ``vec_to_grid`` convert.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

Rect = Tuple[Tuple[int, int], Tuple[int, int]]


@dataclass(frozen=True)
class GridConfig:
    """Lattice and RF parameters of a Zak-OTFS frame.

    Attributes:
        M: Number of delay bins.
        N: Number of Doppler bins.
        delta_f: Doppler period (subcarrier spacing) in Hz.
        f_c: Carrier frequency in Hz.
    """

    M: int = 8
    N: int = 16
    delta_f: float = 30e3
    f_c: float = 24e9

    def __post_init__(self):
        if int(self.M) < 2 or int(self.N) < 2:
            raise ValueError("M and N must both be at least 2")
        if not self.delta_f > 0:
            raise ValueError("delta_f must be positive")

    @property
    def T(self) -> float:
        """Delay period in seconds, always ``1 / delta_f``."""
        return 1.0 / self.delta_f

    @property
    def MN(self) -> int:
        return self.M * self.N

    @property
    def F_s(self) -> float:
        """Sample rate (occupied bandwidth) in Hz."""
        return self.M * self.delta_f

    @property
    def delay_resolution(self) -> float:
        return 1.0 / (self.M * self.delta_f)

    @property
    def doppler_resolution(self) -> float:
        return 1.0 / (self.N * self.T)


def grid_to_vec(X: np.ndarray) -> np.ndarray:
    """Flatten an (M, N, ...) array to (MN, ...) with index ``k*M + l``."""
    X = np.asarray(X)
    return np.swapaxes(X, 0, 1).reshape((X.shape[0] * X.shape[1],) + X.shape[2:])


def vec_to_grid(x: np.ndarray, M: int, N: int) -> np.ndarray:
    """Inverse of :func:`grid_to_vec`."""
    x = np.asarray(x)
    if x.shape[0] != M * N:
        raise ValueError(f"expected leading dimension {M * N}, got {x.shape[0]}")
    return np.swapaxes(x.reshape((N, M) + x.shape[1:]), 0, 1)


def _check_rect(rect, M: int, N: int, name: str) -> Rect:
    (l_lo, l_hi), (k_lo, k_hi) = rect
    l_lo, l_hi, k_lo, k_hi = int(l_lo), int(l_hi), int(k_lo), int(k_hi)
    if not (0 <= l_lo <= l_hi < M and 0 <= k_lo <= k_hi < N):
        raise ValueError(f"{name} {rect} is not inside the {M}x{N} grid")
    return (l_lo, l_hi), (k_lo, k_hi)


def _inside(rect: Rect, l, k):
    (l_lo, l_hi), (k_lo, k_hi) = rect
    return (l >= l_lo) & (l <= l_hi) & (k >= k_lo) & (k <= k_hi)


@dataclass(frozen=True)
class FrameLayout:
    """Embedded-pilot frame layout.

    Attributes:
        grid: The grid this layout lives on.
        pilot: Pilot cell ``(l_p, k_p)``.
        pilot_region: Inclusive rectangle ``((l_lo, l_hi), (k_lo, k_hi))`` read
            by the model-free estimator.
        guard_region: Inclusive rectangle kept free of data.
        data_indices: Linear indices ``k*M + l`` of the data cells, ascending.
        pilot_amplitude: Real pilot amplitude.
    """

    grid: GridConfig
    pilot: Tuple[int, int]
    pilot_region: Rect
    guard_region: Rect
    data_indices: np.ndarray = field(repr=False, compare=False)
    pilot_amplitude: float

    @property
    def n_data(self) -> int:
        return int(self.data_indices.size)

    @property
    def n_guard(self) -> int:
        return self.grid.MN - self.n_data

    @property
    def pilot_index(self) -> int:
        return self.pilot[1] * self.grid.M + self.pilot[0]

    def pilot_offsets(self):
        """Delay and Doppler offsets of the pilot region relative to the pilot."""
        (l_lo, l_hi), (k_lo, k_hi) = self.pilot_region
        lp, kp = self.pilot
        return np.arange(l_lo - lp, l_hi - lp + 1), np.arange(k_lo - kp, k_hi - kp + 1)


def build_layout(grid: GridConfig, pilot_region, guard_region, pilot=None) -> FrameLayout:
    """Enumerate data cells and size the pilot for a nested pilot/guard layout.

    The pilot defaults to the grid centre ``(M // 2, N // 2)``. Its amplitude
    is ``sqrt(MN - n_data)`` so unit-power data gives total frame power MN.

    Raises:
        ValueError: If a rectangle leaves the grid, the rectangles are not
            nested, the pilot lies outside the pilot region, or no data cell
            remains.
    """
    M, N = grid.M, grid.N
    pilot_region = _check_rect(pilot_region, M, N, "pilot_region")
    guard_region = _check_rect(guard_region, M, N, "guard_region")
    if pilot is None:
        pilot = (M // 2, N // 2)
    pilot = (int(pilot[0]), int(pilot[1]))
    if not _inside(pilot_region, *pilot):
        raise ValueError(f"pilot {pilot} lies outside pilot_region {pilot_region}")
    (pl, ph), (pkl, pkh) = pilot_region
    if not (_inside(guard_region, pl, pkl) and _inside(guard_region, ph, pkh)):
        raise ValueError("pilot_region must be contained in guard_region")

    idx = np.arange(M * N)
    l, k = idx % M, idx // M
    data = idx[~_inside(guard_region, l, k)]
    if data.size == 0:
        raise ValueError("layout leaves no data cells")
    amp = float(np.sqrt(M * N - data.size))
    return FrameLayout(grid, pilot, pilot_region, guard_region, data, amp)


def default_layout(grid: GridConfig) -> FrameLayout:
    """Centred layout that reduces to the 8 x 16 reference frame.

    For M=8, N=16 this gives pilot (4, 8), pilot region [2,6]x[5,11] and guard
    [1,7]x[4,12]. Other sizes scale the half-widths as M/4, 3N/16 (pilot
    region) and 3M/8, N/4 (guard), rounded down.
    """
    M, N = grid.M, grid.N
    lp, kp = M // 2, N // 2
    pl, pk = max(M // 4, 0), max(3 * N // 16, 0)
    gl, gk = max(3 * M // 8, pl), max(N // 4, pk)
    pilot_region = ((lp - pl, lp + pl), (kp - pk, kp + pk))
    guard_region = ((max(lp - gl, 0), min(lp + gl, M - 1)), (max(kp - gk, 0), min(kp + gk, N - 1)))
    return build_layout(grid, pilot_region, guard_region, (lp, kp))


def assemble_frame(layout: FrameLayout, data_symbols, pilot_amplitude=None) -> np.ndarray:
    """Place the pilot and data symbols on the M x N grid.

    Args:
        layout: Frame layout.
        data_symbols: One complex symbol per data cell, in ``data_indices`` order.
        pilot_amplitude: Overrides ``layout.pilot_amplitude`` when given.

    Returns:
        Complex array of shape (M, N).
    """
    d = np.asarray(data_symbols, dtype=complex).ravel()
    if d.size != layout.n_data:
        raise ValueError(f"expected {layout.n_data} data symbols, got {d.size}")
    amp = layout.pilot_amplitude if pilot_amplitude is None else pilot_amplitude
    x = np.zeros(layout.grid.MN, dtype=complex)
    x[layout.data_indices] = d
    x[layout.pilot_index] = amp
    return vec_to_grid(x, layout.grid.M, layout.grid.N)


def frame_vector(layout: FrameLayout, data_symbols, pilot_amplitude=None) -> np.ndarray:
    """Same as :func:`assemble_frame` but returns the linearized vector."""
    return grid_to_vec(assemble_frame(layout, data_symbols, pilot_amplitude))


def extract_data(layout: FrameLayout, X_dd: np.ndarray) -> np.ndarray:
    """Read the data cells of a frame (grid or vector form)."""
    X_dd = np.asarray(X_dd)
    x = grid_to_vec(X_dd) if X_dd.ndim == 2 else X_dd
    return x[layout.data_indices].copy()


@dataclass(frozen=True)
class Constellation:
    """Unit-modulus PSK constellation with a Gray bit map.

    ``points[i]`` carries the bits of ``i`` written MSB first, so the QPSK map
    is 00 -> (1+j)/sqrt2, 01 -> (-1+j)/sqrt2, 11 -> (-1-j)/sqrt2,
    10 -> (1-j)/sqrt2.
    """

    kind: str
    points: np.ndarray = field(repr=False, compare=False)

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.points.size))

    @classmethod
    def make(cls, kind: str) -> "Constellation":
        kind = kind.upper()
        if kind == "BPSK":
            pts = np.array([1.0, -1.0], dtype=complex)
        elif kind == "QPSK":
            b0 = np.array([0, 0, 1, 1])
            b1 = np.array([0, 1, 0, 1])
            pts = ((1 - 2 * b1) + 1j * (1 - 2 * b0)) / np.sqrt(2)
        else:
            raise ValueError(f"unsupported constellation {kind!r}")
        return cls(kind, pts)

    def bits_to_symbols(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64).ravel()
        q = self.bits_per_symbol
        if bits.size % q:
            raise ValueError(f"bit count {bits.size} not divisible by {q}")
        weights = 1 << np.arange(q - 1, -1, -1)
        return self.points[bits.reshape(-1, q) @ weights]

    def decide(self, z) -> np.ndarray:
        """Nearest-point indices; ties go to the smallest index."""
        z = np.asarray(z, dtype=complex).ravel()
        return np.argmin(np.abs(z[:, None] - self.points[None, :]), axis=1)

    def symbols_to_bits(self, z) -> np.ndarray:
        """Hard decision followed by Gray demapping."""
        idx = self.decide(z)
        q = self.bits_per_symbol
        return ((idx[:, None] >> np.arange(q - 1, -1, -1)) & 1).ravel()

    def hard_decision(self, z) -> np.ndarray:
        return self.points[self.decide(z)]

    def project_hull(self, z):
        """Euclidean projection onto the convex hull of the points."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "BPSK":
            return np.clip(z.real, -1.0, 1.0) + 0j
        a = 1 / np.sqrt(2)
        return np.clip(z.real, -a, a) + 1j * np.clip(z.imag, -a, a)


def bits_to_symbols(constellation: Constellation, bits) -> np.ndarray:
    return constellation.bits_to_symbols(bits)


def symbols_to_bits(constellation: Constellation, z) -> np.ndarray:
    return constellation.symbols_to_bits(z)


def project_hull(constellation: Constellation, z):
    return constellation.project_hull(z)


def random_bits(rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.integers(0, 2, size=count)


def layout_from_config(grid: GridConfig, pilot_region: Sequence[int] | None = None,
                       guard_region: Sequence[int] | None = None) -> FrameLayout:
    """Build a layout from flat ``l_lo,l_hi,k_lo,k_hi`` tuples (or the default)."""
    if pilot_region is None and guard_region is None:
        return default_layout(grid)
    if pilot_region is None or guard_region is None:
        raise ValueError("pilot_region and guard_region must be given together")
    p = [int(v) for v in pilot_region]
    g = [int(v) for v in guard_region]
    return build_layout(grid, ((p[0], p[1]), (p[2], p[3])), ((g[0], g[1]), (g[2], g[3])))
