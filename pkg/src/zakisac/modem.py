"""Discrete Zak-OTFS modulation, demodulation and delay-Doppler channel kernels.

Conventions
-----------
* DFTs are unitary (``norm="ortho"``).
* The frequency-domain sample vector ``s`` is indexed ``m*N + k`` and sample
  ``n`` sits at frequency ``n / (N T)``.
* The twiddle matrix is ``W[l, k] = exp(-j 2 pi l k / (MN))``. With this sign
  the matrix input/output relation coincides with the discrete twisted
  convolution; the opposite sign does not.
* Delays and Dopplers in "cells" are ``tau * M * delta_f`` and ``nu * N * T``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel import PathSet
from .frame import GridConfig, grid_to_vec, vec_to_grid


def twiddle(grid: GridConfig) -> np.ndarray:
    """Twiddle matrix ``W`` of shape (M, N)."""
    l = np.arange(grid.M)[:, None]
    k = np.arange(grid.N)[None, :]
    return np.exp(-2j * np.pi * l * k / grid.MN)


def _check_len(v: np.ndarray, MN: int, name: str):
    if v.shape[0] != MN:
        raise ValueError(f"{name} must have leading length {MN}, got {v.shape[0]}")


def modulate(grid: GridConfig, x_dd) -> np.ndarray:
    """Map DD symbols (``k*M + l`` order) to frequency samples ``s``.

    Accepts a vector of length MN or an (MN, K) batch of column vectors.
    """
    x = np.asarray(x_dd, dtype=complex)
    _check_len(x, grid.MN, "x_dd")
    X = vec_to_grid(x, grid.M, grid.N)
    W = twiddle(grid).reshape((grid.M, grid.N) + (1,) * (x.ndim - 1))
    Z = np.fft.fft(X * W, axis=0, norm="ortho")
    return Z.reshape((grid.MN,) + x.shape[1:])


def demodulate(grid: GridConfig, r) -> np.ndarray:
    """Map time samples back to DD symbols; exact inverse of the transmit chain."""
    r = np.asarray(r, dtype=complex)
    _check_len(r, grid.MN, "r")
    R = np.fft.fft(r, axis=0, norm="ortho").reshape((grid.M, grid.N) + r.shape[1:])
    Xl = np.fft.ifft(R, axis=0, norm="ortho")
    W = twiddle(grid).reshape((grid.M, grid.N) + (1,) * (r.ndim - 1))
    return grid_to_vec(Xl * np.conj(W))


def delay_phase(MN: int, delay_cells: float) -> np.ndarray:
    """Diagonal of the delay operator, ``exp(-j 2 pi n x / MN)``."""
    return np.exp(-2j * np.pi * np.arange(MN) * delay_cells / MN)


def doppler_phase(MN: int, doppler_cells: float) -> np.ndarray:
    """Diagonal of the Doppler operator, ``exp(j 2 pi n y / MN)``."""
    return np.exp(2j * np.pi * np.arange(MN) * doppler_cells / MN)


def apply_time_channel(grid: GridConfig, s, paths: PathSet) -> np.ndarray:
    """Noise-free time-domain received samples ``sum_i h_i D_nu F^H B_tau s``."""
    s = np.asarray(s, dtype=complex)
    _check_len(s, grid.MN, "s")
    r = np.zeros_like(s)
    shape = (grid.MN,) + (1,) * (s.ndim - 1)
    for h, x, y in zip(paths.gains, paths.delay_cells(grid), paths.doppler_cells(grid)):
        B = delay_phase(grid.MN, x).reshape(shape)
        D = doppler_phase(grid.MN, y).reshape(shape)
        r += h * D * np.fft.ifft(B * s, axis=0, norm="ortho")
    return r


@lru_cache(maxsize=16)
def _transforms(M: int, N: int):
    grid = GridConfig(M, N)
    eye = np.eye(M * N, dtype=complex)
    mod = modulate(grid, eye)
    dem = demodulate(grid, eye)
    FH = np.fft.ifft(eye, axis=0, norm="ortho")
    for a in (mod, dem, FH):
        a.setflags(write=False)
    return mod, dem, FH


def modulation_matrix(grid: GridConfig) -> np.ndarray:
    """Dense matrix of :func:`modulate` (read-only, cached)."""
    return _transforms(grid.M, grid.N)[0]


def demodulation_matrix(grid: GridConfig) -> np.ndarray:
    return _transforms(grid.M, grid.N)[1]


def idft_matrix(MN: int) -> np.ndarray:
    """Unitary inverse DFT matrix ``F^H`` of size MN (cached)."""
    return _idft(MN)


@lru_cache(maxsize=16)
def _idft(MN: int) -> np.ndarray:
    F = np.fft.ifft(np.eye(MN, dtype=complex), axis=0, norm="ortho")
    F.setflags(write=False)
    return F


@dataclass(frozen=True)
class EffectiveChannel:
    """Dense DD-domain effective channel and how it was obtained."""

    H: np.ndarray
    source: str = "exact-from-paths"

    def apply(self, x) -> np.ndarray:
        return self.H @ x


def time_domain_matrix(grid: GridConfig, paths: PathSet) -> np.ndarray:
    """Dense ``sum_i h_i D_nu F^H B_tau``."""
    FH = idft_matrix(grid.MN)
    H = np.zeros((grid.MN, grid.MN), dtype=complex)
    for h, x, y in zip(paths.gains, paths.delay_cells(grid), paths.doppler_cells(grid)):
        H += h * (doppler_phase(grid.MN, y)[:, None] * FH * delay_phase(grid.MN, x)[None, :])
    return H


def effective_channel_from_paths(grid: GridConfig, paths: PathSet,
                                 source: str = "exact-from-paths") -> EffectiveChannel:
    """Effective channel ``demodulate o channel o modulate`` as a dense matrix."""
    if paths.P == 0:
        return EffectiveChannel(np.zeros((grid.MN, grid.MN), complex), source)
    mod, dem, _ = _transforms(grid.M, grid.N)
    return EffectiveChannel(dem @ time_domain_matrix(grid, paths) @ mod, source)


# ---------------------------------------------------------------------------
# Ambiguity kernels
# ---------------------------------------------------------------------------

def geometric_sum(theta, start, count) -> np.ndarray:
    """Closed form of ``sum_{n=start}^{start+count-1} exp(j 2 pi n theta)``.

    Broadcasts over all arguments; ``count <= 0`` gives 0. Accurate to
    machine precision near resonance because theta is reduced modulo 1 first.
    """
    theta = np.asarray(theta, dtype=float)
    start = np.asarray(start, dtype=float)
    count = np.maximum(np.asarray(count, dtype=float), 0.0)
    m = np.round(theta)
    tr = theta - m
    den = np.sin(np.pi * tr)
    safe = np.where(den == 0, 1.0, den)
    ratio = np.where(den == 0, count, np.sin(np.pi * count * tr) / safe)
    sign = np.where(np.mod(m * (count - 1), 2) == 0, 1.0, -1.0)
    phase = np.exp(1j * np.pi * (2 * start + count - 1) * theta)
    return phase * sign * ratio


def time_window_ambiguity(grid: GridConfig, kappa) -> np.ndarray:
    """Cross-ambiguity of the rectangular time window at zero delay.

    ``sum_{n=0}^{MN-1} exp(-j 2 pi n kappa / MN)``, which peaks at MN for
    ``kappa`` a multiple of MN.
    """
    return geometric_sum(-np.asarray(kappa, float) / grid.MN, 0, grid.MN)


def freq_window_ambiguity(tau, nu, bandwidth: float) -> np.ndarray:
    """Continuous cross-ambiguity of a rectangular window on [0, B].

    Closed form of ``int A(f) A*(f - nu) exp(j 2 pi f tau) df`` with A the
    indicator of [0, bandwidth].
    """
    tau = np.asarray(tau, dtype=float)
    nu = np.asarray(nu, dtype=float)
    lo = np.maximum(0.0, nu)
    hi = np.minimum(bandwidth, bandwidth + nu)
    width = np.maximum(hi - lo, 0.0)
    return width * np.exp(1j * np.pi * (hi + lo) * tau) * np.sinc(width * tau)


def sampled_freq_window_ambiguity(grid: GridConfig, delay_cells, k) -> np.ndarray:
    """Frequency-window ambiguity sampled on the subcarrier raster.

    The rectangular window is realized by the MN frequency samples spaced
    ``1/(NT)``; this is the Riemann sum of :func:`freq_window_ambiguity` at
    delay ``delay_cells / (M delta_f)`` and Doppler ``-k / (NT)``. Unlike the
    continuous integral it reproduces the discrete transceiver exactly for
    fractional delays.
    """
    k = np.asarray(k)
    MN = grid.MN
    a = np.maximum(0, -k)
    b = np.minimum(MN, MN - k)
    return (grid.delta_f / grid.N) * geometric_sum(np.asarray(delay_cells, float) / MN, a, b - a)


def kernel_peak(grid: GridConfig) -> float:
    """Raw kernel value of a unit path at the origin: ``M delta_f * MN``."""
    return grid.M * grid.delta_f * grid.MN


def h_eff_response(grid: GridConfig, paths: PathSet, l, k, window: str = "sampled") -> np.ndarray:
    """Raw (unnormalized) effective channel response at integer DD offsets.

    ``sum_i h_i exp(j 2 pi l k / MN) Y(l - l_tau_i, k) X(k - k_nu_i)`` where
    ``Y`` is the frequency-window ambiguity and ``X`` the time-window one.

    Args:
        window: ``"sampled"`` (exact for the discrete system) or
            ``"continuous"`` (exact only for integer delays).
    """
    l = np.asarray(l)
    k = np.asarray(k)
    out = np.zeros(np.broadcast(l, k).shape, dtype=complex)
    B = grid.M * grid.delta_f
    for h, x, y in zip(paths.gains, paths.delay_cells(grid), paths.doppler_cells(grid)):
        if window == "sampled":
            Y = sampled_freq_window_ambiguity(grid, l - x, k)
        elif window == "continuous":
            Y = freq_window_ambiguity((l - x) / B, -k * grid.doppler_resolution, B)
        else:
            raise ValueError(f"unknown window {window!r}")
        out += h * np.exp(2j * np.pi * l * k / grid.MN) * Y * time_window_ambiguity(grid, k - y)
    return out


@dataclass(frozen=True)
class DDResponse:
    """Normalized DD kernel samples: ``values[i, j]`` is the tap at (l0+i, k0+j).

    Normalization divides the raw response by :func:`kernel_peak`, so a unit
    path with zero delay and Doppler has a single unit tap at the origin.
    """

    values: np.ndarray
    l0: int
    k0: int

    def offsets(self):
        nl, nk = self.values.shape
        return np.arange(self.l0, self.l0 + nl), np.arange(self.k0, self.k0 + nk)


def h_eff_samples(grid: GridConfig, paths: PathSet, l_offsets, k_offsets,
                  window: str = "sampled") -> DDResponse:
    l_offsets = np.asarray(l_offsets)
    k_offsets = np.asarray(k_offsets)
    raw = h_eff_response(grid, paths, l_offsets[:, None], k_offsets[None, :], window)
    return DDResponse(raw / kernel_peak(grid), int(l_offsets[0]), int(k_offsets[0]))


def full_support_response(grid: GridConfig, paths: PathSet, window: str = "sampled") -> DDResponse:
    """Kernel over one delay period (MN taps) and its whole Doppler support.

    The sampled kernel is MN-periodic in delay and vanishes for |k| >= MN, so
    these samples determine the channel exactly.
    """
    MN = grid.MN
    return h_eff_samples(grid, paths, np.arange(-(MN // 2), MN - MN // 2),
                         np.arange(-MN + 1, MN), window)


def twisted_convolution(grid: GridConfig, resp: DDResponse, X_dd) -> np.ndarray:
    """Discrete twisted convolution of a frame with a DD kernel.

    ``Y[l, k] = sum_{l', k'} h[l', k'] X~[l - l', k - k'] exp(j 2 pi k' (l - l') / MN)``
    where ``X~`` is the quasi-periodic extension
    ``X~[l + nM, k + qN] = exp(j 2 pi n k / N) X[l, k]``.

    Args:
        resp: Kernel samples (normalized as in :class:`DDResponse`).
        X_dd: Frame as an (M, N) grid.

    Returns:
        Output frame as an (M, N) grid.
    """
    M, N, MN = grid.M, grid.N, grid.MN
    X = np.asarray(X_dd, dtype=complex)
    if X.shape != (M, N):
        raise ValueError(f"X_dd must have shape {(M, N)}")
    lo, ko = resp.offsets()
    lq = np.arange(M)[:, None, None]
    kq = np.arange(N)[None, :, None]
    dk = ko[None, None, :]
    k_in = kq - dk
    kr = np.mod(k_in, N)
    Y = np.zeros((M, N), dtype=complex)
    for i, dl in enumerate(lo):
        row = resp.values[i]
        if not np.any(row):
            continue
        l_in = lq - dl
        n, lr = np.divmod(l_in, M)
        phase = np.exp(2j * np.pi * (n * kr / N + dk * l_in / MN))
        Y += np.sum(row[None, None, :] * X[lr, kr] * phase, axis=2)
    return Y


def reconstruct_Heff_from_response(grid: GridConfig, resp: DDResponse,
                                   source: str = "reconstructed-from-samples") -> EffectiveChannel:
    """Assemble the effective channel matrix from kernel samples.

    Each tap ``(a, b)`` sends input cell ``(l, k)`` to the unique output cell
    ``((l + a) mod M, (k + b) mod N)``; the aliasing integers of that wrap set
    the phase. Summing the scattered taps gives the matrix whose action is
    :func:`twisted_convolution`.
    """
    M, N, MN = grid.M, grid.N, grid.MN
    lo, ko = resp.offsets()
    A, Bk = np.meshgrid(lo, ko, indexing="ij")
    vals = resp.values.ravel()
    keep = vals != 0
    a, b, vals = A.ravel()[keep], Bk.ravel()[keep], vals[keep]
    H = np.zeros(MN * MN, dtype=complex)
    if vals.size == 0:
        return EffectiveChannel(H.reshape(MN, MN), source)
    lin = np.arange(MN)
    l_in, k_in = lin % M, lin // M
    chunk = max(1, 2 ** 20 // MN)
    for s in range(0, vals.size, chunk):
        aa = a[s:s + chunk, None]
        bb = b[s:s + chunk, None]
        m_neg, l_out = np.divmod(l_in[None, :] + aa, M)
        k_out = np.mod(k_in[None, :] + bb, N)
        # the output sits at alias -m_neg in delay; see twisted_convolution
        phase = np.exp(2j * np.pi * (bb * (l_in[None, :] - m_neg * M) / MN
                                     - m_neg * k_in[None, :] / N))
        w = vals[s:s + chunk, None] * phase
        idx = (k_out * M + l_out) * MN + lin[None, :]
        H += np.bincount(idx.ravel(), weights=w.real.ravel(), minlength=MN * MN)
        H += 1j * np.bincount(idx.ravel(), weights=w.imag.ravel(), minlength=MN * MN)
    return EffectiveChannel(H.reshape(MN, MN), source)
