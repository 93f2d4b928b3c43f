"""Sparse delay-Doppler channels, scenario draws and receiver noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frame import GridConfig


@dataclass(frozen=True)
class PathSet:
    """A sparse channel: complex gains with delays (s) and Doppler shifts (Hz)."""

    gains: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        t = np.atleast_1d(np.asarray(self.delays, dtype=float))
        v = np.atleast_1d(np.asarray(self.dopplers, dtype=float))
        if not (g.shape == t.shape == v.shape) or g.ndim != 1:
            raise ValueError("gains, delays and dopplers must be 1-D and equally long")
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "delays", t)
        object.__setattr__(self, "dopplers", v)

    @property
    def P(self) -> int:
        return int(self.gains.size)

    def __len__(self):
        return self.P

    @classmethod
    def empty(cls) -> "PathSet":
        return cls(np.zeros(0, complex), np.zeros(0), np.zeros(0))

    @classmethod
    def from_tuples(cls, paths) -> "PathSet":
        paths = list(paths)
        if not paths:
            return cls.empty()
        g, t, v = zip(*paths)
        return cls(np.array(g, complex), np.array(t, float), np.array(v, float))

    @classmethod
    def from_cells(cls, grid: GridConfig, gains, delay_cells, doppler_cells) -> "PathSet":
        """Build from delays and Dopplers in resolution-cell units."""
        return cls(gains, np.asarray(delay_cells, float) * grid.delay_resolution,
                   np.asarray(doppler_cells, float) * grid.doppler_resolution)

    def delay_cells(self, grid: GridConfig) -> np.ndarray:
        return self.delays / grid.delay_resolution

    def doppler_cells(self, grid: GridConfig) -> np.ndarray:
        return self.dopplers / grid.doppler_resolution

    def is_crystalline(self, grid: GridConfig) -> bool:
        """True when every delay lies in [0, T) and every |Doppler| below delta_f."""
        return bool(np.all((self.delays >= 0) & (self.delays < grid.T))
                    and np.all(np.abs(self.dopplers) < grid.delta_f))


@dataclass(frozen=True)
class ScenarioSpec:
    """Random target law.

    The first target sits at zero delay, later targets draw their delay
    uniformly from ``delay_cells`` resolution cells. All Dopplers draw from
    ``doppler_cells`` cells and gains are CN(0, 1).
    """

    P: int = 1
    delay_cells: tuple = (0.5, 1.5)
    doppler_cells: tuple = (0.0, 1.5)
    gain_variance: float = 1.0
    snr_db: float = 10.0


def draw_paths(grid: GridConfig, spec: ScenarioSpec, rng: np.random.Generator) -> PathSet:
    if spec.P < 0:
        raise ValueError("P must be non-negative")
    P = spec.P
    delay = np.zeros(P)
    if P > 1:
        delay[1:] = rng.uniform(*spec.delay_cells, size=P - 1)
    doppler = rng.uniform(*spec.doppler_cells, size=P)
    gains = np.sqrt(spec.gain_variance / 2) * (rng.standard_normal(P) + 1j * rng.standard_normal(P))
    return PathSet.from_cells(grid, gains, delay, doppler)


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples with total variance ``variance``."""
    scale = np.sqrt(variance / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def add_noise(r_clean, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. CN(0, sigma2) noise per sample."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    r_clean = np.asarray(r_clean, dtype=complex)
    if sigma2 == 0:
        return r_clean.copy()
    return r_clean + complex_normal(rng, r_clean.shape, sigma2)


def snr_to_sigma2(snr_db: float) -> float:
    """Per-sample noise variance for unit-energy symbols."""
    return float(10.0 ** (-snr_db / 10.0))


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial, keyed only by ``(seed, trial)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))
