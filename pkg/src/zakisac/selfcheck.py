"""Quick oracle checks of the transceiver and solvers at M=4, N=8.

Each check compares a fast implementation against an independent, slower
computation (dense matrices, quadrature, direct sums, exhaustive search).
"""

from __future__ import annotations

from typing import Callable, List, Tuple

import numpy as np
from scipy.integrate import quad

from .anm import AtomicRepresentation, SolverBudget, coordinate_descent
from .channel import PathSet
from .evaluation import brute_force_assignment, hungarian
from .frame import GridConfig, grid_to_vec
from .modem import (apply_time_channel, demodulate, effective_channel_from_paths,
                    freq_window_ambiguity, full_support_response, geometric_sum, modulate,
                    reconstruct_Heff_from_response, twisted_convolution)

GRID = GridConfig(M=4, N=8)


def _random_paths(rng, grid: GridConfig, P: int) -> PathSet:
    gains = (rng.standard_normal(P) + 1j * rng.standard_normal(P)) / np.sqrt(2)
    return PathSet.from_cells(grid, gains, rng.uniform(0, 1.5, P), rng.uniform(-1.5, 1.5, P))


def check_roundtrip(rng) -> float:
    X = rng.standard_normal((GRID.MN, 20)) + 1j * rng.standard_normal((GRID.MN, 20))
    identity = PathSet.from_tuples([(1.0, 0.0, 0.0)])
    r = apply_time_channel(GRID, modulate(GRID, X), identity)
    return float(np.max(np.abs(demodulate(GRID, r) - X)))


def check_twisted_convolution(rng) -> float:
    paths = _random_paths(rng, GRID, 2)
    X = rng.standard_normal((GRID.M, GRID.N)) + 1j * rng.standard_normal((GRID.M, GRID.N))
    x = grid_to_vec(X)
    y_mat = demodulate(GRID, apply_time_channel(GRID, modulate(GRID, x), paths))
    Y = twisted_convolution(GRID, full_support_response(GRID, paths), X)
    return float(np.linalg.norm(grid_to_vec(Y) - y_mat) / np.linalg.norm(y_mat))


def check_reconstruction(rng) -> float:
    paths = _random_paths(rng, GRID, 2)
    H = effective_channel_from_paths(GRID, paths).H
    Hr = reconstruct_Heff_from_response(GRID, full_support_response(GRID, paths)).H
    return float(np.linalg.norm(Hr - H) / np.linalg.norm(H))


def check_ambiguity_quadrature(rng) -> float:
    B = 1.0
    worst = 0.0
    for _ in range(5):
        tau, nu = rng.uniform(-3, 3), rng.uniform(-0.9, 0.9)
        lo, hi = max(0.0, nu), min(B, B + nu)
        re = quad(lambda f: np.cos(2 * np.pi * f * tau), lo, hi, epsabs=1e-13)[0]
        im = quad(lambda f: np.sin(2 * np.pi * f * tau), lo, hi, epsabs=1e-13)[0]
        worst = max(worst, abs(freq_window_ambiguity(tau, nu, B) - (re + 1j * im)))
    return float(worst)


def check_geometric_sum(rng) -> float:
    worst = 0.0
    for _ in range(20):
        theta, a, n = rng.uniform(-2, 2), int(rng.integers(0, 10)), int(rng.integers(0, 40))
        direct = np.exp(2j * np.pi * theta * np.arange(a, a + n)).sum()
        worst = max(worst, abs(geometric_sum(theta, a, n) - direct))
    return float(worst)


def check_single_atom(rng) -> float:
    x, y, c = rng.uniform(0.2, 2.8), rng.uniform(0.2, 6.8), 1.0 + 0.5j
    h = AtomicRepresentation.from_tuples(GRID.MN, [c], [x], [y]).h
    U = coordinate_descent(GRID, h, 1.0, 1e-6, 1e-12, SolverBudget(), strict=True)
    i = int(np.argmax(np.abs(U.coefs)))
    return float(max(abs(U.x[i] - x), abs(U.y[i] - y), abs(U.coefs[i] - c) / abs(c)))


def check_hungarian(rng) -> float:
    worst = 0.0
    for _ in range(20):
        C = rng.uniform(0, 10, (int(rng.integers(1, 5)), int(rng.integers(1, 5))))
        total = sum(C[i, j] for i, j in hungarian(C))
        worst = max(worst, abs(total - brute_force_assignment(C)))
    return float(worst)


CHECKS: List[Tuple[str, Callable, float]] = [
    ("modulate/demodulate round trip", check_roundtrip, 1e-10),
    ("twisted convolution vs matrix channel", check_twisted_convolution, 1e-6),
    ("kernel-sample reconstruction vs matrix channel", check_reconstruction, 1e-8),
    ("window ambiguity vs quadrature", check_ambiguity_quadrature, 1e-6),
    ("geometric sum vs direct sum", check_geometric_sum, 1e-10),
    ("single off-grid atom recovery", check_single_atom, 1e-3),
    ("assignment vs exhaustive search", check_hungarian, 1e-9),
]


def run_all(seed: int = 0):
    """Returns ``(name, passed, detail)`` for each check."""
    out = []
    for name, fn, tol in CHECKS:
        err = fn(np.random.default_rng(seed))
        out.append((name, err <= tol, f"error={err:.3g} tol={tol:g}"))
    return out
