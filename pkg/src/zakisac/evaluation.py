"""Sensing and communication metrics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channel import PathSet
from .frame import GridConfig

SPEED_OF_LIGHT = 2.998e8


def hungarian(cost) -> List[Tuple[int, int]]:
    """Minimum-cost one-to-one assignment of ``min(n, m)`` pairs.

    Returns:
        ``(row, col)`` pairs sorted by row.

    Raises:
        ValueError: If the matrix contains NaN or infinite entries.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if cost.size and not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    if cost.size == 0:
        return []
    rows, cols = linear_sum_assignment(cost)
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def brute_force_assignment(cost) -> float:
    """Minimum total cost over all injective assignments (exhaustive)."""
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    if n > m:
        return brute_force_assignment(cost.T)
    best = np.inf
    for perm in itertools.permutations(range(m), n):
        best = min(best, float(cost[np.arange(n), list(perm)].sum()))
    return best


@dataclass
class MatchResult:
    pairs: List[Tuple[int, int]] = field(default_factory=list)
    misses: List[int] = field(default_factory=list)
    false_alarms: List[int] = field(default_factory=list)


def match_targets(truth: PathSet, est: PathSet, grid: GridConfig) -> MatchResult:
    """Associate estimates to truths and apply the half-resolution gate.

    The assignment minimizes the summed normalized distance
    ``|dtau|/tau_res + |dnu|/nu_res``. An assigned pair counts as a detection
    only when both errors are within half a resolution cell; otherwise the
    truth is a miss and the estimate a false alarm.
    """
    tr, vr = grid.delay_resolution, grid.doppler_resolution
    dt = np.abs(truth.delays[:, None] - est.delays[None, :]) / tr
    dv = np.abs(truth.dopplers[:, None] - est.dopplers[None, :]) / vr
    res = MatchResult()
    assigned = hungarian(dt + dv) if truth.P and est.P else []
    used_t, used_e = set(), set()
    for i, j in assigned:
        if dt[i, j] <= 0.5 and dv[i, j] <= 0.5:
            res.pairs.append((i, j))
            used_t.add(i)
            used_e.add(j)
    res.misses = [i for i in range(truth.P) if i not in used_t]
    res.false_alarms = [j for j in range(est.P) if j not in used_e]
    return res


def range_velocity_errors(truth: PathSet, est: PathSet, pair, grid: GridConfig):
    """Range (m) and velocity (m/s) errors of a matched pair."""
    i, j = pair
    d_tau = abs(truth.delays[i] - est.delays[j])
    d_nu = abs(truth.dopplers[i] - est.dopplers[j])
    return SPEED_OF_LIGHT * d_tau, SPEED_OF_LIGHT / grid.f_c * d_nu


def channel_rmse(H_true, H_est) -> float:
    """Relative Frobenius error of an effective channel estimate."""
    H_true = np.asarray(H_true)
    return float(np.linalg.norm(np.asarray(H_est) - H_true) / np.linalg.norm(H_true))


def ber(bits_true, bits_est) -> float:
    bits_true = np.asarray(bits_true)
    bits_est = np.asarray(bits_est)
    if bits_true.shape != bits_est.shape:
        raise ValueError("bit arrays differ in shape")
    return float(np.mean(bits_true != bits_est)) if bits_true.size else 0.0


@dataclass
class TrialMetrics:
    """Per-trial outcome. Sensing fields are NaN for receivers without sensing."""

    detections: float = float("nan")
    misses: float = float("nan")
    false_alarms: float = float("nan")
    range_sq_err: float = float("nan")
    velocity_sq_err: float = float("nan")
    channel_rel_err: float = float("nan")
    bit_errors: int = 0
    bit_count: int = 0


def sensing_metrics(truth: PathSet, est: PathSet, grid: GridConfig) -> dict:
    """Detections, misses, false alarms and summed squared errors of matches."""
    m = match_targets(truth, est, grid)
    r2 = v2 = 0.0
    for pair in m.pairs:
        dr, dv = range_velocity_errors(truth, est, pair, grid)
        r2 += dr * dr
        v2 += dv * dv
    return dict(detections=len(m.pairs), misses=len(m.misses), false_alarms=len(m.false_alarms),
                range_sq_err=r2, velocity_sq_err=v2)
