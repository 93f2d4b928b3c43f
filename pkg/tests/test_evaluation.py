import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zakisac.channel import PathSet
from zakisac.evaluation import (SPEED_OF_LIGHT, TrialMetrics, ber, brute_force_assignment,
                                channel_rmse, hungarian, match_targets, range_velocity_errors,
                                sensing_metrics)


class TestHungarian:
    def test_single(self):
        assert hungarian([[3.0]]) == [(0, 0)]

    def test_diagonal_preference(self):
        C = np.ones((4, 4)) - np.eye(4)
        assert hungarian(C) == [(i, i) for i in range(4)]

    def test_rectangular(self):
        pairs = hungarian([[5.0, 1.0, 9.0]])
        assert pairs == [(0, 1)]
        assert len(hungarian(np.ones((4, 2)))) == 2

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            hungarian([[np.nan, 1.0]])
        with pytest.raises(ValueError):
            hungarian(np.ones(3))

    def test_empty(self):
        assert hungarian(np.zeros((0, 3))) == []


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 10 ** 6))
def test_hungarian_matches_exhaustive(n, m, seed):
    C = np.random.default_rng(seed).uniform(0, 10, (n, m))
    pairs = hungarian(C)
    assert len(pairs) == min(n, m)
    assert len({i for i, _ in pairs}) == len({j for _, j in pairs}) == len(pairs)
    assert sum(C[i, j] for i, j in pairs) == pytest.approx(brute_force_assignment(C))


def test_hungarian_beats_sampled_permutations(rng):
    C = rng.uniform(0, 1, (6, 6))
    best = sum(C[i, j] for i, j in hungarian(C))
    for _ in range(10_000):
        perm = rng.permutation(6)
        assert best <= C[np.arange(6), perm].sum() + 1e-12


def test_brute_force_small():
    C = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
    best = min(sum(C[i, p[i]] for i in range(3)) for p in itertools.permutations(range(3)))
    assert brute_force_assignment(C) == best == 5.0


class TestMatching:
    def test_identical(self, grid):
        p = PathSet.from_cells(grid, [1, 1], [0.0, 1.0], [0.3, 1.2])
        m = match_targets(p, p, grid)
        assert len(m.pairs) == 2 and not m.misses and not m.false_alarms

    def test_no_estimates(self, grid):
        p = PathSet.from_cells(grid, [1, 1], [0.0, 1.0], [0.3, 1.2])
        m = match_targets(p, PathSet.empty(), grid)
        assert m.misses == [0, 1] and not m.pairs

    def test_gate(self, grid):
        truth = PathSet.from_cells(grid, [1], [1.0], [0.5])
        est = PathSet.from_cells(grid, [1], [1.6], [0.5])
        m = match_targets(truth, est, grid)
        assert m.misses == [0] and m.false_alarms == [0]
        inside = PathSet.from_cells(grid, [1], [1.4], [0.9])
        assert len(match_targets(truth, inside, grid).pairs) == 1

    def test_bookkeeping(self, grid, rng):
        for _ in range(20):
            P, Q = rng.integers(0, 4, 2)
            t = PathSet.from_cells(grid, np.ones(P), rng.uniform(0, 2, P), rng.uniform(0, 2, P))
            e = PathSet.from_cells(grid, np.ones(Q), rng.uniform(0, 2, Q), rng.uniform(0, 2, Q))
            d = sensing_metrics(t, e, grid)
            assert d["detections"] + d["misses"] == P
            assert d["detections"] + d["false_alarms"] == Q
            if P:
                assert 0 <= d["detections"] / P <= 1


class TestErrors:
    def test_resolution_arithmetic(self, grid):
        t = PathSet.from_tuples([(1, 0.0, 0.0)])
        e = PathSet.from_tuples([(1, grid.delay_resolution, grid.doppler_resolution)])
        dr, dv = range_velocity_errors(t, e, (0, 0), grid)
        assert dr == pytest.approx(1249.2, abs=0.1)
        assert dv == pytest.approx(SPEED_OF_LIGHT / 24e9 * 1875)
        assert dv == pytest.approx(23.42, abs=0.01)
        assert range_velocity_errors(t, t, (0, 0), grid) == (0.0, 0.0)

    def test_channel_rmse(self, rng):
        H = rng.standard_normal((4, 4))
        assert channel_rmse(H, H) == 0
        assert channel_rmse(H, np.zeros_like(H)) == pytest.approx(1)
        assert channel_rmse(H, 2 * H) == pytest.approx(1)

    def test_ber(self):
        b = np.array([0, 1, 1, 0])
        assert ber(b, b) == 0
        assert ber(b, 1 - b) == 1
        assert ber(b, [0, 1, 0, 1]) == 0.5
        with pytest.raises(ValueError):
            ber(b, [0])

    def test_baseline_metrics_are_nan(self):
        m = TrialMetrics()
        assert np.isnan(m.detections) and np.isnan(m.range_sq_err)
