import numpy as np
import pytest

from zakisac.channel import (PathSet, ScenarioSpec, add_noise, complex_normal, draw_paths,
                             snr_to_sigma2, trial_rng)


def test_pathset_units(grid):
    p = PathSet.from_cells(grid, [1.0, 0.5j], [0.0, 1.0], [0.5, 1.0])
    assert p.P == 2
    np.testing.assert_allclose(p.delays, [0.0, grid.delay_resolution])
    np.testing.assert_allclose(p.delay_cells(grid), [0.0, 1.0])
    np.testing.assert_allclose(p.doppler_cells(grid), [0.5, 1.0])
    assert p.is_crystalline(grid)
    assert PathSet.empty().P == 0


def test_single_target_law(grid):
    for seed in range(20):
        p = draw_paths(grid, ScenarioSpec(P=1), np.random.default_rng(seed))
        assert p.P == 1 and p.delays[0] == 0.0
        assert 0.0 <= p.dopplers[0] <= 1.5 * grid.doppler_resolution


def test_two_target_delay_range(grid):
    lo, hi = 0.5 / (8 * 30e3), 1.5 / (8 * 30e3)
    assert lo == pytest.approx(2.0833e-6, rel=1e-4)
    assert hi == pytest.approx(6.25e-6)
    for seed in range(50):
        p = draw_paths(grid, ScenarioSpec(P=2), np.random.default_rng(seed))
        assert p.delays[0] == 0.0
        assert lo <= p.delays[1] <= hi
        assert p.is_crystalline(grid)


def test_gain_second_moment(grid):
    rng = np.random.default_rng(0)
    g = complex_normal(rng, 100_000)
    assert np.mean(np.abs(g) ** 2) == pytest.approx(1.0, rel=0.03)


def test_draw_is_reproducible(grid):
    a = draw_paths(grid, ScenarioSpec(P=2), trial_rng(7, 3))
    b = draw_paths(grid, ScenarioSpec(P=2), trial_rng(7, 3))
    np.testing.assert_array_equal(a.gains, b.gains)
    np.testing.assert_array_equal(a.delays, b.delays)


def test_trial_streams_differ():
    assert trial_rng(0, 1).standard_normal() != trial_rng(0, 2).standard_normal()


class TestNoise:
    def test_zero_variance(self, rng):
        r = np.arange(5) + 0j
        np.testing.assert_array_equal(add_noise(r, 0.0, rng), r)

    def test_variance(self):
        n = add_noise(np.zeros(100_000), 0.3, np.random.default_rng(1))
        assert np.var(n) == pytest.approx(0.3, rel=0.03)

    def test_seeded(self):
        a = add_noise(np.zeros(4), 1.0, np.random.default_rng(5))
        b = add_noise(np.zeros(4), 1.0, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_negative_rejected(self, rng):
        with pytest.raises(ValueError):
            add_noise(np.zeros(2), -1.0, rng)


@pytest.mark.parametrize("snr,expected", [(0, 1.0), (10, 0.1), (20, 0.01)])
def test_snr_to_sigma2(snr, expected):
    assert snr_to_sigma2(snr) == pytest.approx(expected)
