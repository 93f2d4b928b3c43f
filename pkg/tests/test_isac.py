import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zakisac.anm import AtomicRepresentation, AtomScorer, atom_vector
from zakisac.channel import PathSet, complex_normal
from zakisac.cli import iterations_to_plateau
from zakisac.frame import GridConfig, default_layout, frame_vector
from zakisac.initialization import init_state
from zakisac.isac import (IsacOptions, IsacState, MomentumBounds, adjoint_S, channel_lipschitz,
                          channel_update, default_eta, descent_monitor, fista_next, forward_S,
                          power_iteration, reconstruct_Heff_from_atoms, rho_schedule, run,
                          symbol_update)
from zakisac.modem import apply_time_channel, demodulate, effective_channel_from_paths, modulate

from conftest import crandn


def paper_frame(grid, layout, con, rng):
    xd = con.bits_to_symbols(rng.integers(0, 2, layout.n_data * con.bits_per_symbol))
    return xd, modulate(grid, frame_vector(layout, xd))


class TestForwardModel:
    def test_atom_matches_time_channel(self, grid, rng):
        s = crandn(rng, 128)
        x, y, g = 0.7, 1.3, 0.4 - 0.2j
        r = apply_time_channel(grid, s, PathSet.from_cells(grid, [g], [x], [y]))
        np.testing.assert_allclose(forward_S(s, g * atom_vector(128, x, y)), r, atol=1e-10)

    def test_zero(self, rng):
        assert not forward_S(crandn(rng, 8), np.zeros(64)).any()

    def test_size_checks(self, rng):
        with pytest.raises(ValueError):
            forward_S(crandn(rng, 8), np.zeros(10))
        with pytest.raises(ValueError):
            adjoint_S(crandn(rng, 8), np.zeros(3))

    def test_lipschitz_constant(self, rng):
        s = crandn(rng, 8)
        S = np.stack([forward_S(s, e) for e in np.eye(64)], axis=1)
        lam = np.linalg.eigvalsh(S @ S.conj().T)
        np.testing.assert_allclose(lam, channel_lipschitz(s), rtol=1e-10)
        assert channel_lipschitz(s, "paper") == pytest.approx(8 * channel_lipschitz(s))
        with pytest.raises(ValueError):
            channel_lipschitz(s, "other")

    def test_default_eta_scale(self, grid):
        # about 113 sigma at MN = 128
        assert default_eta(grid, 0.01) == pytest.approx(0.1 * np.sqrt(128 * np.pi) / 2 * np.sqrt(128))
        assert default_eta(grid, 0.01) / 0.1 == pytest.approx(113.4, abs=0.1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_adjoint_identity(seed):
    rng = np.random.default_rng(seed)
    s, h, u = crandn(rng, 16), crandn(rng, 256), crandn(rng, 16)
    lhs = np.vdot(u, forward_S(s, h))
    rhs = np.vdot(adjoint_S(s, u), h)
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_signal_change_equals_symbol_change(seed):
    grid = GridConfig()
    layout = default_layout(grid)
    rng = np.random.default_rng(seed)
    x1, x2 = crandn(rng, 65), crandn(rng, 65)
    s1, s2 = modulate(grid, frame_vector(layout, x1)), modulate(grid, frame_vector(layout, x2))
    assert np.linalg.norm(s1 - s2) == pytest.approx(np.linalg.norm(x1 - x2))


class TestScalars:
    def test_momentum_bounds(self):
        b = MomentumBounds.from_ranges(1.0, 4.0, 2.0, 2.0, theta=0.1)
        assert b.mu_bar == pytest.approx(np.sqrt(0.25 * 0.9))
        assert b.iota_bar == pytest.approx(np.sqrt(0.9))
        with pytest.raises(ValueError):
            MomentumBounds.from_ranges(1, 1, 1, 1, theta=0.0)

    def test_fista_strictly_increasing(self):
        z = [0.0]
        for _ in range(50):
            z.append(fista_next(z[-1]))
        assert np.all(np.diff(z) > 0)
        iota = [(a - 1) / b for a, b in zip(z[:-1], z[1:])]
        assert all(0 <= abs(i) < 1 for i in iota[1:])

    @pytest.mark.parametrize("rho,dx2,t,expected", [
        (8.0, 1.0, 3, 10.0),   # trigger by stall, capped
        (10.0, 0.0, 3, 10.0),  # at cap stays at cap
        (2.0, 0.0, 3, 4.0),    # stall doubles
        (2.0, 1.0, 20, 4.0),   # period doubles
        (2.0, 1.0, 3, 2.0),    # no trigger
    ])
    def test_rho_schedule(self, rho, dx2, t, expected):
        assert rho_schedule(rho, dx2 if rho != 8.0 else 0.0, t, 1e-3, 10, 2.0, 10.0) == expected

    def test_power_iteration(self, rng):
        A = crandn(rng, 20, 12)
        lam, v = power_iteration(A, tol=1e-12, max_iter=5000)
        assert lam == pytest.approx(np.linalg.eigvalsh(A.conj().T @ A)[-1], rel=1e-8)
        assert power_iteration(np.zeros((3, 3)))[0] == 0.0


def make_state(x, s, h=None, MN=128):
    h = np.zeros(MN * MN, complex) if h is None else h
    return IsacState(0, x.copy(), x.copy(), h.copy(), h.copy(), s, None, 0.0)


class TestSymbolUpdate:
    def test_fixed_point(self, grid, layout, bpsk, rng):
        xd, s = paper_frame(grid, layout, bpsk, rng)
        y = frame_vector(layout, xd)
        st_ = make_state(xd, s)
        x_new, beta, iota = symbol_update(st_, layout, y, np.eye(128), 0.0, bpsk, IsacOptions())
        np.testing.assert_allclose(x_new, xd, atol=1e-12)
        assert iota == 0.0

    def test_majorant_identity(self, rng):
        H = crandn(rng, 10, 6)
        y = crandn(rng, 10)
        rho = 0.7
        xt = crandn(rng, 6)
        phi = lambda x: 0.5 * np.linalg.norm(H @ x - y) ** 2 - rho * np.linalg.norm(x) ** 2
        psi = lambda x: (0.5 * np.linalg.norm(H @ x - y) ** 2 - rho * np.linalg.norm(xt) ** 2
                         - 2 * rho * np.vdot(xt, x - xt).real)
        for _ in range(100):
            x = crandn(rng, 6)
            assert psi(x) - phi(x) == pytest.approx(rho * np.linalg.norm(x - xt) ** 2)
            assert psi(x) >= phi(x)
        assert psi(xt) == pytest.approx(phi(xt))

    def test_descent_without_momentum(self, grid, layout, qpsk, rng):
        paths = PathSet.from_cells(grid, [0.9 + 0.3j], [0.0], [0.6])
        H = effective_channel_from_paths(grid, paths).H
        xd, s = paper_frame(grid, layout, qpsk, rng)
        y = H @ frame_vector(layout, xd) + 0.3 * crandn(rng, 128)
        Ht = H[:, layout.data_indices]
        yd = y - H[:, layout.pilot_index] * layout.pilot_amplitude
        rho = 0.2
        phi = lambda x: 0.5 * np.linalg.norm(Ht @ x - yd) ** 2 - rho * np.linalg.norm(x) ** 2
        st_ = make_state(qpsk.project_hull(0.3 * crandn(rng, 65)), s)
        for _ in range(20):
            before = phi(st_.x)
            x_new, beta, _ = symbol_update(st_, layout, y, H, rho, qpsk, IsacOptions(accelerated=False))
            assert phi(x_new) <= before + 1e-10
            np.testing.assert_allclose(qpsk.project_hull(x_new), x_new)
            st_.x_prev, st_.x = st_.x, x_new


class TestChannelUpdate:
    def test_no_history_no_extrapolation(self, grid, layout, bpsk, rng):
        xd, s = paper_frame(grid, layout, bpsk, rng)
        h = atom_vector(128, 0.5, 0.5)
        st_ = make_state(xd, s, h)
        st_.eps_t = 1e-3
        U, alpha, mu = channel_update(grid, st_, forward_S(s, h), 1.0, IsacOptions(), AtomScorer(grid))
        assert mu == 0.0
        assert alpha == pytest.approx(1.0)

    def test_recovers_channel_from_model_free_start(self, grid, layout, bpsk):
        rng = np.random.default_rng(3)
        xd, s = paper_frame(grid, layout, bpsk, rng)
        h_star = AtomicRepresentation.from_tuples(128, [0.8 - 0.6j], [0.4], [0.73]).h
        r = forward_S(s, h_star)
        init = init_state(grid, layout, demodulate(grid, r), 1e-6, bpsk)
        st_ = make_state(xd, s, init.h0)
        sc = AtomScorer(grid)
        eta = 1.0
        for t in range(100):
            st_.eps_t = 1e-2 * eta * 2.0 ** -t
            U, _, _ = channel_update(grid, st_, r, eta, IsacOptions(), sc)
            st_.h_prev, st_.h, st_.U = st_.h, U.h, U
        assert np.linalg.norm(st_.h - h_star) / np.linalg.norm(h_star) <= 1e-2
        i = int(np.argmax(np.abs(U.coefs)))
        assert abs(U.x[i] - 0.4) <= 1e-2 and abs(U.y[i] - 0.73) <= 1e-2
        # anything else is a negligible residue of the slow start
        assert np.sum(np.abs(U.coefs)) - abs(U.coefs[i]) <= 1e-2

    def test_atoms_to_effective_channel(self, grid):
        paths = PathSet.from_cells(grid, [1.0, 0.3j], [0.0, 0.8], [0.4, 1.1])
        U = AtomicRepresentation.from_tuples(128, paths.gains, [0.0, 0.8], [0.4, 1.1])
        np.testing.assert_allclose(reconstruct_Heff_from_atoms(grid, U).H,
                                   effective_channel_from_paths(grid, paths).H, atol=1e-10)
        assert not reconstruct_Heff_from_atoms(grid, AtomicRepresentation.empty(128)).H.any()


class TestRun:
    def test_noiseless_single_path(self, grid, layout, bpsk):
        rng = np.random.default_rng(3)
        xd, s = paper_frame(grid, layout, bpsk, rng)
        paths = PathSet.from_cells(grid, [0.8 - 0.6j], [0.0], [0.73])
        r = apply_time_channel(grid, s, paths)
        # a weight matched to a very small noise level keeps the problem well posed
        res = run(grid, layout, r, demodulate(grid, r), 0.0, bpsk, IsacOptions(eta=default_eta(grid, 1e-3)))
        assert res.paths.P == 1
        assert abs(res.paths.delay_cells(grid)[0]) <= 1e-2
        assert abs(res.paths.doppler_cells(grid)[0] - 0.73) <= 1e-2
        np.testing.assert_array_equal(res.x_data, xd)

    def test_pure_noise_gives_no_targets(self, grid, layout, qpsk):
        rng = np.random.default_rng(11)
        # the receiver assumes sigma2; the actual noise is weaker, so it stays below eta
        sigma2 = 0.1
        r = complex_normal(rng, 128, sigma2 / 1000)
        y = demodulate(grid, r)
        res = run(grid, layout, r, y, sigma2, qpsk, IsacOptions(T_max=20))
        assert res.atoms.L == 0 and res.paths.P == 0
        init = init_state(grid, layout, y, sigma2, qpsk)
        np.testing.assert_array_equal(res.x_data, qpsk.hard_decision(init.x0_data))

    @pytest.fixture(scope="class")
    @classmethod
    def noisy_runs(cls):
        grid = GridConfig()
        layout = default_layout(grid)
        from zakisac.frame import Constellation
        con = Constellation.make("QPSK")
        rng = np.random.default_rng(5)
        xd, s = paper_frame(grid, layout, con, rng)
        paths = PathSet.from_cells(grid, [1.0], [0.0], [0.9])
        sigma2 = 0.1
        r = apply_time_channel(grid, s, paths) + complex_normal(rng, 128, sigma2)
        y = demodulate(grid, r)
        return {acc: run(grid, layout, r, y, sigma2, con, IsacOptions(accelerated=acc, T_max=120))
                for acc in (True, False)}, con

    def test_iterate_invariants(self, noisy_runs):
        runs, con = noisy_runs
        for acc, res in runs.items():
            tr = res.trace
            alpha = np.array([row.alpha for row in tr])
            beta = np.array([row.beta for row in tr])
            a_lo, a_hi = np.minimum.accumulate(alpha), np.maximum.accumulate(alpha)
            b_lo, b_hi = np.minimum.accumulate(beta), np.maximum.accumulate(beta)
            mu_bar = np.sqrt(a_lo / a_hi * 0.9)
            iota_bar = np.sqrt(b_lo / b_hi * 0.9)
            mu = np.array([row.mu for row in tr])
            iota = np.array([row.iota for row in tr])
            assert np.all(mu >= 0) and np.all(mu <= mu_bar + 1e-12)
            assert np.all(iota >= 0) and np.all(iota <= iota_bar + 1e-12)
            if not acc:
                assert not mu.any() and not iota.any()
            rho = np.array([row.rho for row in tr])
            assert np.all(np.diff(rho) >= 0)
            eps = np.array([row.eps for row in tr])
            assert np.all(np.diff(eps) <= 0)
            np.testing.assert_allclose(con.project_hull(res.x_soft), res.x_soft)
            assert res.solver_violations == 0

    def test_ordinary_descent_monitor(self, noisy_runs):
        runs, _ = noisy_runs
        m = descent_monitor(runs[False].trace)
        assert np.all(np.diff(m) <= 1e-9 * np.abs(m[1:]))

    def test_acceleration_reaches_plateau_sooner(self, noisy_runs):
        runs, _ = noisy_runs
        acc = iterations_to_plateau([row.objective for row in runs[True].trace])
        ordi = iterations_to_plateau([row.objective for row in runs[False].trace])
        assert acc < ordi
