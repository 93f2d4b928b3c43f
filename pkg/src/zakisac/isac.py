"""Joint channel-parameter estimation and symbol detection.

The receiver alternates an inexact (accelerated) proximal-gradient step on the
channel vector, solved by atomic-norm coordinate descent, with one
(accelerated) projected-gradient step on a majorant of the penalized symbol
objective. A homotopy on the penalty weight drives the relaxed symbols to
constellation points.

The forward model is ``r = S(s) h`` with ``S(s) h = (F^H (.) Hm) s``, where
``F^H`` is the unitary inverse DFT and ``Hm`` the MN x MN reshaping of ``h``.
A path with gain ``g`` at delay/Doppler cells ``(x, y)`` is ``h = g a(x, y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .anm import (AtomicRepresentation, AtomScorer, SolverBudget, as_matrix,
                  coordinate_descent, regularizer_eta)
from .channel import PathSet
from .frame import Constellation, FrameLayout, GridConfig, frame_vector
from .initialization import init_state, pilot_cancelled
from .modem import EffectiveChannel, effective_channel_from_paths, idft_matrix, modulate


def forward_S(s, h) -> np.ndarray:
    """Apply ``S(s)`` to a channel vector without forming the MN x (MN)^2 matrix."""
    s = np.asarray(s, dtype=complex)
    MN = s.size
    h = np.asarray(h, dtype=complex)
    if h.size != MN * MN:
        raise ValueError(f"h must have length {MN * MN}")
    return (idft_matrix(MN) * h.reshape(MN, MN, order="F")) @ s


def adjoint_S(s, u) -> np.ndarray:
    """Exact adjoint of :func:`forward_S` in its channel argument."""
    s = np.asarray(s, dtype=complex)
    u = np.asarray(u, dtype=complex)
    if u.size != s.size:
        raise ValueError("u and s must have the same length")
    return (np.conj(idft_matrix(s.size)) * np.outer(u, np.conj(s))).ravel(order="F")


def channel_lipschitz(s, rule: str = "lipschitz") -> float:
    """Lipschitz constant of the channel data-fit gradient.

    ``S S^H = ||s||^2 / MN * I`` for the unitary transform, so
    ``"lipschitz"`` returns ``||s||^2 / MN``. ``"paper"`` returns ``||s||^2``,
    a valid but MN-times larger bound.
    """
    s = np.asarray(s)
    e = float(np.vdot(s, s).real)
    if rule == "lipschitz":
        return e / s.size
    if rule == "paper":
        return e
    raise ValueError(f"unknown alpha rule {rule!r}")


def default_eta(grid: GridConfig, sigma2: float, scale: float = 1.0) -> float:
    """Atomic-norm weight for the unitary forward model.

    The closed-form weight ``sigma sqrt(MN pi)/2 ||s||^2`` is stated for a
    forward operator whose Gram matrix is ``||s||^2 I``. Our operator's Gram
    is ``||s||^2/MN I`` (unitary DFT), which rescales the weight by
    ``1/sqrt(MN)``. The nominal transmit energy ``||s||^2 = MN`` is used.
    """
    s_nominal = np.ones(grid.MN)
    return regularizer_eta(np.sqrt(sigma2), s_nominal, scale) / np.sqrt(grid.MN)


@dataclass(frozen=True)
class MomentumBounds:
    """Upper clamps on the extrapolation weights.

    ``mu_bar = sqrt(a_min/a_max (1 - theta))`` from the channel step sizes and
    ``iota_bar = sqrt(b_min/b_max (1 - theta))`` from the symbol step sizes.
    """

    mu_bar: float
    iota_bar: float
    theta: float

    @classmethod
    def from_ranges(cls, a_min, a_max, b_min, b_max, theta: float = 0.1) -> "MomentumBounds":
        if not 0 < theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        mu = np.sqrt(a_min / a_max * (1 - theta)) if a_max > 0 else 0.0
        io = np.sqrt(b_min / b_max * (1 - theta)) if b_max > 0 else 0.0
        return cls(float(mu), float(io), theta)


def fista_next(prev: float) -> float:
    return (1 + np.sqrt(1 + 4 * prev * prev)) / 2


@dataclass(frozen=True)
class IsacOptions:
    """Options of the joint receiver.

    Attributes:
        accelerated: Use clamped FISTA extrapolation on both blocks; False is
            the ordinary (momentum-free) variant.
        T_max: Maximum outer iterations.
        eta: Atomic-norm weight; derived from the noise level when None.
        eta_scale: Multiplier on the derived weight.
        alpha_rule: ``"lipschitz"`` or ``"paper"``, see :func:`channel_lipschitz`.
        theta: Momentum-bound margin.
        eps0_factor: First certificate tolerance as a fraction of eta; the
            tolerance halves every iteration.
        rho0_factor, rho_growth, rho_every, rho_upb_factor: Penalty homotopy
            (initial weight and cap relative to the first symbol step size,
            growth factor, forced growth period).
        delta: Stopping threshold on the channel change (1e-6 MN when None).
        amplitude_floor: Detected targets need ``|c| >= kappa eta/(alpha (MN)^2)``.
        warm_start: Start each proximal solve from the previous tuples.
        budget: Atomic solver knobs.
        power_tol: Relative tolerance of the power iteration for beta.
        strict: Raise on any solver monotonicity violation.
    """

    accelerated: bool = True
    T_max: int = 300
    eta: Optional[float] = None
    eta_scale: float = 1.0
    alpha_rule: str = "lipschitz"
    theta: float = 0.1
    eps0_factor: float = 1e-2
    rho0_factor: float = 0.01
    rho_growth: float = 2.0
    rho_every: int = 10
    rho_upb_factor: float = 10.0
    delta: Optional[float] = None
    amplitude_floor: float = 1.0
    warm_start: bool = True
    budget: SolverBudget = SolverBudget()
    power_tol: float = 1e-6
    strict: bool = False


@dataclass
class TraceRow:
    t: int
    objective: float
    penalty_objective: float
    dh: float
    rho: float
    tuples: int
    eps: float
    tol: float
    alpha: float
    beta: float
    mu: float
    iota: float


@dataclass
class IsacState:
    """Iterate bundle carried between outer iterations."""

    t: int
    x: np.ndarray
    x_prev: np.ndarray
    h: np.ndarray
    h_prev: np.ndarray
    s: np.ndarray
    U: Optional[AtomicRepresentation]
    rho: float
    xi: float = 0.0
    zeta: float = 0.0
    eps_t: float = 0.0
    a_min: float = np.inf
    a_max: float = 0.0
    b_min: float = np.inf
    b_max: float = 0.0
    beta_vec: Optional[np.ndarray] = None
    trace: List[TraceRow] = field(default_factory=list)


@dataclass
class IsacResult:
    paths: PathSet
    x_data: np.ndarray
    x_soft: np.ndarray
    atoms: AtomicRepresentation
    H_eff: EffectiveChannel
    trace: List[TraceRow]
    iterations: int
    converged: bool
    eta: float
    solver_violations: int
    solver_kmax_hits: int


def rho_schedule(rho: float, dx2: float, t: int, delta: float, n: int, c: float,
                 rho_upb: float) -> float:
    """Grow the penalty when symbols stall or every ``n`` iterations, capped."""
    if dx2 <= delta or t % n == 0:
        return min(c * rho, rho_upb)
    return rho


def power_iteration(A: np.ndarray, v0=None, tol: float = 1e-6, max_iter: int = 200):
    """Largest eigenvalue of ``A^H A`` and its eigenvector (warm-startable)."""
    n = A.shape[1]
    v = np.ones(n, complex) if v0 is None else np.asarray(v0, complex).copy()
    nv = np.linalg.norm(v)
    if nv == 0:
        v = np.ones(n, complex)
        nv = np.linalg.norm(v)
    v /= nv
    lam = 0.0
    for _ in range(max_iter):
        w = A.conj().T @ (A @ v)
        lam_new = float(np.vdot(v, w).real)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0, v
        v = w / nw
        if abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return lam, v


def channel_update(grid: GridConfig, state: IsacState, r: np.ndarray, eta: float,
                   opts: IsacOptions, scorer: AtomScorer):
    """One inexact proximal-gradient step on the channel vector.

    Returns the new tuples, the step size used and the extrapolation weight.
    """
    alpha = channel_lipschitz(state.s, opts.alpha_rule)
    state.a_min = min(state.a_min, alpha)
    state.a_max = max(state.a_max, alpha)
    mu = 0.0
    xi = fista_next(state.xi)
    if opts.accelerated:
        bounds = MomentumBounds.from_ranges(state.a_min, state.a_max, 1.0, 1.0, opts.theta)
        mu = float(np.clip((state.xi - 1) / xi, 0.0, bounds.mu_bar))
    state.xi = xi
    h_tilde = state.h + mu * (state.h - state.h_prev) if mu else state.h
    grad = adjoint_S(state.s, forward_S(state.s, h_tilde) - r)
    h_hat = h_tilde - grad / alpha
    warm = state.U if opts.warm_start else None
    U = coordinate_descent(grid, h_hat, alpha, eta, state.eps_t, opts.budget, warm=warm,
                           scorer=scorer, strict=opts.strict)
    return U, alpha, mu


def reconstruct_Heff_from_atoms(grid: GridConfig, U: AtomicRepresentation) -> EffectiveChannel:
    return effective_channel_from_paths(grid, U.to_pathset(grid), source="reconstructed-from-atoms")


def symbol_update(state: IsacState, layout: FrameLayout, y_dd: np.ndarray, H_eff: np.ndarray,
                  rho: float, constellation: Constellation, opts: IsacOptions):
    """One projected-gradient step on the linearized penalized symbol objective.

    Returns the new symbols, the step size ``beta`` and the extrapolation weight.
    """
    Ht = H_eff[:, layout.data_indices]
    yd = pilot_cancelled(H_eff, layout, y_dd)
    beta, state.beta_vec = power_iteration(Ht, state.beta_vec, opts.power_tol)
    zeta = fista_next(state.zeta)
    if beta <= 0:
        state.zeta = zeta
        return state.x.copy(), 0.0, 0.0
    # guard against the power iteration approaching the eigenvalue from below
    beta *= 1 + 10 * opts.power_tol
    state.b_min = min(state.b_min, beta)
    state.b_max = max(state.b_max, beta)
    iota = 0.0
    if opts.accelerated:
        bounds = MomentumBounds.from_ranges(1.0, 1.0, state.b_min, state.b_max, opts.theta)
        iota = float(np.clip((state.zeta - 1) / zeta, 0.0, bounds.iota_bar))
    state.zeta = zeta
    x_t = state.x + iota * (state.x - state.x_prev)
    grad = Ht.conj().T @ (Ht @ x_t - yd) - 2 * rho * state.x
    return constellation.project_hull(x_t - grad / beta), beta, iota


def penalty_objective(r, s, h, eta: float, coefs, x, rho: float):
    """Data fit plus atomic term, and the same minus ``rho ||x||^2``."""
    res = r - forward_S(s, h)
    base = 0.5 * float(np.vdot(res, res).real) + eta * float(np.sum(np.abs(coefs)))
    return base, base - rho * float(np.vdot(x, x).real)


def run(grid: GridConfig, layout: FrameLayout, r: np.ndarray, y_dd: np.ndarray, sigma2: float,
        constellation: Constellation, opts: IsacOptions = IsacOptions()) -> IsacResult:
    """Semi-blind joint sensing and detection from one received frame.

    Args:
        grid: Grid configuration.
        layout: Frame layout (pilot known to the receiver).
        r: Time-domain received samples.
        y_dd: Demodulated DD-domain samples of ``r``.
        sigma2: Noise variance per sample.
        constellation: Data constellation.
        opts: Receiver options.

    Returns:
        Estimated paths, hard-decided data symbols and the iteration trace.
    """
    MN = grid.MN
    eta = opts.eta if opts.eta is not None else default_eta(grid, sigma2, opts.eta_scale)
    delta = opts.delta if opts.delta is not None else 1e-6 * MN
    init = init_state(grid, layout, y_dd, sigma2, constellation)
    scorer = AtomScorer(grid, opts.budget.oversampling, opts.budget.delay_window,
                        opts.budget.doppler_window)

    beta0, v0 = power_iteration(init.H_hat.H[:, layout.data_indices], tol=opts.power_tol)
    beta0 = max(beta0, 1e-12)
    rho = opts.rho0_factor * beta0
    rho_upb = opts.rho_upb_factor * beta0
    eps0 = opts.eps0_factor * eta if eta > 0 else opts.budget.epsilon

    st = IsacState(0, init.x0_data.copy(), init.x0_data.copy(), init.h0.copy(), init.h0.copy(),
                   init.s0.copy(), None, rho, beta_vec=v0)
    U = AtomicRepresentation.empty(MN)
    H_eff = EffectiveChannel(np.zeros((MN, MN), complex), "reconstructed-from-atoms")
    converged = False
    violations = kmax_hits = 0
    t = 0
    while t < opts.T_max:
        st.t = t
        st.eps_t = eps0 * 2.0 ** (-t)
        U, alpha, mu = channel_update(grid, st, r, eta, opts, scorer)
        violations += U.violations
        kmax_hits += int(U.kmax_reached)
        H_eff = reconstruct_Heff_from_atoms(grid, U)
        x_new, beta, iota = symbol_update(st, layout, y_dd, H_eff.H, st.rho, constellation, opts)
        dx2 = float(np.vdot(x_new - st.x, x_new - st.x).real)
        dh = float(np.linalg.norm(U.h - st.h))
        rho_used = st.rho
        st.rho = rho_schedule(st.rho, dx2, t, delta, opts.rho_every, opts.rho_growth, rho_upb)
        st.x_prev, st.x = st.x, x_new
        st.h_prev, st.h = st.h, U.h
        st.U = U
        st.s = modulate(grid, frame_vector(layout, st.x))
        obj, pen = penalty_objective(r, st.s, st.h, eta, U.coefs, st.x, rho_used)
        st.trace.append(TraceRow(t, obj, pen, dh, rho_used, U.L, st.eps_t, max(st.eps_t, U.tolerance), alpha,
                                 beta, mu, iota))
        t += 1
        if dh <= delta:
            converged = True
            break

    floor = opts.amplitude_floor * eta / (channel_lipschitz(st.s, opts.alpha_rule) * MN ** 2)
    return IsacResult(U.to_pathset(grid, floor), constellation.hard_decision(st.x), st.x.copy(), U,
                      H_eff, st.trace, t, converged, eta, violations, kmax_hits)


def descent_monitor(trace: List[TraceRow], theta: float = 0.1) -> np.ndarray:
    """Penalized objective minus the accumulated inexactness allowance.

    Each inexact proximal step may raise the objective by at most
    ``(1 + alpha / (alpha_min theta)) eps``; subtracting the running sum of
    these allowances gives a sequence that must not increase in the
    momentum-free variant.
    """
    pen = np.array([row.penalty_objective for row in trace])
    alpha = np.array([row.alpha for row in trace])
    eps = np.array([row.tol for row in trace])
    a_min = np.minimum.accumulate(alpha)
    slack = np.cumsum((1 + alpha / (a_min * theta)) * eps)
    return pen - np.concatenate([[0.0], slack[:-1]])
