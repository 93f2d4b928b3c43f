"""Gridless atomic-norm denoising by coordinate descent over delay-Doppler atoms.

Atoms live in C^{(MN)^2}. With delay ``x`` and Doppler ``y`` in resolution
cells, ``a(x, y) = b_x kron d_y`` where ``b_x[n] = exp(-j 2 pi n x / MN)`` and
``d_y[n] = exp(j 2 pi n y / MN)``. A channel vector ``h`` is handled as the
MN x MN matrix ``Hm`` with ``h = vec(Hm)`` (column-major), so an atom is the
rank-one matrix ``d_y b_x^T`` and ``a^H h = d_y^H Hm conj(b_x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from .channel import PathSet
from .frame import GridConfig


def atom_vector(MN: int, x: float, y: float) -> np.ndarray:
    """Dense atom ``a(x, y)`` of length (MN)^2."""
    n = np.arange(MN)
    b = np.exp(-2j * np.pi * n * x / MN)
    d = np.exp(2j * np.pi * n * y / MN)
    return np.outer(d, b).ravel(order="F")


def _add_atom(Hm: np.ndarray, c: complex, x: float, y: float) -> None:
    """In-place ``Hm += c * d_y b_x^T`` (the matrix form of ``c a(x, y)``)."""
    MN = Hm.shape[0]
    n = np.arange(MN)
    d = c * np.exp(2j * np.pi * n * y / MN)
    b = np.exp(-2j * np.pi * n * x / MN)
    Hm += d[:, None] * b[None, :]


def as_matrix(h: np.ndarray) -> np.ndarray:
    """View a channel vector as its MN x MN matrix (column-major)."""
    MN = int(round(np.sqrt(h.size)))
    if MN * MN != h.size:
        raise ValueError("channel vector length must be a perfect square")
    return h.reshape(MN, MN, order="F")


def atom_inner(h_r: np.ndarray, x: float, y: float) -> complex:
    """``a(x, y)^H h_r`` via the separable double sum."""
    Hm = as_matrix(h_r)
    MN = Hm.shape[0]
    n = np.arange(MN)
    u = np.exp(-2j * np.pi * n * y / MN)
    w = np.exp(2j * np.pi * n * x / MN)
    return complex(u @ Hm @ w)


def regularizer_eta(sigma: float, s, scale: float = 1.0) -> float:
    """Atomic-norm weight ``scale * sigma * sqrt(MN pi) / 2 * ||s||^2``."""
    s = np.asarray(s)
    MN = s.size
    return float(scale * sigma * np.sqrt(MN * np.pi) / 2 * np.vdot(s, s).real)


@dataclass(frozen=True)
class SolverBudget:
    """Knobs of the coordinate-descent solver.

    Attributes:
        epsilon: Default certificate tolerance.
        K_max: Maximum number of loop passes (tuple updates plus checks).
        oversampling: Grid oversampling factor for the atom search.
        newton_steps: Newton iterations per atom refinement.
        merge_radius: Cells; a new atom this close to an existing one refits
            the existing tuple instead of creating a duplicate.
        rel_floor: Relative numerical floor on the certificate tolerance.
        delay_window: Search range of delays in cells (default ``[0, M)``).
        doppler_window: Search range of Dopplers in cells (default ``[0, N)``).
    """

    epsilon: float = 1e-6
    K_max: int = 200
    oversampling: int = 4
    newton_steps: int = 10
    merge_radius: float = 0.125
    rel_floor: float = 1e-7
    delay_window: Optional[Tuple[float, float]] = None
    doppler_window: Optional[Tuple[float, float]] = None


class AtomScorer:
    """Evaluates ``|a^H h_r|`` on an oversampled grid and refines peaks.

    The grid covers ``[x_lo, x_hi) x [y_lo, y_hi)`` with spacing ``1/gamma``
    cell. Only those samples of the zero-padded 2-D transform are needed, so
    the transform is applied as two small pruned DFT matrix products.
    """

    def __init__(self, grid: GridConfig, oversampling: int = 4, delay_window=None,
                 doppler_window=None):
        if int(oversampling) < 1:
            raise ValueError("oversampling must be a positive integer")
        self.M, self.N, self.MN = grid.M, grid.N, grid.MN
        self.gamma = int(oversampling)
        self.xw = tuple(delay_window) if delay_window is not None else (0.0, float(grid.M))
        self.yw = tuple(doppler_window) if doppler_window is not None else (0.0, float(grid.N))
        self.xs, self.ys, self.Ey, self.Ex = _pruned_dft(self.MN, self.gamma, self.xw, self.yw)
        n = np.arange(self.MN)
        self._wj = 2j * np.pi * n / self.MN
        self._wt = -2j * np.pi * n / self.MN

    # -- grid stage -------------------------------------------------------
    def scores(self, Hm: np.ndarray) -> np.ndarray:
        """Complex ``c(x_p, y_q)`` on the grid, shape (len(ys), len(xs))."""
        return self.Ey @ Hm @ self.Ex

    def naive_scores(self, Hm: np.ndarray) -> np.ndarray:
        h = Hm.ravel(order="F")
        return np.array([[np.vdot(atom_vector(self.MN, x, y), h) for x in self.xs] for y in self.ys])

    def seed(self, Hm: np.ndarray) -> Tuple[float, float]:
        C = np.abs(self.scores(Hm))
        q, p = np.unravel_index(int(np.argmax(C)), C.shape)
        return float(self.xs[p]), float(self.ys[q])

    # -- refinement stage -------------------------------------------------
    def clamp(self, x: float, y: float) -> Tuple[float, float]:
        return (min(max(x, self.xw[0]), self.xw[1]), min(max(y, self.yw[0]), self.yw[1]))

    def value(self, Hm: np.ndarray, x: float, y: float) -> complex:
        u = np.exp(y * self._wt)
        w = np.exp(x * self._wj)
        return complex(u @ (Hm @ w))

    def derivatives(self, Hm: np.ndarray, x: float, y: float):
        """``f = |c|^2`` with its gradient and Hessian in (x, y)."""
        w = np.exp(x * self._wj)
        u = np.exp(y * self._wt)
        V = Hm @ np.stack([w, self._wj * w, self._wj ** 2 * w], axis=1)
        ut = self._wt * u
        c, cx, cxx = u @ V
        cy, cxy = ut @ V[:, 0], ut @ V[:, 1]
        cyy = (self._wt * ut) @ V[:, 0]
        cc = np.conj(c)
        f = abs(c) ** 2
        g = np.array([2 * (cc * cx).real, 2 * (cc * cy).real])
        H = np.array([[2 * (abs(cx) ** 2 + (cc * cxx).real), 2 * (np.conj(cx) * cy + cc * cxy).real],
                      [0.0, 2 * (abs(cy) ** 2 + (cc * cyy).real)]])
        H[1, 0] = H[0, 1]
        return f, g, H, c

    def refine(self, Hm: np.ndarray, x: float, y: float, steps: int = 10,
               tol: float = 1e-10) -> Tuple[float, float, complex]:
        """Newton ascent on ``|c|^2`` from ``(x, y)``; never decreases ``|c|``.

        A Newton step is used when the Hessian is negative definite, otherwise
        a gradient step of at most a quarter cell. Both are backtracked by
        halving (at most 20 times) until the objective does not decrease.
        """
        x, y = self.clamp(x, y)
        for _ in range(steps):
            f, g, H, c = self.derivatives(Hm, x, y)
            gn = np.hypot(*g)
            if gn == 0 or f == 0:
                break
            if H[0, 0] < 0 and np.linalg.det(H) > 0:
                d = -np.linalg.solve(H, g)
                dn = np.hypot(*d)
                if dn > 0.5:
                    d *= 0.5 / dn
            else:
                d = g * (0.25 / gn)
            if np.hypot(*d) < tol:
                break
            t, moved = 1.0, False
            for _ in range(21):
                if t * np.hypot(*d) < tol:
                    break
                xn, yn = self.clamp(x + t * d[0], y + t * d[1])
                if abs(self.value(Hm, xn, yn)) ** 2 >= f:
                    moved = True
                    break
                t *= 0.5
            if not moved:
                break
            step = np.hypot(xn - x, yn - y)
            x, y = xn, yn
            if step < tol:
                break
        return x, y, self.value(Hm, x, y)

    def search(self, Hm: np.ndarray, steps: int = 10) -> Tuple[float, float, complex]:
        """Global peak of ``|a^H h|``: grid seed then Newton refinement."""
        x0, y0 = self.seed(Hm)
        return self.refine(Hm, x0, y0, steps)


@lru_cache(maxsize=32)
def _pruned_dft(MN: int, gamma: int, xw, yw):
    xs = xw[0] + np.arange(int(np.ceil((xw[1] - xw[0]) * gamma))) / gamma
    ys = yw[0] + np.arange(int(np.ceil((yw[1] - yw[0]) * gamma))) / gamma
    n = np.arange(MN)
    Ey = np.exp(-2j * np.pi * np.outer(ys, n) / MN)
    Ex = np.exp(2j * np.pi * np.outer(n, xs) / MN)
    for a in (xs, ys, Ey, Ex):
        a.setflags(write=False)
    return xs, ys, Ey, Ex


def grid_seed(grid: GridConfig, h_r: np.ndarray, oversampling: int = 4) -> Tuple[float, float]:
    """Grid point (cells) maximizing ``|a^H h_r|`` over the default window."""
    return AtomScorer(grid, oversampling).seed(as_matrix(h_r))


def newton_refine(grid: GridConfig, h_r: np.ndarray, x0: float, y0: float,
                  steps: int = 10) -> Tuple[float, float]:
    x, y, _ = AtomScorer(grid).refine(as_matrix(h_r), x0, y0, steps)
    return x, y


def soft_coefficient(inner: complex, eta_tilde: float, MN: int) -> complex:
    """Least-squares coefficient of an atom, soft-thresholded by ``eta_tilde``."""
    mag = abs(inner)
    if mag <= eta_tilde:
        return 0j
    return inner / MN ** 2 * (1 - eta_tilde / mag)


def conic_project(scorer: AtomScorer, h_r: np.ndarray, eta_tilde: float,
                  steps: int = 10) -> Tuple[complex, float, float]:
    """Best single atom for ``min_c,a 1/2 ||h_r - c a||^2 + eta_tilde |c|``.

    Returns ``(c, x, y)`` with the location in cells; ``c = 0`` when the
    correlation does not exceed the threshold.
    """
    x, y, inner = scorer.search(as_matrix(h_r), steps)
    return soft_coefficient(inner, eta_tilde, scorer.MN), x, y


@dataclass
class AtomicRepresentation:
    """Sparse atomic channel: ``h = sum_i coefs[i] * a(x[i], y[i])``.

    Locations are stored in resolution cells; :meth:`to_pathset` converts to
    seconds and Hz.
    """

    coefs: np.ndarray
    x: np.ndarray
    y: np.ndarray
    h: np.ndarray
    converged: bool = True
    kmax_reached: bool = False
    iterations: int = 0
    violations: int = 0
    objective: List[float] = field(default_factory=list)
    tolerance: float = 0.0

    @property
    def L(self) -> int:
        return int(self.coefs.size)

    @property
    def atomic_norm_upper(self) -> float:
        return float(np.abs(self.coefs).sum())

    @classmethod
    def empty(cls, MN: int) -> "AtomicRepresentation":
        z = np.zeros(0)
        return cls(z.astype(complex), z, z.copy(), np.zeros(MN * MN, complex))

    @classmethod
    def from_tuples(cls, MN: int, coefs, x, y) -> "AtomicRepresentation":
        coefs = np.asarray(coefs, complex)
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        h = np.zeros(MN * MN, complex)
        for c, xi, yi in zip(coefs, x, y):
            h += c * atom_vector(MN, xi, yi)
        return cls(coefs, x, y, h)

    def synthesize(self) -> np.ndarray:
        MN = int(round(np.sqrt(self.h.size)))
        return AtomicRepresentation.from_tuples(MN, self.coefs, self.x, self.y).h

    def to_pathset(self, grid: GridConfig, floor: float = 0.0) -> PathSet:
        keep = np.abs(self.coefs) >= floor
        return PathSet.from_cells(grid, self.coefs[keep], self.x[keep], self.y[keep])


class MonotonicityError(AssertionError):
    """Raised in strict mode when a tuple update increases the objective."""


def coordinate_descent(grid: GridConfig, h_hat: np.ndarray, alpha: float, eta: float,
                       epsilon: Optional[float] = None, budget: SolverBudget = SolverBudget(),
                       warm: Optional[AtomicRepresentation] = None,
                       scorer: Optional[AtomScorer] = None,
                       strict: bool = False) -> AtomicRepresentation:
    """Inexact proximal step ``argmin_h alpha/2 ||h - h_hat||^2 + eta ||h||_A``.

    Alternates leave-one-out refits of the current tuples with a certificate
    check; once the certificate holds, a new atom is added if the residual
    correlates with some atom above ``eta / alpha``, otherwise the solver
    stops. The objective ``alpha/2 ||h_hat - sum c a||^2 + eta' sum |c|`` is
    tracked after every tuple update and must never increase.

    Args:
        grid: Grid configuration.
        h_hat: Point to be denoised, length (MN)^2.
        alpha: Quadratic weight (the gradient step's Lipschitz constant).
        eta: Atomic-norm weight.
        epsilon: Certificate tolerance (``budget.epsilon`` when None).
        budget: Solver knobs.
        warm: Tuples to start from. The solver starts from the empty set when
            None.
        scorer: Reusable :class:`AtomScorer`.
        strict: Raise :class:`MonotonicityError` on an objective increase
            instead of only counting it.

    Returns:
        The tuples, the dense synthesized vector and solver diagnostics.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if eta < 0:
        raise ValueError("eta must be non-negative")
    MN = grid.MN
    eps = budget.epsilon if epsilon is None else float(epsilon)
    if scorer is None:
        scorer = AtomScorer(grid, budget.oversampling, budget.delay_window, budget.doppler_window)
    h_hat = np.asarray(h_hat, dtype=complex)
    hh = float(np.vdot(h_hat, h_hat).real)
    delta = eps / (alpha * hh / eta + eps) if eta > 0 else 0.0
    eta_p = (1 - delta) * eta
    eta_t = eta_p / alpha
    eps_eff = max(eps, budget.rel_floor * (alpha * hh + 1e-300))

    coefs: List[complex] = []
    xs: List[float] = []
    ys: List[float] = []
    h_r = h_hat.copy()
    if warm is not None:
        for c, x, y in zip(warm.coefs, warm.x, warm.y):
            coefs.append(complex(c))
            xs.append(float(x))
            ys.append(float(y))
            _add_atom(h_r.reshape(MN, MN, order="F"), -c, x, y)
    Hr = h_r.reshape(MN, MN, order="F")  # shares memory with h_r
    assert np.shares_memory(Hr, h_r)

    def objective():
        return 0.5 * alpha * float(np.vdot(h_r, h_r).real) + eta_p * float(np.sum(np.abs(coefs)))

    obj = objective()
    trace = [obj]
    violations = 0

    def record():
        nonlocal obj, violations
        new = objective()
        if new > obj + 1e-10 * max(abs(obj), 1.0):
            violations += 1
            if strict:
                raise MonotonicityError(f"objective rose from {obj!r} to {new!r}")
        obj = new
        trace.append(new)

    def refit(i: int) -> float:
        """Leave-one-out refit of tuple i; returns the objective decrease."""
        before = obj
        _add_atom(Hr, coefs[i], xs[i], ys[i])
        x, y, inner = scorer.refine(Hr, xs[i], ys[i], budget.newton_steps)
        c = soft_coefficient(inner, eta_t, MN)
        coefs[i], xs[i], ys[i] = c, x, y
        if c != 0:
            _add_atom(Hr, -c, x, y)
        record()
        return before - obj

    def close(i: int, j: int) -> bool:
        return (abs(xs[i] - xs[j]) <= budget.merge_radius
                and abs(ys[i] - ys[j]) <= budget.merge_radius)

    def try_merge(i: int, j: int) -> bool:
        """Replace tuples i and j by one atom if that does not raise the objective."""
        h_try = h_r.copy()
        Ht = h_try.reshape(MN, MN, order="F")
        _add_atom(Ht, coefs[i], xs[i], ys[i])
        _add_atom(Ht, coefs[j], xs[j], ys[j])
        keep = i if abs(coefs[i]) >= abs(coefs[j]) else j
        x, y, inner = scorer.refine(Ht, xs[keep], ys[keep], budget.newton_steps)
        c = soft_coefficient(inner, eta_t, MN)
        if c != 0:
            _add_atom(Ht, -c, x, y)
        others = sum(abs(coefs[m]) for m in range(len(coefs)) if m not in (i, j))
        new = 0.5 * alpha * float(np.vdot(h_try, h_try).real) + eta_p * (others + abs(c))
        if new > obj:
            return False
        h_r[:] = h_try
        lo, hi = min(i, j), max(i, j)
        coefs[lo], xs[lo], ys[lo] = c, x, y
        del coefs[hi], xs[hi], ys[hi]
        record()
        if c == 0:
            del coefs[lo], xs[lo], ys[lo]
        return True

    converged = False
    k = 0
    i = 0
    while k < budget.K_max:
        if i < len(coefs):
            refit(i)
            if coefs[i] == 0:
                del coefs[i], xs[i], ys[i]
            else:
                dup = [j for j in range(len(coefs)) if j != i and close(i, j)]
                if dup and try_merge(i, dup[0]):
                    i = min(i, dup[0])
                else:
                    i += 1
        else:
            fit = alpha * float(np.vdot(h_r, h_hat - h_r).real)
            cert = abs(eta * float(np.sum(np.abs(coefs))) - fit)
            if cert < eps_eff:
                x, y, inner = scorer.search(Hr, budget.newton_steps)
                if alpha * abs(inner) > eta:
                    near = [j for j in range(len(coefs))
                            if abs(xs[j] - x) <= budget.merge_radius and abs(ys[j] - y) <= budget.merge_radius]
                    if near:
                        if refit(near[0]) <= 1e-12 * max(abs(obj), 1.0):
                            converged = True
                            k += 1
                            break
                        if coefs[near[0]] == 0:
                            del coefs[near[0]], xs[near[0]], ys[near[0]]
                    else:
                        c = soft_coefficient(inner, eta_t, MN)
                        if c != 0:
                            coefs.append(c)
                            xs.append(x)
                            ys.append(y)
                            _add_atom(Hr, -c, x, y)
                            record()
                    i = 0
                else:
                    converged = True
                    k += 1
                    break
            else:
                i = 0
        k += 1

    rep = AtomicRepresentation(np.array(coefs, complex), np.array(xs, float), np.array(ys, float),
                               h_hat - h_r, converged=converged, kmax_reached=not converged,
                               iterations=k, violations=violations, objective=trace,
                               tolerance=eps_eff)
    return rep
