"""Pilot-based model-free channel estimation, LMMSE detection and the joint
solver's starting point."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .frame import Constellation, FrameLayout, GridConfig, frame_vector
from .modem import (DDResponse, EffectiveChannel, idft_matrix, modulate,
                    modulation_matrix, reconstruct_Heff_from_response)

SIGMA2_FLOOR = 1e-12


@dataclass(frozen=True)
class PilotEstimate:
    """Kernel taps read off the pilot region, centred on the pilot."""

    response: DDResponse
    layout: FrameLayout

    def tap(self, dl: int, dk: int) -> complex:
        i, j = dl - self.response.l0, dk - self.response.k0
        nl, nk = self.response.values.shape
        if 0 <= i < nl and 0 <= j < nk:
            return complex(self.response.values[i, j])
        return 0j


def model_free_estimate(grid: GridConfig, layout: FrameLayout, y_dd) -> PilotEstimate:
    """Estimate the normalized DD kernel from the received pilot region.

    ``h[dl, dk] = y[l_p + dl, k_p + dk] / x_p * exp(-j 2 pi dk l_p / MN)``.
    """
    y = np.asarray(y_dd, dtype=complex)
    dl, dk = layout.pilot_offsets()
    lp, kp = layout.pilot
    idx = (kp + dk)[None, :] * grid.M + (lp + dl)[:, None]
    vals = y[idx] / layout.pilot_amplitude * np.exp(-2j * np.pi * dk[None, :] * lp / grid.MN)
    return PilotEstimate(DDResponse(vals, int(dl[0]), int(dk[0])), layout)


def reconstruct_Heff_from_estimate(grid: GridConfig, est: PilotEstimate) -> EffectiveChannel:
    """Effective channel implied by the estimated taps (zero outside the region)."""
    return reconstruct_Heff_from_response(grid, est.response, source="reconstructed-from-samples")


def lmmse_detect(H, y, sigma2: float) -> np.ndarray:
    """Solve ``(H^H H + sigma2 I) x = H^H y`` by Cholesky factorization.

    Raises:
        numpy.linalg.LinAlgError: If the regularized Gram matrix is not
            numerically positive definite.
    """
    H = np.asarray(H, dtype=complex)
    sigma2 = max(float(sigma2), SIGMA2_FLOOR)
    G = H.conj().T @ H
    G[np.diag_indices_from(G)] += sigma2
    cf = scipy.linalg.cho_factor(G, check_finite=False)
    return scipy.linalg.cho_solve(cf, H.conj().T @ np.asarray(y, dtype=complex), check_finite=False)


def pilot_cancelled(H: np.ndarray, layout: FrameLayout, y_dd) -> np.ndarray:
    """Received vector with the (modelled) pilot response removed."""
    return np.asarray(y_dd, complex) - H[:, layout.pilot_index] * layout.pilot_amplitude


def detect_data(H: np.ndarray, layout: FrameLayout, y_dd, sigma2: float) -> np.ndarray:
    """LMMSE soft estimates of the data cells given the known pilot."""
    return lmmse_detect(H[:, layout.data_indices], pilot_cancelled(H, layout, y_dd), sigma2)


def channel_vector_from_Heff(grid: GridConfig, H_eff) -> np.ndarray:
    """Map an effective channel matrix to the solver's channel vector.

    Inverts ``Q H Q^H F^H = F^H (.) Hm`` elementwise, where ``Q = F^H Mod``
    takes DD symbols to time samples and ``Hm`` is the MN x MN reshaping of the
    channel vector (column-major).
    """
    MN = grid.MN
    FH = idft_matrix(MN)
    Q = FH @ modulation_matrix(grid)
    inner = Q @ np.asarray(H_eff) @ Q.conj().T @ FH
    Hm = MN * np.conj(FH) * inner
    return Hm.ravel(order="F")


@dataclass
class InitState:
    h0: np.ndarray
    s0: np.ndarray
    x0_data: np.ndarray
    H_hat: EffectiveChannel
    estimate: PilotEstimate


def init_state(grid: GridConfig, layout: FrameLayout, y_dd, sigma2: float,
               constellation: Constellation) -> InitState:
    """Model-free estimate, LMMSE detection and the induced channel vector."""
    est = model_free_estimate(grid, layout, y_dd)
    H_hat = reconstruct_Heff_from_estimate(grid, est)
    try:
        x_soft = detect_data(H_hat.H, layout, y_dd, sigma2)
    except np.linalg.LinAlgError:
        x_soft = detect_data(H_hat.H, layout, y_dd, max(sigma2, 1e-6) * 10)
    x0 = constellation.project_hull(x_soft)
    s0 = modulate(grid, frame_vector(layout, x0))
    h0 = channel_vector_from_Heff(grid, H_hat.H)
    return InitState(h0, s0, x0, H_hat, est)
