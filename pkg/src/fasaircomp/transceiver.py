"""Closed-form precoder/combiner updates and the MSE objectives.

Precoders are ``(K, N)`` and combiners ``(M, N)``; all routines act on every
subcarrier at once through batched numpy linear algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import FrequencyChannel

__all__ = [
    "SubcarrierWorkspace",
    "effective_gains",
    "update_precoders",
    "update_combiners",
    "mse_per_subcarrier",
    "mse_all_subcarriers",
    "overall_mse",
    "position_objective",
    "workspace",
]


@dataclass(frozen=True)
class SubcarrierWorkspace:
    """Intermediate quantities of the combiner subproblem on every subcarrier.

    ``B`` holds the diagonals ``|b_{k,n}|^2`` as an ``(N, K)`` array, ``b_bar``
    the precoder columns ``(N, K)``, ``V`` the ``(N, M, M)`` matrices
    ``H_n B_n H_n^H + sigma^2 I`` and ``xi`` the optimal per-subcarrier MSE.
    """

    B: np.ndarray
    b_bar: np.ndarray
    V: np.ndarray
    xi: np.ndarray


def effective_gains(fc: FrequencyChannel, w: np.ndarray) -> np.ndarray:
    """``w_n^H h_{k,n}`` as an ``(K, N)`` array."""
    return np.einsum("mn,nmk->kn", np.conj(w), fc.H)


def update_precoders(fc: FrequencyChannel, w: np.ndarray, power: float) -> np.ndarray:
    """Optimal precoders for fixed combiners under ``|b_{k,n}|^2 <= P``.

    Channel inversion clipped at full power.  When ``w_n^H h_{k,n}`` is exactly
    zero every phase is optimal and full power with zero phase is returned.
    """
    a = effective_gains(fc, w)
    mag = np.abs(a)
    sqrt_p = np.sqrt(power)
    with np.errstate(divide="ignore", invalid="ignore"):
        amp = np.where(mag > 0, np.minimum(sqrt_p, 1.0 / mag), sqrt_p)
        phase = np.where(mag > 0, np.conj(a) / mag, 1.0)
    return amp * phase


def _v_matrices(H: np.ndarray, b: np.ndarray, noise_power: float) -> np.ndarray:
    # H: (N, M, K), b: (K, N)
    HB = H * (np.abs(b.T) ** 2)[:, None, :]
    V = HB @ np.conj(np.swapaxes(H, 1, 2))
    M = H.shape[1]
    return V + noise_power * np.eye(M)


def update_combiners(fc: FrequencyChannel, b: np.ndarray, noise_power: float) -> np.ndarray:
    """MMSE combiners ``w_n = V_n^{-1} H_n b_bar_n`` for fixed precoders."""
    if not noise_power > 0:
        raise ValueError("noise_power must be > 0")
    V = _v_matrices(fc.H, b, noise_power)
    rhs = np.einsum("nmk,kn->nm", fc.H, b)
    w = np.linalg.solve(V, rhs[..., None])[..., 0]
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("non-finite combiner; V_n should be positive definite")
    return w.T


def mse_all_subcarriers(fc: FrequencyChannel, b: np.ndarray, w: np.ndarray,
                        noise_power: float) -> np.ndarray:
    """Length-N vector of per-subcarrier MSEs."""
    resid = effective_gains(fc, w) * b - 1.0
    return np.sum(np.abs(resid) ** 2, axis=0) + noise_power * np.sum(np.abs(w) ** 2, axis=0)


def mse_per_subcarrier(fc: FrequencyChannel, b: np.ndarray, w: np.ndarray,
                       noise_power: float, n: int) -> float:
    """MSE on the 1-based subcarrier ``n``."""
    if not 1 <= n <= fc.num_subcarriers:
        raise IndexError(f"subcarrier {n} outside 1..{fc.num_subcarriers}")
    i = n - 1
    h = fc.H[i]
    resid = (np.conj(w[:, i]) @ h) * b[:, i] - 1.0
    return float(np.sum(np.abs(resid) ** 2) + noise_power * np.sum(np.abs(w[:, i]) ** 2))


def overall_mse(fc: FrequencyChannel, b: np.ndarray, w: np.ndarray, noise_power: float) -> float:
    return float(np.mean(mse_all_subcarriers(fc, b, w, noise_power)))


def _quadratic_terms(H: np.ndarray, b: np.ndarray, noise_power: float):
    V = _v_matrices(H, b, noise_power)
    a = np.einsum("nmk,kn->nm", H, b)  # H_n b_bar_n
    u = np.linalg.solve(V, a[..., None])[..., 0]  # V_n^{-1} H_n b_bar_n
    q = np.real(np.sum(np.conj(a) * u, axis=1))
    return V, a, u, q


def position_objective(fc: FrequencyChannel, b: np.ndarray, noise_power: float) -> float:
    """``sum_n b_bar_n^H H_n^H V_n^{-1} H_n b_bar_n``, maximized over positions.

    Equals ``N*K - N*overall_mse`` when the combiners are MMSE-optimal.
    """
    if not noise_power > 0:
        raise ValueError("noise_power must be > 0")
    return float(np.sum(_quadratic_terms(fc.H, b, noise_power)[3]))


def workspace(fc: FrequencyChannel, b: np.ndarray, noise_power: float) -> SubcarrierWorkspace:
    V, _, _, q = _quadratic_terms(fc.H, b, noise_power)
    K = fc.num_users
    return SubcarrierWorkspace(B=np.abs(b.T) ** 2, b_bar=b.T.copy(), V=V, xi=K - q)
