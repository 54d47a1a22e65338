"""Geometry to channel: field responses and per-subcarrier channel matrices."""

from __future__ import annotations

import numpy as np

from .model import AntennaLayout, ChannelRealization, FrequencyChannel, SystemConfig

__all__ = [
    "path_difference",
    "field_response_vector",
    "field_response_matrix",
    "eta_block",
    "delay_phase_vectors",
    "assemble_factors",
    "channel_matrix",
]


def path_difference(r_m, theta, phi):
    """Far-field propagation distance difference of a path at position ``r_m``.

    Broadcasts over ``theta``/``phi``; returns ``x sin(theta) cos(phi) + y cos(theta)``.
    """
    x, y = r_m[0], r_m[1]
    return x * np.sin(theta) * np.cos(phi) + y * np.cos(theta)


def field_response_vector(r_m, k: int, chan: ChannelRealization, wavelength: float) -> np.ndarray:
    """Length-L unit-modulus field response of user ``k`` (0-based) at ``r_m``."""
    rho = path_difference(r_m, chan.elevations[k], chan.azimuths[k])
    return np.exp(1j * 2 * np.pi / wavelength * rho)


def field_response_matrix(layout: AntennaLayout, k: int, chan: ChannelRealization,
                          wavelength: float) -> np.ndarray:
    """``F_k``: the ``(L, M)`` matrix whose columns are the field responses of user ``k``."""
    return np.stack(
        [field_response_vector(r, k, chan, wavelength) for r in layout.positions], axis=1
    )


def eta_block(points, chan: ChannelRealization, wavelength: float) -> np.ndarray:
    """Stacked field responses ``[f_1(r); ...; f_K(r)]`` for each row of ``points``.

    ``points`` is ``(P, 2)`` (or a single point); the result is ``(P, K*L)``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    sx, sy = chan.direction_terms()
    phase = (2 * np.pi / wavelength) * (np.outer(pts[:, 0], sx) + np.outer(pts[:, 1], sy))
    return np.exp(1j * phase)


def delay_phase_vectors(chan: ChannelRealization, num_subcarriers: int) -> np.ndarray:
    """``e_{k,n}`` for all subcarriers as an ``(N, K, L)`` array.

    Row ``i`` uses the 1-based subcarrier number ``n = i + 1``.
    """
    N = num_subcarriers
    n = np.arange(1, N + 1)[:, None, None]
    return np.exp(-2j * np.pi * n * chan.delays[None] / N) / np.sqrt(N)


def assemble_factors(layout: AntennaLayout, chan: ChannelRealization,
                     cfg: SystemConfig | None = None, *, wavelength: float | None = None,
                     num_subcarriers: int | None = None) -> FrequencyChannel:
    """Build ``F``, ``G``, ``E_n`` and every ``H_n = F G E_n`` for a layout.

    Either pass ``cfg`` or both keyword overrides.
    """
    lam = wavelength if wavelength is not None else cfg.wavelength
    N = num_subcarriers if num_subcarriers is not None else cfg.num_subcarriers
    K, L = chan.gains.shape
    M = layout.num_antennas

    F = eta_block(layout.positions, chan, lam).conj()  # (M, K*L)
    e = delay_phase_vectors(chan, N)  # (N, K, L)
    # column k of H_n = F[:, kL:(k+1)L] @ (g_k * e_{k,n})
    H = np.einsum("mkl,nkl->nmk", F.reshape(M, K, L), chan.gains[None] * e)
    return FrequencyChannel(
        H=H, F=F, gains=chan.gains.ravel(), delay_phases=e,
        layout=layout, channel=chan, wavelength=lam,
    )


def channel_matrix(fc: FrequencyChannel, n: int) -> np.ndarray:
    """``H_n`` for the 1-based subcarrier ``n``."""
    if not 1 <= n <= fc.num_subcarriers:
        raise IndexError(f"subcarrier {n} outside 1..{fc.num_subcarriers}")
    return fc.H[n - 1]
