"""Sample-level OFDM link used to check the per-subcarrier channel model.

Transmit side: IDFT with kernel ``exp(+j 2 pi t n / N)`` over 1-based ``t`` and
``n``, scaled by ``1/sqrt(N)``, then a cyclic prefix.  The multipath channel
is applied as an explicit linear convolution with integer delays; the receiver
drops the prefix and applies the matching DFT.

The per-subcarrier channel carries a ``1/sqrt(N)`` factor, so the receive DFT
inside :func:`propagate_and_demodulate` is scaled by ``1/N`` (the unitary DFT
followed by a ``1/sqrt(N)`` front-end normalization).  :func:`demodulate`
alone is the plain unitary inverse of :func:`modulate`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import AntennaLayout, ChannelRealization

__all__ = [
    "TimeDomainFrame",
    "idft_matrix",
    "modulate",
    "demodulate",
    "propagate",
    "propagate_and_demodulate",
    "frequency_model",
]


def idft_matrix(N: int) -> np.ndarray:
    """``W[t-1, n-1] = exp(j 2 pi t n / N) / sqrt(N)`` for 1-based ``t, n``."""
    idx = np.arange(1, N + 1)
    return np.exp(2j * np.pi * np.outer(idx, idx) / N) / np.sqrt(N)


@dataclass(frozen=True)
class TimeDomainFrame:
    """Transmitted samples, ``(K, N + cp_len)``; prefix first."""

    samples: np.ndarray
    cp_len: int

    @property
    def num_subcarriers(self) -> int:
        return self.samples.shape[1] - self.cp_len

    def useful(self) -> np.ndarray:
        return self.samples[:, self.cp_len:]


def modulate(d: np.ndarray, cp_len: int, max_delay: int | None = None) -> TimeDomainFrame:
    """IDFT each user's ``N`` frequency symbols and prepend the cyclic prefix."""
    d = np.atleast_2d(np.asarray(d, dtype=complex))
    if cp_len < 0:
        raise ValueError("cp_len must be nonnegative")
    if max_delay is not None and cp_len < max_delay:
        raise ValueError(f"cp_len={cp_len} shorter than max delay {max_delay}")
    N = d.shape[1]
    if cp_len > N:
        raise ValueError("cp_len cannot exceed the symbol length")
    x = d @ idft_matrix(N).T  # x[k, t-1] = sum_n d[k, n-1] W[t-1, n-1]
    prefix = x[:, N - cp_len:] if cp_len else x[:, :0]
    return TimeDomainFrame(np.concatenate([prefix, x], axis=1), cp_len)


def demodulate(samples: np.ndarray) -> np.ndarray:
    """Unitary DFT of prefix-free samples along the last axis."""
    N = samples.shape[-1]
    return samples @ np.conj(idft_matrix(N))


def propagate(frame: TimeDomainFrame, chan: ChannelRealization, layout: AntennaLayout,
              wavelength: float, noise=None) -> np.ndarray:
    """Received samples ``(M, N + cp_len)`` after the multipath channel.

    Each path contributes ``h_tilde_{k,l}(r) * x_k[t - p_{k,l}]`` with the
    transmission starting at sample 0 (nothing is received before it).
    """
    if np.any(chan.delays > frame.cp_len):
        raise ValueError("a path delay exceeds the cyclic prefix")
    K, L = chan.gains.shape
    T = frame.samples.shape[1]
    pos = layout.positions
    y = np.zeros((layout.num_antennas, T), dtype=complex)
    for k in range(K):
        for l in range(L):
            th, ph = chan.elevations[k, l], chan.azimuths[k, l]
            rho = pos[:, 0] * np.sin(th) * np.cos(ph) + pos[:, 1] * np.cos(th)
            h_path = chan.gains[k, l] * np.exp(-2j * np.pi / wavelength * rho)
            p = int(chan.delays[k, l])
            shifted = np.zeros(T, dtype=complex)
            shifted[p:] = frame.samples[k, :T - p]
            y += np.outer(h_path, shifted)
    if noise is not None:
        y = y + noise
    return y


def propagate_and_demodulate(frame: TimeDomainFrame, chan: ChannelRealization,
                             layout: AntennaLayout, wavelength: float) -> np.ndarray:
    """Noiseless per-subcarrier observations ``z_n`` as an ``(N, M)`` array."""
    y = propagate(frame, chan, layout, wavelength)
    N = frame.num_subcarriers
    return demodulate(y[:, frame.cp_len:]).T / np.sqrt(N)


def frequency_model(H: np.ndarray, d: np.ndarray) -> np.ndarray:
    """``z_n = sum_k h_{k,n} d_{k,n}`` from ``(N, M, K)`` channels; returns ``(N, M)``."""
    return np.einsum("nmk,kn->nm", H, d)
