"""Antenna position update: minorize-maximize surrogate plus sequential grid search.

For fixed precoders the position objective ``J(r) = sum_n b^H H^H V^{-1} H b``
is bounded from below by a function that is linear in the stacked field
responses ``eta = vec(F^H)``::

    J(r) >= sum_m -2 Re{eta(r_m)^H phi_m} + const

with equality at the expansion layout.  Two bounds are composed: the
first-order expansion of the jointly convex matrix-fractional term
``x^H V^{-1} x`` and a quadratic majorizer of ``eta^H Psi_n eta`` that
replaces ``Psi_n = S_n^T kron Lambda_n`` by ``beta_n I``.  ``Psi_n`` is never
formed; ``Psi_n eta = vec(Lambda_n F^H S_n)`` and ``beta_n`` is the product of
the two factor eigenvalues.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .channel import assemble_factors, eta_block
from .model import AntennaLayout, ChannelRealization, FrequencyChannel, SystemConfig, lattice_axis
from .transceiver import _quadratic_terms

__all__ = [
    "SurrogateCoefficients",
    "PositionGrid",
    "InfeasiblePlacementError",
    "REFINE_FACTOR",
    "MMStepResult",
    "build_surrogate",
    "surrogate_value",
    "optimize_position",
    "place_sequentially",
    "mm_position_step",
]


class InfeasiblePlacementError(RuntimeError):
    """Every lattice point is excluded for the antenna being placed."""


@dataclass(frozen=True)
class SurrogateCoefficients:
    """Coefficients of the separable lower bound built at one expansion layout.

    ``S_n = u_n u_n^H`` and ``Lambda_n = blockdiag_k(c_{n,k} c_{n,k}^H)`` are
    both low rank, so only their factors are stored; the dense matrices are
    available as properties.

    Attributes
    ----------
    u : (N, M) ``V_n^{-1} H_n b_n`` at the expansion point.
    c : (N, KL) ``G E_n b_n``, grouped by user.
    beta : (N,) ``lambda_max(S_n) * lambda_max(Lambda_n)``.
    omega : (N, KL*M) ``vec(G E_n b b^H H^H V^{-1})``.
    psi : (N, KL*M) ``(Psi_n - beta_n I) eta0 - omega_n``.
    phi : (M, KL) per-antenna sums of the blocks of ``psi_n``.
    kappa : (N,) constants of the quadratic majorizer step.
    """

    u: np.ndarray
    c: np.ndarray
    beta: np.ndarray
    omega: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    kappa: np.ndarray
    eta0: np.ndarray
    channel: ChannelRealization
    wavelength: float

    @functools.cached_property
    def S(self) -> np.ndarray:
        """(N, M, M) Hermitian PSD, ``V^{-1} H b b^H H^H V^{-1}``."""
        return self.u[:, :, None] * np.conj(self.u[:, None, :])

    @functools.cached_property
    def Lambda(self) -> np.ndarray:
        """(N, KL, KL) Hermitian PSD, ``G E_n B_n E_n^H G^H``."""
        N, KL = self.c.shape
        K, L = self.channel.gains.shape
        out = np.zeros((N, KL, KL), dtype=complex)
        for k in range(K):
            blk = slice(k * L, (k + 1) * L)
            out[:, blk, blk] = self.c[:, blk, None] * np.conj(self.c[:, None, blk])
        return out

    @property
    def constant(self) -> float:
        """Layout-independent part of the bound, summed over subcarriers."""
        return float(np.sum(self.kappa))

    @property
    def num_antennas(self) -> int:
        return self.phi.shape[0]

    @functools.cached_property
    def directions(self) -> tuple[np.ndarray, np.ndarray]:
        return self.channel.direction_terms()

    @functools.cached_property
    def wave_directions(self) -> tuple[np.ndarray, np.ndarray]:
        """``-j 2 pi / lambda`` times the x and y direction terms."""
        k = -2j * np.pi / self.wavelength
        sx, sy = self.directions
        return k * sx, k * sy

    def antenna_terms(self, points, m: int) -> np.ndarray:
        """``-2 Re{eta(r)^H phi_m}`` for each row of ``points``."""
        eta = eta_block(points, self.channel, self.wavelength)
        return -2.0 * np.real(np.conj(eta) @ self.phi[m])


def build_surrogate(fc: FrequencyChannel, b: np.ndarray, noise_power: float) -> SurrogateCoefficients:
    """Surrogate coefficients at the layout ``fc`` was built from."""
    N, M, K = fc.H.shape
    L = fc.num_paths
    KL = K * L
    _, _, u, _ = _quadratic_terms(fc.H, b, noise_power)  # u_n = V_n^{-1} H_n b_n
    lam_s = np.sum(np.abs(u) ** 2, axis=1)  # S_n has rank one

    # c_n = G E_n b_n: entry (k, l) is g_{k,l} e_{k,n,l} b_{k,n}
    c = fc.gains.reshape(K, L)[None] * fc.delay_phases * b.T[:, :, None]  # (N, K, L)
    # Lambda_n has rank-one diagonal blocks c_k c_k^H
    lam_lambda = np.max(np.sum(np.abs(c) ** 2, axis=2), axis=1)
    beta = lam_s * lam_lambda

    Fh = np.conj(fc.F.T)  # (KL, M), column m is eta(r_m)
    eta0 = fc.eta
    # Psi_n eta0 = vec(Lambda_n F^H S_n) = vec(x_n u_n^H) with x_n = Lambda_n F^H u_n
    y = (u @ Fh.T).reshape(N, K, L)
    x = (c * np.sum(np.conj(c) * y, axis=2, keepdims=True)).reshape(N, KL)
    c = c.reshape(N, KL)
    u_conj = np.conj(u)
    # vec(. u^H) in column-major order: block m is (.) * conj(u_m)
    omega = (u_conj[:, :, None] * c[:, None, :]).reshape(N, M * KL)
    psi_eta = (u_conj[:, :, None] * x[:, None, :]).reshape(N, M * KL)
    psi = psi_eta - beta[:, None] * eta0[None] - omega

    quad = np.real(psi_eta @ np.conj(eta0))  # eta0^H Psi_n eta0
    eta_sq = float(M * KL)
    kappa = -beta * eta_sq - (beta * eta_sq - quad) - noise_power * lam_s

    phi = psi.reshape(N, M, KL).sum(axis=0)
    return SurrogateCoefficients(
        u=u, c=c, beta=beta, omega=omega, psi=psi, phi=phi,
        kappa=kappa, eta0=eta0, channel=fc.channel, wavelength=fc.wavelength,
    )


def surrogate_value(coeffs: SurrogateCoefficients, layout: AntennaLayout,
                    with_constants: bool = False) -> float:
    """Separable surrogate ``sum_m -2 Re{eta(r_m)^H phi_m}`` at ``layout``.

    With ``with_constants`` the layout-independent terms are added, giving the
    lower bound on the position objective itself.
    """
    eta = eta_block(layout.positions, coeffs.channel, coeffs.wavelength)
    val = float(-2.0 * np.sum(np.real(np.sum(np.conj(eta) * coeffs.phi, axis=1))))
    if with_constants:
        val += coeffs.constant
    return val


REFINE_FACTOR = 8


def _lattice_values(coeffs: SurrogateCoefficients, xs: np.ndarray, ys: np.ndarray,
                    antennas=None) -> np.ndarray:
    """Surrogate terms on the tensor lattice ``xs x ys`` as ``(len(antennas), nx, ny)``.

    ``exp(j k (x sx + y sy))`` factors into an x part and a y part, so each
    antenna costs one ``(nx, KL) @ (KL, ny)`` product.
    """
    kx, ky = coeffs.wave_directions
    phi = coeffs.phi if antennas is None else coeffs.phi[antennas]
    ex = np.exp(np.multiply.outer(xs, kx))  # (nx, KL)
    ey = np.exp(np.multiply.outer(ys, ky))  # (ny, KL)
    return -2.0 * np.real((ex[None] * phi[:, None, :]) @ ey.T[None])


def _exclusion_mask(X: np.ndarray, Y: np.ndarray, exclusions, radius: float) -> np.ndarray:
    mask = np.ones(np.broadcast_shapes(np.shape(X), np.shape(Y)), dtype=bool)
    r2 = radius * radius
    for cx, cy in np.asarray(exclusions, dtype=float).reshape(-1, 2):
        dx = X - cx
        dy = Y - cy
        mask &= dx * dx + dy * dy >= r2
    return mask


class PositionGrid:
    """Search lattice over the movable region, x-major then y.

    Exclusion disks are open: a point exactly ``radius`` away stays admissible.
    With ``refine_levels > 0`` the search continues on successively finer
    windows (step divided by ``REFINE_FACTOR`` per level) centered on the
    incumbent; the incumbent is replaced only by a strictly better point.
    """

    def __init__(self, region, step: float, refine_levels: int = 0):
        self.region = tuple(float(v) for v in region)
        self.step = float(step)
        self.refine_levels = int(refine_levels)
        x_lo, x_hi, y_lo, y_hi = self.region
        self.xs = lattice_axis(x_lo, x_hi, self.step)
        self.ys = lattice_axis(y_lo, y_hi, self.step)
        self.X, self.Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        self.points = np.column_stack([self.X.ravel(), self.Y.ravel()])
        for a in (self.xs, self.ys, self.X, self.Y, self.points):
            a.setflags(write=False)
        window = np.arange(-REFINE_FACTOR, REFINE_FACTOR + 1)
        self._offsets = [window * (self.step / REFINE_FACTOR ** (i + 1))
                         for i in range(self.refine_levels)]
        self._tables_for = None
        self._tables = []

    def _phase_tables(self, coeffs: SurrogateCoefficients):
        """Per-level ``exp(-j k offset s)`` tables for the refinement windows, cached per surrogate."""
        if self._tables_for is not coeffs:
            kx, ky = coeffs.wave_directions
            self._tables = [(np.exp(np.multiply.outer(o, kx)), np.exp(np.multiply.outer(o, ky)))
                            for o in self._offsets]
            self._tables_for = coeffs
        return self._tables

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "PositionGrid":
        return cls(cfg.region, cfg.grid_step, cfg.grid_refine_levels)

    def __len__(self) -> int:
        return len(self.points)

    def admissible(self, exclusions=(), radius: float = 0.0) -> np.ndarray:
        """Flat boolean mask of lattice points outside every exclusion disk."""
        return _exclusion_mask(self.X, self.Y, exclusions, radius).ravel()

    def search(self, coeffs: SurrogateCoefficients, m: int, exclusions=(), radius: float = 0.0,
               values: np.ndarray | None = None, mask: np.ndarray | None = None) -> np.ndarray:
        """Admissible point maximizing antenna ``m``'s surrogate term.

        ``values`` and ``mask`` may carry precomputed ``(nx, ny)`` lattice
        values and admissibility for the given exclusions.
        """
        if values is None:
            values = _lattice_values(coeffs, self.xs, self.ys, [m])[0]
        if mask is None:
            mask = _exclusion_mask(self.xs[:, None], self.ys[None, :], exclusions, radius)
        if not mask.any():
            raise InfeasiblePlacementError("no admissible lattice point left")
        # flat argmax picks the first maximizer: smallest x, then smallest y
        i = int(np.argmax(np.where(mask, values, -np.inf)))
        best = self.points[i].copy()
        best_val = values.ravel()[i]

        x_lo, x_hi, y_lo, y_hi = self.region
        kx, ky = coeffs.wave_directions
        phi_m = coeffs.phi[m]
        for offsets, (tx, ty) in zip(self._offsets, self._phase_tables(coeffs)):
            xs = best[0] + offsets
            ys = best[1] + offsets
            in_x = (xs >= x_lo) & (xs <= x_hi)
            in_y = (ys >= y_lo) & (ys <= y_hi)
            xs, ys = xs[in_x], ys[in_y]
            # window phases: center phase times the precomputed offset phases
            ex = tx[in_x] * (np.exp(best[0] * kx) * phi_m)
            ey = ty[in_y] * np.exp(best[1] * ky)
            vals = -2.0 * np.real(ex @ ey.T)
            if len(exclusions):
                vals[~_exclusion_mask(xs[:, None], ys[None, :], exclusions, radius)] = -np.inf
            jx, jy = np.unravel_index(int(np.argmax(vals)), vals.shape)
            if vals[jx, jy] > best_val:
                best_val = vals[jx, jy]
                best = np.array([xs[jx], ys[jy]])
        return best


def optimize_position(m: int, coeffs: SurrogateCoefficients, grid: PositionGrid,
                      fixed=(), radius: float = 0.0) -> np.ndarray:
    """Point maximizing antenna ``m``'s surrogate term outside the disks around ``fixed``.

    Raises :class:`InfeasiblePlacementError` when every lattice point is excluded.
    """
    return grid.search(coeffs, m, fixed, radius)


def place_sequentially(coeffs: SurrogateCoefficients, grid: PositionGrid, spacing: float,
                       previous: AntennaLayout) -> AntennaLayout:
    """Place antennas 1..M in order, each excluding the ones already placed this pass.

    An antenna with no admissible point keeps its previous position.
    """
    values = _lattice_values(coeffs, grid.xs, grid.ys)
    mask = np.ones(values.shape[1:], dtype=bool)
    xs, ys = grid.xs[:, None], grid.ys[None, :]
    placed: list[np.ndarray] = []
    for m in range(coeffs.num_antennas):
        try:
            placed.append(grid.search(coeffs, m, placed, spacing, values=values[m], mask=mask))
        except InfeasiblePlacementError:
            placed.append(np.array(previous.positions[m]))
        mask = mask & _exclusion_mask(xs, ys, placed[-1:], spacing)
    return AntennaLayout(np.array(placed))


class MMStepResult(NamedTuple):
    layout: AntennaLayout
    objective: float
    accepted: bool
    channel: FrequencyChannel


def mm_position_step(fc: FrequencyChannel, b: np.ndarray, cfg: SystemConfig,
                     grid: PositionGrid | None = None,
                     objective: float | None = None) -> MMStepResult:
    """One minorize-maximize iteration on the antenna positions.

    The surrogate is built at ``fc.layout`` and maximized antenna by antenna.
    The new layout is kept only if it is feasible and does not lower the true
    position objective; otherwise the old layout comes back with
    ``accepted=False``.  ``channel`` is the frequency channel of the returned
    layout.  ``objective`` may pass the already known objective at ``fc``.
    """
    if grid is None:
        grid = PositionGrid.from_config(cfg)
    sigma2 = cfg.noise_power
    if objective is None:
        objective = float(np.sum(_quadratic_terms(fc.H, b, sigma2)[3]))
    old_obj = objective
    coeffs = build_surrogate(fc, b, sigma2)
    candidate = place_sequentially(coeffs, grid, cfg.min_spacing, fc.layout)
    if candidate.is_feasible(cfg):
        new_fc = assemble_factors(candidate, fc.channel, cfg)
        new_obj = float(np.sum(_quadratic_terms(new_fc.H, b, sigma2)[3]))
        if new_obj >= old_obj:
            return MMStepResult(candidate, new_obj, True, new_fc)
    return MMStepResult(fc.layout, old_obj, False, fc)
