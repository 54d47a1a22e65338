import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance, random_layout, random_precoders
from fasaircomp.channel import assemble_factors, field_response_vector
from fasaircomp.harness import fpa_layout
from fasaircomp.model import AntennaLayout, default_config, sample_channel
from fasaircomp.position_opt import (
    InfeasiblePlacementError,
    PositionGrid,
    build_surrogate,
    mm_position_step,
    optimize_position,
    place_sequentially,
    surrogate_value,
)
from fasaircomp.transceiver import position_objective, update_combiners, update_precoders


def small_cfg(**kw):
    return default_config(num_subcarriers=16, max_delay=15, **kw)


def test_tight_at_expansion_point(cfg, rng):
    for _ in range(5):
        _, layout, fc = random_instance(cfg, rng)
        b = random_precoders(cfg, rng)
        coeffs = build_surrogate(fc, b, cfg.noise_power)
        J = position_objective(fc, b, cfg.noise_power)
        val = surrogate_value(coeffs, layout, with_constants=True)
        assert abs(val - J) <= 1e-8 * abs(J)


def test_lower_bound_on_random_layouts(rng):
    cfg = small_cfg()
    for _ in range(3):
        chan, _, fc = random_instance(cfg, rng)
        b = random_precoders(cfg, rng)
        coeffs = build_surrogate(fc, b, cfg.noise_power)
        for _ in range(50):
            other = random_layout(cfg, rng)
            J = position_objective(assemble_factors(other, chan, cfg), b, cfg.noise_power)
            assert surrogate_value(coeffs, other, with_constants=True) <= J + 1e-9 * abs(J)


def test_beta_matches_dense_kronecker():
    cfg = default_config(num_users=2, num_paths=2, num_antennas=2, num_subcarriers=8, max_delay=7)
    rng = np.random.default_rng(4)
    for _ in range(5):
        _, _, fc = random_instance(cfg, rng)
        coeffs = build_surrogate(fc, random_precoders(cfg, rng), cfg.noise_power)
        for n in range(cfg.num_subcarriers):
            dense = np.linalg.eigvalsh(np.kron(coeffs.S[n].T, coeffs.Lambda[n]))[-1]
            assert abs(coeffs.beta[n] - dense) <= 1e-10 * max(1.0, dense)


def test_surrogate_pieces_are_psd(cfg, rng):
    _, _, fc = random_instance(cfg, rng)
    coeffs = build_surrogate(fc, random_precoders(cfg, rng), cfg.noise_power)
    for mats in (coeffs.S, coeffs.Lambda):
        assert np.allclose(mats, np.conj(mats.transpose(0, 2, 1)), atol=1e-12)
        assert np.linalg.eigvalsh(mats).min() >= -1e-9


def test_null_precoder_gives_null_surrogate(cfg, rng):
    _, layout, fc = random_instance(cfg, rng)
    coeffs = build_surrogate(fc, np.zeros((cfg.num_users, cfg.num_subcarriers)), cfg.noise_power)
    assert not coeffs.S.any() and not coeffs.omega.any() and not coeffs.phi.any()
    assert surrogate_value(coeffs, layout) == 0.0


def test_separability(cfg, rng):
    _, layout, fc = random_instance(cfg, rng)
    coeffs = build_surrogate(fc, random_precoders(cfg, rng), cfg.noise_power)
    parts = [coeffs.antenna_terms(layout.positions[m:m + 1], m)[0] for m in range(cfg.num_antennas)]
    assert surrogate_value(coeffs, layout) == pytest.approx(sum(parts), rel=1e-12)


def brute_force(coeffs, grid, m, fixed, radius):
    """Independent lattice scan: recompute eta point by point, keep the first strict maximizer."""
    chan, lam = coeffs.channel, coeffs.wavelength
    K = chan.num_users
    best, best_val = None, -np.inf
    for x in grid.xs:
        for y in grid.ys:
            if any(np.hypot(x - fx, y - fy) < radius for fx, fy in fixed):
                continue
            eta = np.concatenate([field_response_vector((x, y), k, chan, lam) for k in range(K)])
            v = -2.0 * np.real(np.vdot(eta, coeffs.phi[m]))
            if v > best_val + 1e-12:
                best, best_val = (x, y), v
    return np.array(best)


def test_grid_search_matches_brute_force(rng):
    cfg = default_config(num_subcarriers=8, max_delay=7)
    _, _, fc = random_instance(cfg, rng)
    coeffs = build_surrogate(fc, random_precoders(cfg, rng), cfg.noise_power)
    grid = PositionGrid(cfg.region, cfg.wavelength / 10)
    assert np.array_equal(optimize_position(1, coeffs, grid), brute_force(coeffs, grid, 1, [], 0.0))
    fixed = [(0.0, 0.0), (0.1, -0.05)]
    got = optimize_position(2, coeffs, grid, fixed, cfg.min_spacing)
    assert np.array_equal(got, brute_force(coeffs, grid, 2, fixed, cfg.min_spacing))
    assert min(np.hypot(*(got - f)) for f in np.array(fixed)) >= cfg.min_spacing


def test_single_path_phase_closest_to_pi():
    cfg = default_config(num_users=1, num_paths=1, num_antennas=1, num_subcarriers=4, max_delay=0)
    rng = np.random.default_rng(21)
    chan = sample_channel(cfg, rng)
    fc = assemble_factors(AntennaLayout([[0.0, 0.0]]), chan, cfg)
    coeffs = build_surrogate(fc, np.ones((1, 4)), cfg.noise_power)
    coeffs = dataclasses.replace(coeffs, phi=np.array([[np.exp(0.4j)]]))
    grid = PositionGrid(cfg.region, cfg.grid_step)
    best = optimize_position(0, coeffs, grid)
    phases = np.array([np.angle(np.vdot(field_response_vector(p, 0, chan, cfg.wavelength), [np.exp(0.4j)]))
                       for p in grid.points])
    dist = np.pi - np.abs(phases)
    assert np.array_equal(best, grid.points[np.argmin(dist)])


def test_full_exclusion_raises(cfg, rng):
    _, _, fc = random_instance(cfg, rng)
    coeffs = build_surrogate(fc, random_precoders(cfg, rng), cfg.noise_power)
    grid = PositionGrid(cfg.region, cfg.grid_step)
    with pytest.raises(InfeasiblePlacementError):
        optimize_position(0, coeffs, grid, fixed=[(0.0, 0.0)], radius=10 * cfg.wavelength)


def test_zero_phi_tie_break(cfg, rng):
    _, _, fc = random_instance(cfg, rng)
    coeffs = build_surrogate(fc, np.zeros((cfg.num_users, cfg.num_subcarriers)), cfg.noise_power)
    grid = PositionGrid(cfg.region, cfg.grid_step, refine_levels=3)
    x_lo, _, y_lo, _ = cfg.region
    assert optimize_position(0, coeffs, grid).tolist() == [x_lo, y_lo]


def test_single_antenna_is_global_search(rng):
    cfg = small_cfg(num_antennas=1)
    _, _, fc = random_instance(cfg, rng)
    coeffs = build_surrogate(fc, random_precoders(cfg, rng), cfg.noise_power)
    grid = PositionGrid(cfg.region, cfg.grid_step)
    placed = place_sequentially(coeffs, grid, cfg.min_spacing, fc.layout)
    vals = coeffs.antenna_terms(grid.points, 0)
    assert np.array_equal(placed.positions[0], grid.points[np.argmax(vals)])


def test_halving_step_never_hurts(rng):
    cfg = small_cfg()
    for _ in range(5):
        _, _, fc = random_instance(cfg, rng)
        coeffs = build_surrogate(fc, random_precoders(cfg, rng), cfg.noise_power)
        coarse = PositionGrid(cfg.region, cfg.grid_step)
        fine = PositionGrid(cfg.region, cfg.grid_step / 2)
        for m in range(cfg.num_antennas):
            c = coeffs.antenna_terms(optimize_position(m, coeffs, coarse)[None], m)[0]
            f = coeffs.antenna_terms(optimize_position(m, coeffs, fine)[None], m)[0]
            assert f >= c


def test_refinement_never_hurts(rng):
    cfg = small_cfg()
    _, _, fc = random_instance(cfg, rng)
    coeffs = build_surrogate(fc, random_precoders(cfg, rng), cfg.noise_power)
    flat = PositionGrid(cfg.region, cfg.grid_step)
    refined = PositionGrid(cfg.region, cfg.grid_step, refine_levels=3)
    for m in range(cfg.num_antennas):
        a = coeffs.antenna_terms(optimize_position(m, coeffs, flat)[None], m)[0]
        r = optimize_position(m, coeffs, refined)
        assert coeffs.antenna_terms(r[None], m)[0] >= a
        assert refined.region[0] <= r[0] <= refined.region[1]


def test_sequential_placement_respects_spacing(rng):
    cfg = small_cfg(num_antennas=6)
    for _ in range(5):
        _, _, fc = random_instance(cfg, rng)
        coeffs = build_surrogate(fc, random_precoders(cfg, rng), cfg.noise_power)
        out = place_sequentially(coeffs, PositionGrid.from_config(cfg), cfg.min_spacing, fc.layout)
        assert out.in_region(cfg.region)
        assert out.min_distance() >= cfg.min_spacing


def test_mm_steps_are_monotone():
    cfg = small_cfg()
    rng = np.random.default_rng(31)
    grid = PositionGrid.from_config(cfg)
    for _ in range(100):
        chan = sample_channel(cfg, rng)
        fc = assemble_factors(fpa_layout(cfg), chan, cfg)
        w = update_combiners(fc, random_precoders(cfg, rng), cfg.noise_power)
        b = update_precoders(fc, w, cfg.power_budget)
        prev = position_objective(fc, b, cfg.noise_power)
        for _ in range(3):
            step = mm_position_step(fc, b, cfg, grid)
            assert step.objective >= prev
            assert step.layout.is_feasible(cfg)
            assert step.objective == pytest.approx(position_objective(step.channel, b, cfg.noise_power))
            if not step.accepted:
                assert step.layout is fc.layout
                break
            fc, prev = step.channel, step.objective


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 4), n=st.integers(1, 5))
def test_kronecker_eigen_product_rule(seed, m, n):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, m + 1)) + 1j * rng.standard_normal((m, m + 1))
    B = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
    A, B = A @ A.conj().T, B @ B.conj().T
    dense = np.linalg.eigvalsh(np.kron(A.T, B))[-1]
    prod = np.linalg.eigvalsh(A)[-1] * np.linalg.eigvalsh(B)[-1]
    assert dense == pytest.approx(prod, rel=1e-10)
