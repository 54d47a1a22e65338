import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance, random_precoders, scalar_channel
from fasaircomp.harness import alternate_transceivers
from fasaircomp.model import default_config
from fasaircomp.transceiver import (
    effective_gains,
    mse_all_subcarriers,
    mse_per_subcarrier,
    overall_mse,
    position_objective,
    update_combiners,
    update_precoders,
    workspace,
)


def raw_mse(fc, b, w, sigma2):
    """Per-subcarrier MSE straight from the definition, loop by loop."""
    N, M, K = fc.H.shape
    out = []
    for i in range(N):
        total = sigma2 * np.vdot(w[:, i], w[:, i]).real
        for k in range(K):
            total += abs(np.vdot(w[:, i], fc.H[i, :, k]) * b[k, i] - 1) ** 2
        out.append(total)
    return np.array(out)


def test_unclipped_precoder_zeroes_residual():
    _, _, fc = scalar_channel(2.0)
    b = update_precoders(fc, np.array([[1.0 + 0j]]), power=1.0)
    assert abs(b[0, 0]) == pytest.approx(0.5)
    assert effective_gains(fc, np.array([[1.0]]))[0, 0] * b[0, 0] == pytest.approx(1.0)


def test_clipped_precoder_uses_full_power():
    _, _, fc = scalar_channel(0.5)
    b = update_precoders(fc, np.array([[1.0 + 0j]]), power=1.0)
    assert abs(b[0, 0]) == pytest.approx(1.0)
    assert np.angle(b[0, 0]) == pytest.approx(0.0)


def test_zero_gain_precoder_convention(cfg, rng):
    _, _, fc = random_instance(cfg, rng)
    w = np.zeros((cfg.num_antennas, cfg.num_subcarriers), complex)
    b = update_precoders(fc, w, 4.0)
    assert np.all(b == 2.0)


def test_precoder_beats_magnitude_phase_grid(cfg, rng):
    P = cfg.power_budget
    for _ in range(3):
        _, _, fc = random_instance(cfg, rng)
        w = update_combiners(fc, random_precoders(cfg, rng), cfg.noise_power)
        a = effective_gains(fc, w)  # (K, N)
        b = update_precoders(fc, w, P)
        closed = np.abs(a * b - 1) ** 2
        mags = np.linspace(0, np.sqrt(P), 200)
        phases = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        cand = (mags[:, None] * np.exp(1j * phases[None, :])).ravel()
        grid = np.min(np.abs(a[..., None] * cand - 1) ** 2, axis=-1)
        assert np.all(closed <= grid + 1e-12)
        assert np.max(np.abs(b) ** 2) <= P + 1e-12


def test_scalar_combiner_closed_form():
    h = 0.7 - 1.3j
    _, _, fc = scalar_channel(h)
    b = np.array([[0.4 + 0.9j]])
    sigma2 = 0.3
    w = update_combiners(fc, b, sigma2)
    expected = h * b[0, 0] / (abs(b[0, 0]) ** 2 * abs(h) ** 2 + sigma2)
    assert w[0, 0] == pytest.approx(expected, rel=1e-14)


def test_zero_precoder_gives_zero_combiner(cfg, rng):
    _, _, fc = random_instance(cfg, rng)
    w = update_combiners(fc, np.zeros((cfg.num_users, cfg.num_subcarriers)), 1.0)
    assert not np.any(w)


def test_combiner_local_optimality():
    rng = np.random.default_rng(77)
    cfg = default_config(num_subcarriers=8, max_delay=7)
    eps = 1e-5
    for _ in range(20):
        _, _, fc = random_instance(cfg, rng)
        b = random_precoders(cfg, rng)
        w = update_combiners(fc, b, cfg.noise_power)
        base = mse_all_subcarriers(fc, b, w, cfg.noise_power)
        for _ in range(100):
            d = rng.standard_normal(w.shape) + 1j * rng.standard_normal(w.shape)
            d /= np.linalg.norm(d, axis=0)
            for sign in (1, -1):
                moved = mse_all_subcarriers(fc, b, w + sign * eps * d, cfg.noise_power)
                assert np.all(moved > base)


def test_mse_zero_combiner_is_K(cfg, rng):
    _, _, fc = random_instance(cfg, rng)
    w = np.zeros((cfg.num_antennas, cfg.num_subcarriers), complex)
    b = random_precoders(cfg, rng)
    for n in (1, 30, 64):
        assert mse_per_subcarrier(fc, b, w, 1.0, n) == cfg.num_users


def test_optimal_mse_closed_form(cfg, rng):
    _, _, fc = random_instance(cfg, rng)
    b = random_precoders(cfg, rng)
    sigma2 = cfg.noise_power
    w = update_combiners(fc, b, sigma2)
    ws = workspace(fc, b, sigma2)
    for n in range(1, cfg.num_subcarriers + 1):
        H = fc.H[n - 1]
        bb = b[:, n - 1]
        V = H @ np.diag(np.abs(bb) ** 2) @ H.conj().T + sigma2 * np.eye(cfg.num_antennas)
        xi = cfg.num_users - (bb.conj() @ H.conj().T @ np.linalg.inv(V) @ H @ bb).real
        assert mse_per_subcarrier(fc, b, w, sigma2, n) == pytest.approx(xi, abs=1e-10)
        assert ws.xi[n - 1] == pytest.approx(xi, abs=1e-10)
        assert 0 <= ws.xi[n - 1] <= cfg.num_users


def test_large_noise_limit(cfg, rng):
    _, _, fc = random_instance(cfg, rng)
    b = random_precoders(cfg, rng)
    w = update_combiners(fc, b, 1e8)
    assert overall_mse(fc, b, w, 1e8) == pytest.approx(cfg.num_users, abs=1e-3)


def test_overall_mse_against_raw_definition(cfg, rng):
    _, _, fc = random_instance(cfg, rng)
    b = random_precoders(cfg, rng)
    w = rng.standard_normal((cfg.num_antennas, cfg.num_subcarriers)) * (1 + 0.5j)
    raw = raw_mse(fc, b, w, 0.7)
    assert overall_mse(fc, b, w, 0.7) == pytest.approx(raw.mean(), rel=1e-12)


def test_single_subcarrier_overall_equals_per_subcarrier(rng):
    cfg = default_config(num_subcarriers=1, max_delay=0)
    _, _, fc = random_instance(cfg, rng)
    b = random_precoders(cfg, rng)
    w = update_combiners(fc, b, 1.0)
    assert overall_mse(fc, b, w, 1.0) == mse_per_subcarrier(fc, b, w, 1.0, 1)


def test_position_objective_identity(cfg, rng):
    K, N = cfg.num_users, cfg.num_subcarriers
    for _ in range(5):
        _, _, fc = random_instance(cfg, rng)
        b = random_precoders(cfg, rng)
        w = update_combiners(fc, b, cfg.noise_power)
        J = position_objective(fc, b, cfg.noise_power)
        assert K * N - N * overall_mse(fc, b, w, cfg.noise_power) == pytest.approx(J, abs=1e-9)
    assert position_objective(fc, np.zeros((K, N)), 1.0) == 0.0


def test_position_objective_monotone_in_power():
    rng = np.random.default_rng(8)
    cfg = default_config(num_users=1, num_antennas=1, num_subcarriers=16)
    _, _, fc = random_instance(cfg, rng)
    phase = np.exp(1j * rng.uniform(0, 2 * np.pi, (1, 16)))
    values = [position_objective(fc, np.sqrt(P) * phase, 1.0) for P in np.logspace(0, 1, 25)]
    assert np.all(np.diff(values) >= 0)


def test_mse_index_errors(cfg, rng):
    _, _, fc = random_instance(cfg, rng)
    b = random_precoders(cfg, rng)
    w = update_combiners(fc, b, 1.0)
    with pytest.raises(IndexError):
        mse_per_subcarrier(fc, b, w, 1.0, 0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), snr_db=st.floats(-10, 30))
def test_fixed_layout_ao_is_monotone_and_feasible(seed, snr_db):
    cfg = default_config(num_subcarriers=16, max_delay=15, power_budget=10 ** (snr_db / 10), max_ao_iters=30)
    rng = np.random.default_rng(seed)
    _, _, fc = random_instance(cfg, rng)
    b, w, trace = alternate_transceivers(fc, cfg)
    assert np.all(np.diff(trace) <= 0)
    assert np.max(np.abs(b) ** 2) <= cfg.power_budget + 1e-12
    assert 0 <= trace[-1] <= cfg.num_users
