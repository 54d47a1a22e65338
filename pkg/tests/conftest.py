import numpy as np
import pytest

from fasaircomp.channel import assemble_factors
from fasaircomp.model import AntennaLayout, ChannelRealization, default_config, sample_channel

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def cfg():
    return default_config()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_layout(cfg, rng, tries=10_000):
    """Uniform random layout in the region with rejection on spacing."""
    x_lo, x_hi, y_lo, y_hi = cfg.region
    for _ in range(tries):
        pos = np.column_stack([rng.uniform(x_lo, x_hi, cfg.num_antennas),
                               rng.uniform(y_lo, y_hi, cfg.num_antennas)])
        layout = AntennaLayout(pos)
        if layout.is_feasible(cfg):
            return layout
    raise RuntimeError("could not draw a feasible layout")


def random_instance(cfg, rng):
    chan = sample_channel(cfg, rng)
    layout = random_layout(cfg, rng)
    return chan, layout, assemble_factors(layout, chan, cfg)


def random_precoders(cfg, rng):
    K, N = cfg.num_users, cfg.num_subcarriers
    mag = np.sqrt(cfg.power_budget) * rng.uniform(0.2, 1.0, (K, N))
    return mag * np.exp(1j * rng.uniform(0, 2 * np.pi, (K, N)))


def scalar_channel(h, num_subcarriers=1):
    """Single user, single path, zero delay, one antenna at the origin: h_{1,n} = h / sqrt(N)."""
    chan = ChannelRealization(gains=[[h]], delays=[[0]], elevations=[[0.3]], azimuths=[[0.2]])
    cfg = default_config(num_users=1, num_paths=1, num_antennas=1,
                         num_subcarriers=num_subcarriers, max_delay=0)
    return cfg, chan, assemble_factors(AntennaLayout([[0.0, 0.0]]), chan, cfg)
