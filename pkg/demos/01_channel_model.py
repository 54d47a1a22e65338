"""Build a per-subcarrier channel and check it against a time-domain OFDM link.

Run with ``python demos/01_channel_model.py``.
"""
import numpy as np

from fasaircomp import AntennaLayout, assemble_factors, default_config, sample_channel
from fasaircomp.channel import channel_matrix
from fasaircomp.ofdm_oracle import frequency_model, modulate, propagate_and_demodulate

cfg = default_config(rng_seed=3)
rng = np.random.default_rng(cfg.rng_seed)
chan = sample_channel(cfg, rng)
print(f"K={cfg.num_users} users, L={cfg.num_paths} paths each, N={cfg.num_subcarriers} subcarriers")
print("delays of user 1:", chan.delays[0])

# %% four antennas on a half-wavelength line
lam = cfg.wavelength
layout = AntennaLayout([[-1.5 * lam, 0], [-0.5 * lam, 0], [0.5 * lam, 0], [1.5 * lam, 0]])
fc = assemble_factors(layout, chan, cfg)

# H_n = F G E_n; the channel on subcarrier 1 is M x K
H1 = channel_matrix(fc, 1)
print("H_1 shape:", H1.shape, " |eta|^2 =", round(float(np.linalg.norm(fc.eta) ** 2), 6), "(= KLM)")

# frequency selectivity: per-subcarrier gain of user 1 at antenna 1
gain = np.abs(fc.H[:, 0, 0]) * np.sqrt(cfg.num_subcarriers)
print("user 1 gain over subcarriers: min %.3f  max %.3f" % (gain.min(), gain.max()))

# %% the same thing through IDFT, cyclic prefix, convolution and DFT
d = rng.standard_normal((cfg.num_users, cfg.num_subcarriers)) + 0j
z_time = propagate_and_demodulate(modulate(d, cfg.max_delay + 1), chan, layout, lam)
z_freq = frequency_model(fc.H, d)
print("time vs frequency model, relative error: %.2e" %
      (np.linalg.norm(z_time - z_freq) / np.linalg.norm(z_freq)))
