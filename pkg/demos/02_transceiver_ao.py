"""Precoder and combiner alternation at a fixed antenna layout.

Run with ``python demos/02_transceiver_ao.py``.
"""
import numpy as np

from fasaircomp import assemble_factors, default_config, overall_mse, sample_channel
from fasaircomp.harness import alternate_transceivers, fpa_layout
from fasaircomp.transceiver import effective_gains, update_combiners, update_precoders

cfg = default_config(rng_seed=1)
chan = sample_channel(cfg, np.random.default_rng(cfg.rng_seed))
fc = assemble_factors(fpa_layout(cfg), chan, cfg)

# full-power start, then one manual round
b = np.full((cfg.num_users, cfg.num_subcarriers), np.sqrt(cfg.power_budget), complex)
w = update_combiners(fc, b, cfg.noise_power)
print("start          MSE %.5f" % overall_mse(fc, b, w, cfg.noise_power))
b = update_precoders(fc, w, cfg.power_budget)
print("after precoder MSE %.5f" % overall_mse(fc, b, w, cfg.noise_power))
w = update_combiners(fc, b, cfg.noise_power)
print("after combiner MSE %.5f" % overall_mse(fc, b, w, cfg.noise_power))

# %% run to convergence
b, w, trace = alternate_transceivers(fc, cfg)
print(f"converged in {len(trace) - 1} iterations, MSE {trace[-1]:.5f}")

# the MMSE combiner shrinks |w^H h|, so most users end up at full power and
# the residual misalignment |w^H h b - 1| is what the MSE measures
a = effective_gains(fc, w)
clipped = np.isclose(np.abs(b) ** 2, cfg.power_budget)
print(f"{clipped.mean():.0%} of (user, subcarrier) pairs at full power")
print("mean |w^H h b| = %.3f" % np.abs(a * b).mean())
