"""One surrogate-based position update, step by step.

Run with ``python demos/03_position_mm.py``.
"""
import numpy as np

from fasaircomp import assemble_factors, build_surrogate, default_config, position_objective, sample_channel
from fasaircomp.harness import alternate_transceivers, fpa_layout
from fasaircomp.position_opt import PositionGrid, mm_position_step, surrogate_value

cfg = default_config(rng_seed=2)
chan = sample_channel(cfg, np.random.default_rng(cfg.rng_seed))
fc = assemble_factors(fpa_layout(cfg), chan, cfg)
b, w, _ = alternate_transceivers(fc, cfg)

# the surrogate touches the objective at the expansion layout ...
coeffs = build_surrogate(fc, b, cfg.noise_power)
J = position_objective(fc, b, cfg.noise_power)
print("objective %.6f  surrogate %.6f" % (J, surrogate_value(coeffs, fc.layout, with_constants=True)))
print("beta per subcarrier: min %.3g  max %.3g" % (coeffs.beta.min(), coeffs.beta.max()))

# ... and lower-bounds it elsewhere
shifted = type(fc.layout)(fc.layout.positions + [0.0, 0.02])
J2 = position_objective(assemble_factors(shifted, chan, cfg), b, cfg.noise_power)
print("moved layout: objective %.6f >= surrogate %.6f" %
      (J2, surrogate_value(coeffs, shifted, with_constants=True)))

# %% a few MM steps on the lattice (lambda/20 pitch, three refinement levels)
grid = PositionGrid.from_config(cfg)
print(f"{len(grid)} coarse lattice points per antenna")
for it in range(5):
    step = mm_position_step(fc, b, cfg, grid)
    print(f"step {it}: objective {step.objective:.6f} accepted={step.accepted}")
    if not step.accepted:
        break
    fc = step.channel
print("positions / lambda:\n", np.round(fc.layout.positions / cfg.wavelength, 4))
