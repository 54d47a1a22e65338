"""Command line entry point: ``fasaircomp {run,single,validate}``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .channel import assemble_factors
from .harness import SCHEMES, ExperimentSpec, load_experiment_spec, run_experiment, run_trial
from .model import ConfigError, AntennaLayout, default_config, load_config, sample_channel
from .ofdm_oracle import frequency_model, modulate, propagate_and_demodulate


def _config(args):
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg = cfg.replace(rng_seed=args.seed)
    return cfg


def _schemes(text):
    return tuple(s.strip() for s in text.split(",") if s.strip())


def cmd_run(args) -> int:
    cfg = _config(args)
    spec = load_experiment_spec(args.spec) if args.spec else ExperimentSpec()
    changes = {}
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.schemes:
        changes["schemes"] = _schemes(args.schemes)
    if args.out:
        changes["out"] = args.out
    if args.no_timing:
        changes["record_wall_time"] = False
    if changes:
        spec = ExperimentSpec(**{**spec.__dict__, **changes})
    if not spec.out:
        raise ConfigError("out", "no output path (set --out or 'out' in the spec file)")
    results = run_experiment(spec, cfg, threads=args.threads, progress=True)
    print(f"wrote {len(results)} trial rows to {spec.out}")
    return 0


def cmd_single(args) -> int:
    cfg = _config(args)
    schemes = _schemes(args.schemes) if args.schemes else SCHEMES
    for r in run_trial(cfg, cfg.rng_seed, schemes):
        print(f"[{r.scheme}] mse={r.mse:.6g} iterations={r.iterations} time={r.wall_time_s:.2f}s")
        for i, v in enumerate(r.extra["trace"]):
            print(f"  iter {i:4d}  mse {v:.10g}")
        pos = np.asarray(r.extra["layout"]) / cfg.wavelength
        print("  layout (units of wavelength): " + ", ".join(f"({x:+.4f}, {y:+.4f})" for x, y in pos))
    return 0


def cmd_validate(args) -> int:
    cfg = _config(args)
    rng = np.random.default_rng(cfg.rng_seed)
    cp_len = cfg.max_delay + 1 if args.cp_len is None else args.cp_len
    worst = 0.0
    x_lo, x_hi, y_lo, y_hi = cfg.region
    for _ in range(args.trials):
        chan = sample_channel(cfg, rng)
        layout = AntennaLayout(np.column_stack([
            rng.uniform(x_lo, x_hi, cfg.num_antennas), rng.uniform(y_lo, y_hi, cfg.num_antennas),
        ]))
        d = (rng.standard_normal((cfg.num_users, cfg.num_subcarriers))
             + 1j * rng.standard_normal((cfg.num_users, cfg.num_subcarriers)))
        z_time = propagate_and_demodulate(modulate(d, cp_len, cfg.max_delay), chan, layout, cfg.wavelength)
        z_freq = frequency_model(assemble_factors(layout, chan, cfg).H, d)
        worst = max(worst, float(np.linalg.norm(z_time - z_freq) / np.linalg.norm(z_freq)))
    ok = worst <= args.tol
    print(f"time-domain vs per-subcarrier model: max relative error {worst:.3e} "
          f"over {args.trials} instances -> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fasaircomp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML/JSON scenario config")
        p.add_argument("--seed", type=int, help="override rng_seed")
        return p

    run = common(sub.add_parser("run", help="Monte-Carlo sweep to CSV"))
    run.add_argument("--spec", help="YAML/JSON experiment spec")
    run.add_argument("--out", help="CSV output path")
    run.add_argument("--trials", type=int)
    run.add_argument("--schemes", help="comma list from proposed,fpa,eas")
    run.add_argument("--threads", type=int, default=1, help="worker processes")
    run.add_argument("--no-timing", action="store_true",
                     help="write 0 for wall_time_s so reruns are byte-identical")
    run.set_defaults(func=cmd_run)

    single = common(sub.add_parser("single", help="one trial with per-iteration MSE trace"))
    single.add_argument("--schemes", help="comma list from proposed,fpa,eas")
    single.set_defaults(func=cmd_single)

    val = common(sub.add_parser("validate", help="check the OFDM model against a time-domain run"))
    val.add_argument("--trials", type=int, default=20)
    val.add_argument("--cp-len", type=int)
    val.add_argument("--tol", type=float, default=1e-10)
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
