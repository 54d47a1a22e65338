"""Alternating-optimization solvers, baselines and the Monte-Carlo runner."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml

from .channel import assemble_factors
from .model import (
    AntennaLayout,
    ChannelRealization,
    ConfigError,
    FrequencyChannel,
    SystemConfig,
    TransceiverState,
    sample_channel,
)
from .position_opt import PositionGrid, mm_position_step
from .transceiver import overall_mse, position_objective, update_combiners, update_precoders

__all__ = [
    "SCHEMES",
    "CSV_COLUMNS",
    "SolveResult",
    "ExperimentSpec",
    "TrialResult",
    "fpa_layout",
    "eas_candidates",
    "alternate_transceivers",
    "solve_proposed",
    "solve_fpa",
    "solve_eas",
    "trial_seed",
    "run_trial",
    "run_experiment",
    "write_csv",
    "load_experiment_spec",
]

log = logging.getLogger(__name__)

SCHEMES = ("proposed", "fpa", "eas")
SWEEPS = ("snr_db", "num_users")
CSV_COLUMNS = ("scheme", "sweep_name", "sweep_value", "trial", "seed", "mse",
               "iterations", "wall_time_s")


@dataclass
class SolveResult:
    state: TransceiverState
    layout: AntennaLayout
    mse: float
    trace: list[float]
    evaluated: int = 1

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1


# -- layouts ------------------------------------------------------------------

def fpa_layout(cfg: SystemConfig) -> AntennaLayout:
    """Fixed-position baseline layout on the x-axis.

    Four antennas use ``x = -3, -1, 1, 3`` times ``lambda/2``; any other count
    uses a ``lambda/2``-spaced line centered at the origin.
    """
    M, lam = cfg.num_antennas, cfg.wavelength
    if M == 4:
        xs = np.array([-3, -1, 1, 3]) * lam / 2
    else:
        xs = (np.arange(M) - (M - 1) / 2) * lam / 2
    layout = AntennaLayout(np.column_stack([xs, np.zeros(M)]))
    if not layout.is_feasible(cfg):
        raise ConfigError("num_antennas", "fixed-position layout does not fit region/min_spacing")
    return layout


def eas_candidates(cfg: SystemConfig) -> np.ndarray:
    """The ``2M`` selection candidates: ``x in (2i-M-1) lambda/2``, ``y in +-lambda/2``."""
    M, lam = cfg.num_antennas, cfg.wavelength
    xs = (2 * np.arange(1, M + 1) - M - 1) * lam / 2
    return np.array([(x, y) for x in xs for y in (-lam / 2, lam / 2)])


# -- solvers ------------------------------------------------------------------

def _initial_state(fc: FrequencyChannel, cfg: SystemConfig):
    b = np.full((fc.num_users, fc.num_subcarriers), np.sqrt(cfg.power_budget), dtype=complex)
    w = update_combiners(fc, b, cfg.noise_power)
    return b, w


def _converged(prev: float, cur: float, tol: float) -> bool:
    return prev - cur <= tol * max(abs(prev), np.finfo(float).tiny)


def alternate_transceivers(fc: FrequencyChannel, cfg: SystemConfig, b=None, w=None):
    """Precoder/combiner AO at a fixed layout.

    Each block update is kept only if it does not raise the MSE, so the
    returned trace never increases.  Returns ``(b, w, trace)``.
    """
    sigma2, P = cfg.noise_power, cfg.power_budget
    if b is None or w is None:
        b, w = _initial_state(fc, cfg)
    mse = overall_mse(fc, b, w, sigma2)
    trace = [mse]
    for _ in range(cfg.max_ao_iters):
        prev = mse
        b_new = update_precoders(fc, w, P)
        m = overall_mse(fc, b_new, w, sigma2)
        if m <= mse:
            b, mse = b_new, m
        w_new = update_combiners(fc, b, sigma2)
        m = overall_mse(fc, b, w_new, sigma2)
        if m <= mse:
            w, mse = w_new, m
        trace.append(mse)
        if _converged(prev, mse, cfg.ao_tol):
            break
    return b, w, trace


def solve_fpa(cfg: SystemConfig, chan: ChannelRealization) -> SolveResult:
    layout = fpa_layout(cfg)
    fc = assemble_factors(layout, chan, cfg)
    b, w, trace = alternate_transceivers(fc, cfg)
    return SolveResult(TransceiverState(b, w), layout, trace[-1], trace)


def solve_proposed(cfg: SystemConfig, chan: ChannelRealization, *, move_antennas: bool = True,
                   warm_start: bool = True, grid: PositionGrid | None = None) -> SolveResult:
    """Joint precoder, combiner and position optimization.

    Starts from the fixed-position layout.  With ``warm_start`` the
    transceivers are first converged there (the fixed-position solution), so
    the result can never be worse than that baseline.  Each outer iteration
    then runs precoder update, combiner update and up to ``max_mm_iters``
    position steps; a position change survives only if the MSE with
    re-optimized combiners does not rise.
    """
    sigma2, P = cfg.noise_power, cfg.power_budget
    layout = fpa_layout(cfg)
    fc = assemble_factors(layout, chan, cfg)
    if grid is None:
        grid = PositionGrid.from_config(cfg)

    if warm_start:
        b, w, trace = alternate_transceivers(fc, cfg)
    else:
        b, w = _initial_state(fc, cfg)
        trace = [overall_mse(fc, b, w, sigma2)]
    mse = trace[-1]

    for _ in range(cfg.max_ao_iters):
        prev = mse
        b_new = update_precoders(fc, w, P)
        m = overall_mse(fc, b_new, w, sigma2)
        if m <= mse:
            b, mse = b_new, m
        w_new = update_combiners(fc, b, sigma2)
        m = overall_mse(fc, b, w_new, sigma2)
        if m <= mse:
            w, mse = w_new, m

        if move_antennas:
            cand_fc = fc
            obj = position_objective(fc, b, sigma2)
            for _ in range(cfg.max_mm_iters):
                step = mm_position_step(cand_fc, b, cfg, grid, obj)
                if not step.accepted:
                    break
                gain, obj = step.objective - obj, step.objective
                cand_fc = step.channel
                if gain <= cfg.mm_tol * abs(obj):
                    break
            if cand_fc is not fc:
                w_new = update_combiners(cand_fc, b, sigma2)
                m = overall_mse(cand_fc, b, w_new, sigma2)
                if m <= mse:
                    fc, layout, w, mse = cand_fc, cand_fc.layout, w_new, m

        trace.append(mse)
        if _converged(prev, mse, cfg.ao_tol):
            break
    return SolveResult(TransceiverState(b, w), layout, mse, trace)


def solve_eas(cfg: SystemConfig, chan: ChannelRealization) -> SolveResult:
    """Best of every M-subset of the ``2M`` candidate positions (fixed-layout AO each)."""
    cands = eas_candidates(cfg)
    best = None
    count = 0
    for subset in itertools.combinations(range(len(cands)), cfg.num_antennas):
        layout = AntennaLayout(cands[list(subset)])
        count += 1
        if not layout.is_feasible(cfg):
            continue
        fc = assemble_factors(layout, chan, cfg)
        b, w, trace = alternate_transceivers(fc, cfg)
        if best is None or trace[-1] < best.mse:
            best = SolveResult(TransceiverState(b, w), layout, trace[-1], trace)
    if best is None:
        raise ConfigError("min_spacing", "no candidate subset satisfies the spacing constraint")
    best.evaluated = count
    return best


_SOLVERS = {"proposed": solve_proposed, "fpa": solve_fpa, "eas": solve_eas}


# -- experiments --------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    """A sweep of one variable with paired Monte-Carlo trials.

    ``sweep_name`` is ``"snr_db"`` (``P/sigma^2`` in dB with ``sigma^2 = 1``)
    or ``"num_users"``.  ``record_wall_time=False`` writes 0 in the timing
    column so repeated runs produce identical files.
    """

    sweep_name: str = "snr_db"
    sweep_values: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    trials: int = 50
    schemes: tuple = SCHEMES
    out: str | None = None
    record_wall_time: bool = True

    def __post_init__(self):
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if self.sweep_name not in SWEEPS:
            raise ConfigError("sweep_name", f"must be one of {SWEEPS}")
        if not self.sweep_values:
            raise ConfigError("sweep_values", "must not be empty")
        if not all(math.isfinite(v) for v in self.sweep_values):
            raise ConfigError("sweep_values", "must be finite")
        if list(self.sweep_values) != sorted(self.sweep_values):
            raise ConfigError("sweep_values", "must be sorted ascending")
        if isinstance(self.trials, bool) or not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials", "must be a positive integer")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError("schemes", f"unknown scheme(s) {bad}; choose from {SCHEMES}")

    def config_for(self, cfg: SystemConfig, value) -> SystemConfig:
        if self.sweep_name == "snr_db":
            return cfg.replace(power_budget=10.0 ** (value / 10.0), noise_power=1.0)
        if float(value) != int(value):
            raise ConfigError("sweep_values", "num_users values must be integers")
        return cfg.replace(num_users=int(value))


def load_experiment_spec(source) -> ExperimentSpec:
    if isinstance(source, Mapping):
        doc = dict(source)
    else:
        with open(source, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
    version = doc.pop("schema_version", 1)
    if version != 1:
        raise ConfigError("schema_version", f"unsupported version {version!r}")
    known = {"sweep_name", "sweep_values", "trials", "schemes", "out", "record_wall_time"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    return ExperimentSpec(**doc)


@dataclass(frozen=True)
class TrialResult:
    scheme: str
    sweep_name: str
    sweep_value: float
    trial: int
    seed: int
    mse: float
    iterations: int
    wall_time_s: float
    extra: dict = field(default_factory=dict, compare=False)


def trial_seed(base_seed: int, sweep_index: int, trial: int) -> int:
    """Independent 64-bit seed for one (sweep point, trial) cell."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(sweep_index, trial))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_trial(cfg: SystemConfig, seed: int, schemes: Sequence[str] = SCHEMES,
              sweep_name: str = "", sweep_value: float = math.nan, trial: int = 0,
              record_wall_time: bool = True) -> list[TrialResult]:
    """Draw one channel from ``seed`` and run each scheme on it."""
    chan = sample_channel(cfg, np.random.default_rng(seed))
    out = []
    for scheme in schemes:
        t0 = time.perf_counter()
        res = _SOLVERS[scheme](cfg, chan)
        dt = time.perf_counter() - t0 if record_wall_time else 0.0
        out.append(TrialResult(scheme, sweep_name, float(sweep_value), trial, seed,
                               res.mse, res.iterations, dt,
                               {"layout": res.layout.positions.tolist(), "trace": res.trace}))
    return out


def _run_cell(args):
    cfg, seed, schemes, name, value, trial, timing = args
    return run_trial(cfg, seed, schemes, name, value, trial, timing)


def run_experiment(spec: ExperimentSpec, cfg: SystemConfig, threads: int = 1,
                   progress: bool = False) -> list[TrialResult]:
    """Run every sweep value x trial; writes ``spec.out`` when set.

    Within a trial all schemes share the channel.  Results come back sorted by
    (sweep value, trial, scheme order) whatever the worker count.
    """
    jobs = []
    for i, value in enumerate(spec.sweep_values):
        point_cfg = spec.config_for(cfg, value)
        for t in range(spec.trials):
            jobs.append((point_cfg, trial_seed(cfg.rng_seed, i, t), spec.schemes,
                         spec.sweep_name, float(value), t, spec.record_wall_time))
    results: list[TrialResult] = []
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for rows in pool.map(_run_cell, jobs, chunksize=1):
                results.extend(rows)
    else:
        for n, job in enumerate(jobs):
            results.extend(_run_cell(job))
            if progress:
                log.info("finished %d/%d trials", n + 1, len(jobs))
    order = {s: i for i, s in enumerate(spec.schemes)}
    results.sort(key=lambda r: (r.sweep_value, r.trial, order[r.scheme]))
    if spec.out:
        write_csv(results, spec.out, spec.schemes, cfg.rng_seed)
    return results


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def mean_rows(results: Iterable[TrialResult], schemes: Sequence[str], base_seed: int):
    groups: dict[tuple, list[TrialResult]] = {}
    for r in results:
        groups.setdefault((r.sweep_value, r.scheme), []).append(r)
    order = {s: i for i, s in enumerate(schemes)}
    rows = []
    for (value, scheme), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], order[kv[0][1]])):
        rows.append([scheme, rs[0].sweep_name, _fmt(value), "-1", str(base_seed),
                     _fmt(np.mean([r.mse for r in rs])),
                     _fmt(np.mean([r.iterations for r in rs])),
                     _fmt(np.mean([r.wall_time_s for r in rs]))])
    return rows


def to_csv_text(results: Sequence[TrialResult], schemes: Sequence[str], base_seed: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in results:
        writer.writerow([r.scheme, r.sweep_name, _fmt(r.sweep_value), r.trial, r.seed,
                         _fmt(r.mse), r.iterations, _fmt(r.wall_time_s)])
    writer.writerows(mean_rows(results, schemes, base_seed))
    return buf.getvalue()


def write_csv(results: Sequence[TrialResult], path, schemes: Sequence[str] = SCHEMES,
              base_seed: int = 0) -> None:
    text = to_csv_text(results, schemes, base_seed)
    directory = os.path.dirname(os.fspath(path))
    if directory and not os.path.isdir(directory):
        raise OSError(f"output directory does not exist: {directory}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def summarize(results: Sequence[TrialResult]) -> dict[tuple[float, str], dict[str, Any]]:
    """Mean and standard error of the MSE per (sweep value, scheme)."""
    groups: dict[tuple, list[float]] = {}
    for r in results:
        groups.setdefault((r.sweep_value, r.scheme), []).append(r.mse)
    out = {}
    for key, vals in groups.items():
        v = np.asarray(vals)
        sem = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else math.nan
        out[key] = {"mean": float(v.mean()), "sem": sem, "n": len(v)}
    return out
