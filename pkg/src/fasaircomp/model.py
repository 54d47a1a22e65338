"""Scenario configuration and the shared domain types.

Every array-valued type here is treated as immutable once built: the
constructors copy their inputs and clear the numpy ``writeable`` flag, so
instances can be handed to concurrent trial workers without defensive copies.

Index conventions
-----------------
Users ``k``, paths ``l``, antennas ``m`` and subcarriers ``n`` are stored
0-based.  The phase factors of the OFDM model use the 1-based subcarrier
number, i.e. storage index ``i`` stands for subcarrier ``n = i + 1``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from os import PathLike
from typing import Any, Mapping

import numpy as np
import yaml

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "SystemConfig",
    "ChannelRealization",
    "AntennaLayout",
    "TransceiverState",
    "FrequencyChannel",
    "default_config",
    "load_config",
    "config_from_mapping",
    "sample_channel",
    "greedy_packing",
]

SCHEMA_VERSION = 1

WAVELENGTH = 0.125  # 2.4 GHz carrier


class ConfigError(ValueError):
    """Invalid configuration document; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _frozen(a, dtype=None) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SystemConfig:
    """All scenario constants of one simulation.

    ``region`` is ``(x_lo, x_hi, y_lo, y_hi)`` in meters.  ``power_budget`` is
    the per-user, per-subcarrier power limit and ``noise_power`` the noise
    variance per subcarrier, both linear.
    """

    num_users: int = 5
    num_subcarriers: int = 64
    num_antennas: int = 4
    num_paths: int = 4
    wavelength: float = WAVELENGTH
    min_spacing: float = WAVELENGTH / 2
    region: tuple[float, float, float, float] = (
        -1.5 * WAVELENGTH, 1.5 * WAVELENGTH, -1.5 * WAVELENGTH, 1.5 * WAVELENGTH,
    )
    power_budget: float = 10.0
    noise_power: float = 1.0
    grid_step: float = WAVELENGTH / 20
    grid_refine_levels: int = 3
    max_ao_iters: int = 1000
    max_mm_iters: int = 30
    ao_tol: float = 1e-5
    mm_tol: float = 1e-6
    rng_seed: int = 0
    max_delay: int = 15

    def __post_init__(self):
        object.__setattr__(self, "region", tuple(float(v) for v in self.region))
        _validate(self)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.power_budget / self.noise_power)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["region"] = list(self.region)
        return {"schema_version": SCHEMA_VERSION, **d}


_INT_KEYS = (
    "num_users", "num_subcarriers", "num_antennas", "num_paths",
    "max_ao_iters", "max_mm_iters",
)
_NONNEG_INT_KEYS = ("grid_refine_levels",)
_POSITIVE_KEYS = ("wavelength", "power_budget", "noise_power", "grid_step")


def _validate(cfg: SystemConfig) -> None:
    for key in _INT_KEYS:
        v = getattr(cfg, key)
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
            raise ConfigError(key, f"must be a positive integer, got {v!r}")
    for key in _NONNEG_INT_KEYS:
        v = getattr(cfg, key)
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 0:
            raise ConfigError(key, f"must be a nonnegative integer, got {v!r}")
    for key in _POSITIVE_KEYS:
        v = getattr(cfg, key)
        if not (math.isfinite(v) and v > 0):
            raise ConfigError(key, f"must be finite and > 0, got {v!r}")
    for key in ("min_spacing", "ao_tol", "mm_tol"):
        v = getattr(cfg, key)
        if not (math.isfinite(v) and v >= 0):
            raise ConfigError(key, f"must be finite and >= 0, got {v!r}")
    if isinstance(cfg.max_delay, bool) or not isinstance(cfg.max_delay, (int, np.integer)):
        raise ConfigError("max_delay", "must be an integer")
    if not 0 <= cfg.max_delay < cfg.num_subcarriers:
        raise ConfigError(
            "max_delay", f"must satisfy 0 <= max_delay < num_subcarriers, got {cfg.max_delay}"
        )
    if isinstance(cfg.rng_seed, bool) or not isinstance(cfg.rng_seed, (int, np.integer)):
        raise ConfigError("rng_seed", "must be an integer")
    if not 0 <= cfg.rng_seed < 2**64:
        raise ConfigError("rng_seed", "must fit in an unsigned 64-bit integer")
    if len(cfg.region) != 4 or not all(math.isfinite(v) for v in cfg.region):
        raise ConfigError("region", "must be four finite numbers [x_lo, x_hi, y_lo, y_hi]")
    x_lo, x_hi, y_lo, y_hi = cfg.region
    if not (x_lo <= x_hi and y_lo <= y_hi):
        raise ConfigError("region", "requires x_lo <= x_hi and y_lo <= y_hi")
    if len(greedy_packing(cfg.region, cfg.min_spacing, cfg.grid_step, cfg.num_antennas)) < cfg.num_antennas:
        raise ConfigError(
            "min_spacing",
            f"region cannot hold {cfg.num_antennas} antennas at spacing {cfg.min_spacing}",
        )


def lattice_axis(lo: float, hi: float, step: float) -> np.ndarray:
    """Points ``lo + i*step`` inside ``[lo, hi]``.

    Computed as ``lo + i*step`` (not by accumulation) so that halving the step
    reproduces every coarse point bit-for-bit.
    """
    count = int(math.floor((hi - lo) / step * (1 + 1e-12) + 1e-9)) + 1
    pts = lo + np.arange(count) * step
    return pts[pts <= hi + 1e-12 * max(1.0, abs(hi))]


def greedy_packing(region, spacing: float, step: float, count: int) -> np.ndarray:
    """Greedily place up to ``count`` lattice points at pairwise distance >= ``spacing``.

    Scans the lattice x-major; returns the placed points (possibly fewer than
    ``count`` when the region is too small).
    """
    x_lo, x_hi, y_lo, y_hi = region
    # a lattice coarser than the spacing keeps the scan short for tiny steps
    step = max(step, spacing / 4) if spacing > 0 else step
    xs = lattice_axis(x_lo, x_hi, step)
    ys = lattice_axis(y_lo, y_hi, step)
    placed: list[tuple[float, float]] = []
    for x in xs:
        for y in ys:
            if all(math.hypot(x - px, y - py) >= spacing for px, py in placed):
                placed.append((float(x), float(y)))
                if len(placed) == count:
                    return np.array(placed)
    return np.array(placed).reshape(-1, 2)


def default_config(**overrides) -> SystemConfig:
    return config_from_mapping(overrides)


def config_from_mapping(doc: Mapping[str, Any]) -> SystemConfig:
    """Build a validated config from a parsed key-value mapping.

    Keys left out take the defaults above; ``min_spacing``, ``region`` and
    ``grid_step`` default relative to the given ``wavelength``.
    """
    doc = dict(doc)
    version = doc.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r}")
    known = {f.name for f in dataclasses.fields(SystemConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")

    lam = doc.get("wavelength", WAVELENGTH)
    if isinstance(lam, (int, float)) and not isinstance(lam, bool) and lam > 0:
        doc.setdefault("min_spacing", lam / 2)
        doc.setdefault("region", (-1.5 * lam, 1.5 * lam, -1.5 * lam, 1.5 * lam))
        doc.setdefault("grid_step", lam / 20)

    float_keys = {
        "wavelength", "min_spacing", "power_budget", "noise_power",
        "grid_step", "ao_tol", "mm_tol",
    }
    for key, v in doc.items():
        if key in float_keys:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(key, f"must be a number, got {v!r}")
            doc[key] = float(v)
        elif key == "region":
            if not isinstance(v, (list, tuple)) or len(v) != 4:
                raise ConfigError(key, "must be a list [x_lo, x_hi, y_lo, y_hi]")
            try:
                doc[key] = tuple(float(x) for x in v)
            except (TypeError, ValueError):
                raise ConfigError(key, "entries must be numbers") from None
    return SystemConfig(**doc)


def load_config(source: str | PathLike | Mapping[str, Any]) -> SystemConfig:
    """Load a config from a YAML/JSON file path or an already-parsed mapping.

    ``rng_seed`` is the only mandatory key.
    """
    if isinstance(source, Mapping):
        doc = source
    else:
        with open(source, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
        if doc is None:
            doc = {}
        if not isinstance(doc, Mapping):
            raise ConfigError("<document>", "top level must be a mapping")
    if "rng_seed" not in doc:
        raise ConfigError("rng_seed", "missing required key")
    return config_from_mapping(doc)


@dataclass(frozen=True)
class ChannelRealization:
    """Per-user multipath parameters, each a ``(K, L)`` array."""

    gains: np.ndarray
    delays: np.ndarray
    elevations: np.ndarray
    azimuths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gains", _frozen(self.gains, complex))
        object.__setattr__(self, "delays", _frozen(self.delays, np.int64))
        object.__setattr__(self, "elevations", _frozen(self.elevations, float))
        object.__setattr__(self, "azimuths", _frozen(self.azimuths, float))
        shape = self.gains.shape
        if len(shape) != 2 or any(
            a.shape != shape for a in (self.delays, self.elevations, self.azimuths)
        ):
            raise ValueError("gains, delays, elevations and azimuths must share one (K, L) shape")
        if np.any(self.delays < 0):
            raise ValueError("delays must be nonnegative")

    @property
    def num_users(self) -> int:
        return self.gains.shape[0]

    @property
    def num_paths(self) -> int:
        return self.gains.shape[1]

    def direction_terms(self) -> tuple[np.ndarray, np.ndarray]:
        """``(sin(theta)cos(phi), cos(theta))`` flattened user-major to length K*L."""
        sx = np.sin(self.elevations) * np.cos(self.azimuths)
        sy = np.cos(self.elevations)
        return sx.ravel(), sy.ravel()


def sample_channel(cfg: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw one channel realization.

    Angles are uniform on ``[0, pi)``, gains ``CN(0, 1/L)`` and delays uniform
    integers on ``{0, ..., max_delay}``.  The draw order is fixed so a seeded
    generator always yields the same realization.
    """
    K, L = cfg.num_users, cfg.num_paths
    below_pi = np.nextafter(np.pi, 0.0)
    theta = np.minimum(rng.random((K, L)) * np.pi, below_pi)
    phi = np.minimum(rng.random((K, L)) * np.pi, below_pi)
    gains = (rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L))) * math.sqrt(0.5 / L)
    delays = rng.integers(0, cfg.max_delay + 1, size=(K, L))
    return ChannelRealization(gains=gains, delays=delays, elevations=theta, azimuths=phi)


@dataclass(frozen=True)
class AntennaLayout:
    """Antenna positions as an ``(M, 2)`` array of ``(x, y)`` meters."""

    positions: np.ndarray

    def __post_init__(self):
        pos = _frozen(self.positions, float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError(f"positions must have shape (M, 2), got {pos.shape}")
        object.__setattr__(self, "positions", pos)

    @property
    def num_antennas(self) -> int:
        return self.positions.shape[0]

    @property
    def stacked(self) -> np.ndarray:
        """The stacked coordinate vector ``[x_1, y_1, ..., x_M, y_M]``."""
        return self.positions.ravel()

    def in_region(self, region) -> bool:
        x_lo, x_hi, y_lo, y_hi = region
        x, y = self.positions[:, 0], self.positions[:, 1]
        return bool(np.all((x >= x_lo) & (x <= x_hi) & (y >= y_lo) & (y <= y_hi)))

    def min_distance(self) -> float:
        if self.num_antennas < 2:
            return math.inf
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        return float(dist[np.triu_indices(self.num_antennas, 1)].min())

    def spacing_ok(self, spacing: float, rtol: float = 1e-12) -> bool:
        return self.min_distance() >= spacing * (1 - rtol)

    def is_feasible(self, cfg: SystemConfig) -> bool:
        return self.in_region(cfg.region) and self.spacing_ok(cfg.min_spacing)


@dataclass(frozen=True)
class TransceiverState:
    """Precoders ``b`` with shape ``(K, N)`` and combiners ``w`` with shape ``(M, N)``."""

    precoders: np.ndarray
    combiners: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "precoders", _frozen(self.precoders, complex))
        object.__setattr__(self, "combiners", _frozen(self.combiners, complex))

    def max_power(self) -> float:
        return float(np.max(np.abs(self.precoders) ** 2))


@dataclass(frozen=True)
class FrequencyChannel:
    """Per-subcarrier channels and their factorization ``H_n = F G E_n``.

    Attributes
    ----------
    H : ndarray, shape (N, M, K)
        ``H[i]`` is the channel matrix of subcarrier ``n = i + 1``.
    F : ndarray, shape (M, K*L)
        Conjugated field responses; column ``k*L + l`` belongs to path ``l``
        of user ``k``.
    gains : ndarray, shape (K*L,)
        Diagonal of ``G``.
    delay_phases : ndarray, shape (N, K, L)
        ``delay_phases[i, k]`` is ``e_{k,n}``, the nonzero block of column
        ``k`` of ``E_n``.
    """

    H: np.ndarray
    F: np.ndarray
    gains: np.ndarray
    delay_phases: np.ndarray
    layout: AntennaLayout = field(repr=False)
    channel: ChannelRealization = field(repr=False)
    wavelength: float = WAVELENGTH

    def __post_init__(self):
        for name in ("H", "F", "gains", "delay_phases"):
            object.__setattr__(self, name, _frozen(getattr(self, name), complex))

    @property
    def num_subcarriers(self) -> int:
        return self.H.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.H.shape[1]

    @property
    def num_users(self) -> int:
        return self.H.shape[2]

    @property
    def num_paths(self) -> int:
        return self.delay_phases.shape[2]

    @property
    def G(self) -> np.ndarray:
        return np.diag(self.gains)

    def E(self, n: int) -> np.ndarray:
        """Dense ``(K*L, K)`` block-diagonal ``E_n`` for 1-based subcarrier ``n``.

        Only for inspection and tests; the solvers never materialize it.
        """
        K, L = self.num_users, self.num_paths
        out = np.zeros((K * L, K), dtype=complex)
        e = self.delay_phases[n - 1]
        for k in range(K):
            out[k * L:(k + 1) * L, k] = e[k]
        return out

    @property
    def eta(self) -> np.ndarray:
        """``vec(F^H)``: the per-antenna blocks ``eta(r_m)`` stacked."""
        return self.F.conj().T.ravel(order="F")
