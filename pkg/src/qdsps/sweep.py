"""Pulse-length sweeps of photon statistics and their serialization."""
from __future__ import annotations

import io
import json
import math
import re
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import analytics
from .counting import correlator_moments, g2_from_counts, mean_and_factorial_moment, photocount_distribution
from .errors import NumericalGuardError
from .models import GAUSSIAN, SQUARE, THREE_LEVEL, TWO_LEVEL, PulseEnvelope, make_model
from .montecarlo import mc_trajectories
from .propagate import IntegrationOptions

FORMAT_VERSION = 1
DUAL_PATH_RTOL = 1e-3
MC_COLUMNS_N = 3


def default_grid() -> tuple:
    return tuple(float(x) for x in np.logspace(-3, 1, 24))


@dataclass(frozen=True)
class SweepConfig:
    system: str = TWO_LEVEL
    channel: str = "default"
    shape: str = SQUARE
    area: float = math.pi
    grid: tuple = field(default_factory=default_grid)
    nmax: int = 6
    dt: float | None = None
    horizon: float = 15.0
    steps_per_pulse: int = 200
    mc: bool = False
    ntraj: int = 100_000
    seed: int = 0
    out: str | None = None
    format: str = "csv"
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(x) for x in self.grid))
        self.validate()

    def validate(self):
        if self.system not in (TWO_LEVEL, THREE_LEVEL):
            raise ValueError(f"system must be '2ls' or '3ls', got {self.system!r}")
        allowed = {"default"} if self.system == TWO_LEVEL else {"default", "X", "2X"}
        if self.channel not in allowed:
            raise ValueError(f"channel {self.channel!r} not valid for {self.system}; use {sorted(allowed)}")
        if self.shape not in (SQUARE, GAUSSIAN):
            raise ValueError(f"shape must be 'square' or 'gaussian', got {self.shape!r}")
        if not self.area > 0:
            raise ValueError("area must be positive")
        if not self.grid:
            raise ValueError("grid is empty")
        if any(not (x > 0 and math.isfinite(x)) for x in self.grid):
            raise ValueError("grid values must be finite and > 0")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("grid must be strictly increasing")
        if self.nmax < 2:
            raise ValueError("nmax must be >= 2")
        if self.ntraj < 1:
            raise ValueError("ntraj must be >= 1")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be 'csv' or 'json'")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        self.options()  # raises on inconsistent integration settings

    def options(self) -> IntegrationOptions:
        return IntegrationOptions(dt=self.dt, horizon_factor=self.horizon,
                                  steps_per_pulse=self.steps_per_pulse)

    def resolved(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d


# --- config parsing ----------------------------------------------------------

_PI_RE = re.compile(r"^\s*([-+0-9.eE]*)\s*\*?\s*pi\s*$")


def parse_area(text: str) -> float:
    """Accept plain numbers and multiples of pi such as ``pi``, ``2pi``, ``0.5*pi``."""
    m = _PI_RE.match(str(text))
    if m:
        coeff = m.group(1)
        return (float(coeff) if coeff not in ("", "+", "-") else float(coeff + "1")) * math.pi
    return float(text)


def parse_grid(text: str) -> tuple:
    """``min:max:npoints`` (log-spaced) or an explicit comma-separated list."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("grid must look like min:max:npoints")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        if lo <= 0 or hi <= 0:
            raise ValueError("grid values must be finite and > 0")
        if n < 1:
            raise ValueError("grid needs at least one point")
        if n == 1:
            return (lo,)
        return tuple(float(x) for x in np.logspace(math.log10(lo), math.log10(hi), n))
    return tuple(float(x) for x in text.split(",") if x.strip())


def _parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_optional_float(text):
    return None if str(text).strip().lower() in ("", "none", "auto") else float(text)


PARSERS = {
    "system": str,
    "channel": str,
    "shape": str,
    "area": parse_area,
    "grid": parse_grid,
    "nmax": int,
    "dt": _parse_optional_float,
    "horizon": float,
    "steps_per_pulse": int,
    "mc": _parse_bool,
    "ntraj": lambda s: int(float(s)),
    "seed": int,
    "out": str,
    "format": str,
    "jobs": int,
}
assert set(PARSERS) == {f.name for f in fields(SweepConfig)}


class ConfigError(ValueError):
    pass


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in PARSERS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = PARSERS[key](value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
    return values


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> SweepConfig:
    values = dict(file_values or {})
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return SweepConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# --- sweep -------------------------------------------------------------------


@dataclass(frozen=True)
class SweepResult:
    config: SweepConfig
    columns: tuple
    rows: tuple

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)


def columns_for(cfg: SweepConfig) -> tuple:
    cols = ["gamma_T", "mean_n", "g2_moments", "g2_correlator"]
    cols += [f"P{n}" for n in range(cfg.nmax + 1)]
    cols += ["residual", "analytic_P2", "analytic_g2"]
    if cfg.mc:
        cols += [f"mc_P{n}" for n in range(MC_COLUMNS_N)]
        cols += [f"mc_P{n}_se" for n in range(MC_COLUMNS_N)]
    return tuple(cols)


def _analytic(cfg: SweepConfig, m, channel: str, gamma_t: float) -> tuple:
    if cfg.shape != SQUARE or not math.isclose(cfg.area, math.pi):
        return math.nan, math.nan
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if cfg.system == TWO_LEVEL:
            g = m.rates["default"]
            return analytics.p2_short_2ls(g, gamma_t), analytics.g2_short_2ls(g, gamma_t)
        if channel == "2X":
            gx, g2x = m.rates["X"], m.rates["2X"]
            return analytics.p2_short_3ls(gx, g2x, gamma_t), analytics.g2_short_3ls(gx, g2x, gamma_t)
    return math.nan, math.nan


def _point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def sweep_point(cfg: SweepConfig, index: int) -> list:
    """Evaluate one grid point; raises ``NumericalGuardError`` naming the point."""
    gamma_t = cfg.grid[index]
    m = make_model(cfg.system)
    channel = m.resolve_channel(cfg.channel)
    p = PulseEnvelope(gamma_t, cfg.area, cfg.shape)
    opts = cfg.options()
    where = f"grid point {index} (gamma_T={gamma_t:g})"
    try:
        d = photocount_distribution(m, p, channel, cfg.nmax, opts)
        mean, _ = mean_and_factorial_moment(d)
        g2_counts = g2_from_counts(d)
        g2_corr = correlator_moments(m, p, channel, opts).g2
    except (NumericalGuardError, ValueError) as exc:
        raise NumericalGuardError(f"{where}: {exc}") from exc
    if abs(math.fsum(d.probs) + d.residual - 1.0) > 1e-12:
        raise NumericalGuardError(f"{where}: probabilities do not sum to one")
    if abs(g2_corr - g2_counts) > DUAL_PATH_RTOL * abs(g2_counts):
        raise NumericalGuardError(
            f"{where}: g2 routes disagree (moments {g2_counts:.6g}, correlator {g2_corr:.6g})"
        )
    row = [gamma_t, mean, g2_counts, g2_corr, *d.probs.tolist(), d.residual,
           *_analytic(cfg, m, channel, gamma_t)]
    if cfg.mc:
        mc = mc_trajectories(m, p, channel, cfg.ntraj, _point_seed(cfg.seed, index), opts, cfg.nmax)
        row += mc.distribution.probs[:MC_COLUMNS_N].tolist()
        row += mc.distribution.stderr[:MC_COLUMNS_N].tolist()
    return [float(x) for x in row]


def run_sweep(cfg: SweepConfig) -> SweepResult:
    n = len(cfg.grid)
    if cfg.jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, n)) as pool:
            rows = list(pool.map(sweep_point, [cfg] * n, range(n)))
    else:
        rows = [sweep_point(cfg, i) for i in range(n)]
    return SweepResult(cfg, columns_for(cfg), tuple(tuple(r) for r in rows))


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else format(x, ".17g")


def to_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    buf.write(f"# qdsps sweep format-version {FORMAT_VERSION}\n")
    for key, value in sorted(result.config.resolved().items()):
        if key == "grid":
            value = ",".join(_fmt(x) for x in value)
        buf.write(f"# {key} = {value}\n")
    buf.write(",".join(result.columns) + "\n")
    for row in result.rows:
        buf.write(",".join(_fmt(x) for x in row) + "\n")
    return buf.getvalue()


def to_json(result: SweepResult) -> str:
    payload = {
        "format_version": FORMAT_VERSION,
        "config": result.config.resolved(),
        "columns": list(result.columns),
        "rows": [[None if math.isnan(x) else x for x in r] for r in result.rows],
    }
    return json.dumps(payload, indent=1, sort_keys=True) + "\n"


def read_csv(text: str) -> tuple[dict, tuple, np.ndarray]:
    """Inverse of ``to_csv``: ``(config strings, columns, data array)``."""
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            if "=" in line:
                k, v = line[1:].split("=", 1)
                meta[k.strip()] = v.strip()
        elif line.strip():
            body.append(line)
    columns = tuple(body[0].split(","))
    data = np.array([[float(x) for x in r.split(",")] for r in body[1:]], dtype=float)
    return meta, columns, data
