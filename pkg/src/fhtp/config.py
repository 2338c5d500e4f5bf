"""Flat ``key = value`` run configuration for the command-line drivers."""
from __future__ import annotations

import configparser
import itertools
import math
from dataclasses import asdict, dataclass, field, fields

from .geometry import CONVENTIONS
from .models import ModelFamily, get_family

TEST_SETS = {
    "captions": (-1.0, -0.5, 0.0, 0.5, 1.0),
    "equation": (-1.0, -0.5, 0.5, 1.0),
    "origin": (0.0,),
}


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclass
class RunConfig:
    model: str = "linear_drift"
    convention: str = "paper-compat"
    h: list[float] = field(default_factory=lambda: [2.0**-3, 2.0**-4, 2.0**-5])
    q: list[int] = field(default_factory=list)
    test_set: str = "captions"
    rho_points: list[tuple[float, ...]] = field(default_factory=list)
    y: list[float] = field(default_factory=list)
    ode_tol: float = 1e-10
    spectral_tol: float = 1e-10
    cg_tol: float = 1e-11
    mc_paths: int = 200_000
    mc_dt: float = 1e-4
    mc_bridge: bool = True
    seed: int = 0
    threads: int = 1
    out: str = "fhtp-out"
    sanity_constant_drift: bool = False
    ranges: dict[str, tuple[float, float]] = field(default_factory=dict)

    def family(self) -> ModelFamily:
        m = get_family(self.model)
        return m.with_ranges(self.ranges) if self.ranges else m

    def test_points(self) -> list[tuple[float, ...]]:
        """Parameter points in canonical (lexicographic) order."""
        if self.rho_points:
            return sorted(self.rho_points)
        N = self.family().N
        return sorted(itertools.product(TEST_SETS[self.test_set], repeat=N))

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "ranges":
                continue
            val = getattr(self, f.name)
            lines.append(f"{f.name} = {_format_value(f.name, val)}")
        for name, (lo, hi) in sorted(self.ranges.items()):
            lines.append(f"range_{name} = {lo!r}, {hi!r}")
        return "\n".join(lines) + "\n"


def _format_value(name, val) -> str:
    if name == "rho_points":
        return "; ".join(", ".join(repr(float(r)) for r in p) for p in val)
    if isinstance(val, list):
        return ", ".join(repr(v) for v in val)
    if isinstance(val, bool):
        return "true" if val else "false"
    return str(val)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _mesh_width(text: str) -> float:
    text = text.strip()
    if text.startswith("2^"):
        return 2.0 ** float(text[2:])
    return float(text)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_PARSERS = {
    "model": str.strip,
    "convention": str.strip,
    "h": lambda s: [_mesh_width(v) for v in s.split(",") if v.strip()],
    "q": lambda s: [int(v) for v in s.split(",") if v.strip()],
    "test_set": str.strip,
    "rho_points": lambda s: [tuple(_floats(p)) for p in s.split(";") if p.strip()],
    "y": _floats,
    "ode_tol": float,
    "spectral_tol": float,
    "cg_tol": float,
    "mc_paths": int,
    "mc_dt": float,
    "mc_bridge": _bool,
    "seed": int,
    "threads": int,
    "out": str.strip,
    "sanity_constant_drift": _bool,
}


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment and unknown keys are errors."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    if cp.sections() != ["run"]:
        raise ConfigError("sections are not supported; use flat key = value lines")
    cfg = RunConfig()
    for key, raw in cp["run"].items():
        if key.startswith("range_"):
            try:
                lo, hi = _floats(raw)
            except ValueError:
                raise ConfigError(f"{key}: expected 'lo, hi'") from None
            cfg.ranges[key[len("range_"):]] = (lo, hi)
            continue
        if key not in _PARSERS:
            raise ConfigError(f"unknown configuration key {key!r}")
        try:
            setattr(cfg, key, _PARSERS[key](raw))
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    try:
        m = cfg.family()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if m.name == "collapsing":
        box = dict(zip(m.box.names, zip(m.box.lo, m.box.hi)))
        if not box["tau"][1] < box["T0"][0]:
            raise ConfigError("collapsing ranges must keep tau below T0 (boundaries would meet)")
    if cfg.convention not in CONVENTIONS:
        raise ConfigError(f"convention must be one of {CONVENTIONS}")
    if cfg.test_set not in TEST_SETS:
        raise ConfigError(f"test_set must be one of {sorted(TEST_SETS)}")
    for h in cfg.h:
        k = -math.log2(h) if h > 0 else float("nan")
        if not (k == round(k) and k >= 1):
            raise ConfigError(f"h={h!r} is not of the form 2^-k with k >= 1")
    for q in cfg.q:
        if q < m.N:
            raise ConfigError(f"q={q} must be >= N={m.N} for model {m.name}")
    for p in cfg.rho_points:
        if len(p) != m.N or any(abs(r) > 1 for r in p):
            raise ConfigError(f"rho point {p} is not in [-1, 1]^{m.N}")
    if cfg.mc_paths < 1 or not cfg.mc_dt > 0:
        raise ConfigError("mc_paths must be >= 1 and mc_dt > 0")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    for tol in (cfg.ode_tol, cfg.spectral_tol, cfg.cg_tol):
        if not tol > 0:
            raise ConfigError("tolerances must be positive")


def as_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)
