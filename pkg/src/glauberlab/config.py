"""Plain-text ``key = value`` run configuration.

One assignment per line; ``#`` starts a comment. Lists are comma separated.
``cutoff = auto`` and ``snapshots = auto`` select the defaults. The table of
keys and defaults is :data:`DEFAULTS` (and the README).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields

from .bounds import ScaleParams
from .hierarchy import CLOSURES, MAX_ORDER
from .model import POTENTIAL_KINDS, Potential, TorusGrid

SUBCOMMANDS = ("bounds", "vlasov", "hierarchy", "simulate", "scaling-sweep", "accept")
HIERARCHY_OPERATORS = ("L_delta", "L_V", "L_eps_ren")
SOLVER_CHOICES = {
    "vlasov": ("auto", "integrating-factor", "picard"),
    "hierarchy": ("auto", "rk4", "series"),
}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


@dataclass(frozen=True)
class RunConfig:
    subcommand: str = "bounds"
    potential: str = "tophat"
    amplitude: float = 1.0
    range: float = 1.0
    cutoff: float | None = None
    d: int = 1
    L: float = 8.0
    n: int = 32
    kappa: float = 0.3
    eps: float = 1.0
    eps_list: tuple[float, ...] = (1.0, 0.5, 0.25)
    alpha0: float = 0.0
    alphas: tuple[float, ...] = (-1.0,)
    dt: float = 0.01
    t_end: float = 1.0
    solver: str = "auto"
    picard_iters: int = 12
    operator: str = "L_delta"
    n_max: int = 2
    m_xi: int = 2
    closure: str = "zero"
    n_terms: int = 14
    rho0: float = 0.2
    rho0_modulation: float = 0.0
    replicas: int = 100
    seed: int = 12345
    snapshots: tuple[float, ...] | None = None
    pair_bins: int = 64
    workers: int = 1
    out: str = "out"
    quiet: bool = False

    def potential_obj(self) -> Potential:
        return Potential(self.potential, self.amplitude, self.range, self.cutoff, self.d)

    def grid(self) -> TorusGrid:
        return TorusGrid(self.L, self.n, self.d)

    def scale_params(self, alpha: float | None = None) -> ScaleParams:
        return ScaleParams(self.kappa, self.alpha0, self.alphas[0] if alpha is None else alpha)

    def snapshot_times(self) -> tuple[float, ...]:
        return self.snapshots if self.snapshots is not None else (self.t_end,)

    def resolved_solver(self) -> str:
        if self.solver != "auto":
            return self.solver
        return {"vlasov": "integrating-factor", "hierarchy": "rk4"}.get(self.subcommand, "auto")


DEFAULTS = RunConfig()
KEYS = tuple(f.name for f in fields(RunConfig))
_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _to_float(key, text):
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {text!r}") from None
    if not math.isfinite(v):
        raise ConfigError(key, "must be finite")
    return v


def _to_int(key, text):
    try:
        return int(text, 0)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {text!r}") from None


def _convert(key: str, text: str):
    kind = _FIELD_TYPES[key]
    text = text.strip()
    if kind == "float":
        return _to_float(key, text)
    if kind == "int":
        return _to_int(key, text)
    if kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(key, f"expected true or false, got {text!r}")
    if kind == "str":
        if not text:
            raise ConfigError(key, "empty value")
        return text
    if kind == "float | None":
        return None if text.lower() in ("auto", "none", "") else _to_float(key, text)
    if kind.startswith("tuple[float, ...]"):
        if kind.endswith("None") and text.lower() in ("auto", "none"):
            return None
        parts = [p for p in text.split(",") if p.strip()]
        if not parts:
            raise ConfigError(key, "expected a comma-separated list of numbers")
        return tuple(_to_float(key, p) for p in parts)
    raise AssertionError(f"unhandled field type {kind}")


def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize(config: RunConfig) -> str:
    return "".join(f"{k} = {_format(getattr(config, k))}\n" for k in KEYS)


def apply_overrides(config: RunConfig, overrides: dict[str, str]) -> RunConfig:
    changes = {}
    for key, text in overrides.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(key, "unknown key")
        changes[key] = _convert(key, text)
    return dataclasses.replace(config, **changes)


def parse_config(text: str, base: RunConfig = DEFAULTS, validate_result: bool = True) -> RunConfig:
    """Parse a ``key = value`` document, apply it over ``base`` and validate."""
    overrides: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(key, "unknown key")
        overrides[key] = value
    config = apply_overrides(base, overrides)
    return validate(config) if validate_result else config


def _require(cond: bool, key: str, message: str):
    if not cond:
        raise ConfigError(key, message)


def validate(c: RunConfig) -> RunConfig:
    _require(c.subcommand in SUBCOMMANDS, "subcommand", f"must be one of {SUBCOMMANDS}")
    _require(c.potential in POTENTIAL_KINDS, "potential", f"must be one of {POTENTIAL_KINDS}")
    _require(c.amplitude >= 0, "amplitude", "must be >= 0")
    _require(c.range > 0, "range", "must be > 0")
    _require(c.cutoff is None or c.cutoff > 0, "cutoff", "must be > 0 or auto")
    _require(c.d >= 1, "d", "must be >= 1")
    _require(c.L > 0, "L", "must be > 0")
    _require(c.n >= 8 and not c.n & (c.n - 1), "n", "must be a power of two >= 8")
    if c.subcommand == "simulate":
        _require(c.kappa >= 0, "kappa", "must be >= 0")
    else:
        _require(c.kappa > 0, "kappa", "must be > 0")
    _require(c.eps > 0, "eps", "must be > 0")
    _require(all(e > 0 for e in c.eps_list), "eps_list", "entries must be > 0")
    _require(
        all(b < a for a, b in zip(c.eps_list, c.eps_list[1:])), "eps_list", "must be strictly decreasing"
    )
    _require(all(a < c.alpha0 for a in c.alphas), "alphas", "every alpha must be < alpha0")
    _require(c.dt > 0, "dt", "must be > 0")
    _require(c.t_end > 0, "t_end", "must be > 0")
    allowed = SOLVER_CHOICES.get(c.subcommand, ("auto",) + SOLVER_CHOICES["vlasov"][1:] + SOLVER_CHOICES["hierarchy"][1:])
    _require(c.solver in allowed, "solver", f"must be one of {allowed} for {c.subcommand}")
    _require(c.picard_iters >= 0, "picard_iters", "must be >= 0")
    _require(c.operator in HIERARCHY_OPERATORS, "operator", f"must be one of {HIERARCHY_OPERATORS}")
    _require(0 <= c.n_max <= MAX_ORDER, "n_max", f"must be in 0..{MAX_ORDER}")
    _require(c.m_xi >= 0, "m_xi", "must be >= 0")
    _require(c.closure in CLOSURES, "closure", f"must be one of {CLOSURES}")
    _require(c.n_terms >= 0, "n_terms", "must be >= 0")
    _require(c.rho0 >= 0, "rho0", "must be >= 0")
    _require(abs(c.rho0_modulation) <= 1, "rho0_modulation", "must lie in [-1, 1]")
    _require(c.replicas >= 1, "replicas", "must be >= 1")
    _require(c.seed >= 0, "seed", "must be >= 0")
    snaps = c.snapshot_times()
    _require(
        all(0 <= s <= c.t_end for s in snaps) and list(snaps) == sorted(snaps),
        "snapshots",
        "must be sorted and lie in [0, t_end]",
    )
    _require(c.pair_bins >= 1, "pair_bins", "must be >= 1")
    _require(c.workers >= 1, "workers", "must be >= 1")
    _require(bool(c.out), "out", "must be a path")
    try:
        c.potential_obj().check_fits(c.grid())
    except ValueError as exc:
        raise ConfigError("cutoff" if c.cutoff is not None else "range", str(exc)) from None
    return c
