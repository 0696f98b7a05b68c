"""Scalar constants, operator-norm bounds and time horizons.

Two orderings of the weight exponents occur. Quasi-observables evolve towards
larger weights (``alpha > alpha0``, direction ``"grow"``); correlation
functions evolve towards smaller ones (``alpha < alpha0``, direction
``"shrink"``). In both cases the horizon is

    gap / (1 + kappa * exp(upper + c * exp(-lower)))

with ``upper``/``lower`` the larger/smaller of the two exponents.

The exponents enter asymmetrically: the norm bound for ``L_hat`` uses the
target exponent ``alpha`` in both places, the shrinking bounds put ``alpha0``
in front and ``exp(-alpha)`` inside. Each formula is implemented as stated,
without unifying them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Potential, TorusGrid

DIRECTIONS = ("grow", "shrink")
OPERATOR_KINDS = ("L_hat", "L_delta", "L_eps_ren", "L_V")

C_PSI = 0.5


@dataclass(frozen=True)
class ScaleParams:
    kappa: float
    alpha0: float
    alpha: float
    direction: str | None = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.alpha == self.alpha0:
            raise ValueError("alpha and alpha0 must differ")
        inferred = "grow" if self.alpha > self.alpha0 else "shrink"
        if self.direction is None:
            object.__setattr__(self, "direction", inferred)
        elif self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        elif self.direction != inferred:
            raise ValueError(
                f"direction {self.direction!r} inconsistent with alpha={self.alpha}, alpha0={self.alpha0}"
            )

    @property
    def gap(self) -> float:
        return abs(self.alpha - self.alpha0)

    @property
    def upper(self) -> float:
        return max(self.alpha, self.alpha0)

    @property
    def lower(self) -> float:
        return min(self.alpha, self.alpha0)


def c_phi(phi: Potential, grid: TorusGrid) -> float:
    """Integral of ``1 - exp(-phi)``."""
    return float(grid.cell_volume * np.sum(phi.grid_kernel(grid, lambda v: -np.expm1(-v))))


def phi_mean(phi: Potential, grid: TorusGrid) -> float:
    """Integral of ``phi``."""
    return float(grid.cell_volume * np.sum(phi.grid_kernel(grid)))


def c_phi_eps(phi: Potential, grid: TorusGrid, eps: float) -> float:
    """Integral of ``(1 - exp(-eps * phi)) / eps``."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    vals = phi.grid_kernel(grid, lambda v: -np.expm1(-eps * v))
    return float(grid.cell_volume * np.sum(vals) / eps)


def time_horizon(p: ScaleParams, c: float) -> float:
    if c < 0:
        raise ValueError("c must be nonnegative")
    return _horizon(p.gap, p.kappa, p.upper + c * math.exp(-p.lower))


def _horizon(gap: float, kappa: float, arg: float) -> float:
    """``gap / (1 + kappa e^arg)`` without overflow for large ``arg``."""
    if arg > 0:
        w = math.exp(-arg)
        return gap * w / (w + kappa)
    return gap / (1.0 + kappa * math.exp(arg))


def t_star_upper(kappa: float, c: float) -> float:
    """Upper bound ``1 / (e^2 kappa c)`` on every horizon, uniform in the exponents."""
    if not (kappa > 0 and c > 0):
        raise ValueError("kappa and c must be positive")
    return 1.0 / (math.e**2 * kappa * c)


def vlasov_horizon(p: ScaleParams, phi_mean: float) -> float:
    if p.direction != "shrink":
        raise ValueError("the Vlasov horizon needs alpha < alpha0")
    return _horizon(p.alpha0 - p.alpha, p.kappa, p.alpha0 + phi_mean * math.exp(-p.alpha))


def op_norm_bound(
    kind: str,
    p: ScaleParams,
    c: float | None = None,
    eps: float | None = None,
    *,
    phi: Potential | None = None,
    grid: TorusGrid | None = None,
) -> float:
    """Bound on the norm of a one-step operator between neighbouring weighted spaces.

    ``c`` is ``c_phi`` for ``L_hat``/``L_delta`` and ``<phi>`` for ``L_V``. For
    ``L_eps_ren`` the constant is ``c_phi_eps(phi, grid, eps)``, so ``eps``,
    ``phi`` and ``grid`` are required and ``c`` is ignored.
    """
    if kind not in OPERATOR_KINDS:
        raise ValueError(f"unknown operator kind {kind!r}")
    if kind == "L_hat":
        if p.direction != "grow":
            raise ValueError("L_hat acts from alpha0 to a larger alpha")
        arg = p.alpha + _need(c) * math.exp(-p.alpha)
    else:
        if p.direction != "shrink":
            raise ValueError(f"{kind} acts from alpha0 to a smaller alpha")
        if kind == "L_eps_ren":
            if eps is None:
                raise ValueError("L_eps_ren needs eps")
            if phi is None or grid is None:
                raise ValueError("L_eps_ren needs phi and grid to evaluate c_phi_eps")
            c = c_phi_eps(phi, grid, eps)
        arg = p.alpha0 + _need(c) * math.exp(-p.alpha)
    return (1.0 + p.kappa * math.exp(arg)) / (p.gap * math.e)


def _need(c):
    if c is None:
        raise ValueError("this operator kind needs the constant c")
    if c < 0:
        raise ValueError("c must be nonnegative")
    return c


def alpha_t_window(p: ScaleParams, c: float, t: float, delta: float) -> float:
    """Largest admissible intermediate exponent at time ``t``."""
    if p.direction != "shrink":
        raise ValueError("alpha_t window needs alpha < alpha0")
    horizon = time_horizon(p, c)
    s = (t + delta) / horizon
    if t < 0 or delta <= 0 or s >= 1:
        raise ValueError(f"need 0 <= t, 0 < delta and t + delta < T = {horizon}")
    alpha_t = p.alpha0 * (1.0 - s) + p.alpha * s
    assert p.alpha < alpha_t <= p.alpha0
    return alpha_t


def semigroup_condition(kappa: float, c: float) -> tuple[bool, float]:
    """``(kappa * c < 1/e, ln c)``."""
    if not c > 0:
        raise ValueError("c must be positive")
    return kappa * c < 1.0 / math.e, math.log(c)


def psi(t):
    """``(exp(-t) - 1 + t) / t**2`` for ``t > 0``."""
    t = np.asarray(t, dtype=float)
    return (np.expm1(-t) + t) / t**2


def psi_sup(t_max: float = 50.0, num: int = 200_001) -> float:
    """Supremum of ``psi`` sampled on a fine grid (bounded analytically by 1/2)."""
    t = np.geomspace(1e-4, t_max, num)
    return float(np.max(psi(t)))


def eps_convergence_bound(
    eps: float,
    kappa: float,
    phi_sup: float,
    phi_mean: float,
    p: ScaleParams,
    C_psi: float = C_PSI,
) -> float:
    """Operator-norm bound on ``L_eps_ren - L_V`` from the ``alpha0`` space into ``alpha``."""
    if p.direction != "shrink":
        raise ValueError("needs alpha < alpha0")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    ge = p.gap * math.e
    return (
        eps
        * kappa
        * phi_sup
        * math.exp(phi_mean * math.exp(-p.alpha0))
        * (C_psi * phi_mean / ge + 4.0 * math.exp(p.alpha0) / ge**2)
    )


@dataclass
class BoundReport:
    kappa: float
    alpha0: float
    alpha: float
    c_phi: float
    phi_mean: float
    T_horizon: float
    T_tilde: float
    T_star_upper: float
    norm_L_hat: float
    norm_L_delta: float
    norm_L_V: float
    semigroup_ok: bool
    alpha_phi: float
    eps: list[float] = field(default_factory=list)
    c_phi_eps: list[float] = field(default_factory=list)
    norm_L_eps_ren: list[float] = field(default_factory=list)
    eps_bound: list[float] = field(default_factory=list)

    CSV_COLUMNS = (
        "kappa", "alpha0", "alpha", "c_phi", "phi_mean", "T_horizon", "T_tilde",
        "T_star_upper", "norm_L_hat", "norm_L_delta", "norm_L_V", "semigroup_ok", "alpha_phi",
    )
    EPS_CSV_COLUMNS = ("eps", "c_phi_eps", "norm_L_eps_ren", "eps_convergence_bound")

    def row(self) -> list:
        return [getattr(self, c) for c in self.CSV_COLUMNS]

    def eps_rows(self) -> list[list]:
        return [list(r) for r in zip(self.eps, self.c_phi_eps, self.norm_L_eps_ren, self.eps_bound)]

    def text(self) -> str:
        lines = [f"{name:<16} {value}" for name, value in zip(self.CSV_COLUMNS, self.row())]
        for r in self.eps_rows():
            lines.append(
                f"eps={r[0]:<10g} c_phi_eps={r[1]:.10g}  norm_L_eps_ren={r[2]:.10g}  eps_bound={r[3]:.10g}"
            )
        return "\n".join(lines)


def bound_report(phi: Potential, grid: TorusGrid, p: ScaleParams, eps_list=()) -> BoundReport:
    """Evaluate every constant for correlation-function parameters ``alpha < alpha0``.

    ``T_horizon`` uses ``c_phi``. The ``L_hat`` bound is reported for the mirrored
    pair (from ``alpha`` up to ``alpha0``).
    """
    if p.direction != "shrink":
        raise ValueError("bound_report expects alpha < alpha0")
    cp = c_phi(phi, grid)
    pm = phi_mean(phi, grid)
    mirrored = ScaleParams(p.kappa, p.alpha, p.alpha0)
    if cp > 0:
        ok, a_phi = semigroup_condition(p.kappa, cp)
        tsu = t_star_upper(p.kappa, cp)
    else:
        ok, a_phi, tsu = True, -math.inf, math.inf
    rep = BoundReport(
        kappa=p.kappa,
        alpha0=p.alpha0,
        alpha=p.alpha,
        c_phi=cp,
        phi_mean=pm,
        T_horizon=time_horizon(p, cp),
        T_tilde=vlasov_horizon(p, pm),
        T_star_upper=tsu,
        norm_L_hat=op_norm_bound("L_hat", mirrored, cp),
        norm_L_delta=op_norm_bound("L_delta", p, cp),
        norm_L_V=op_norm_bound("L_V", p, pm),
        semigroup_ok=ok,
        alpha_phi=a_phi,
    )
    for eps in eps_list:
        rep.eps.append(float(eps))
        rep.c_phi_eps.append(c_phi_eps(phi, grid, eps))
        rep.norm_L_eps_ren.append(op_norm_bound("L_eps_ren", p, eps=eps, phi=phi, grid=grid))
        rep.eps_bound.append(eps_convergence_bound(eps, p.kappa, phi.sup, pm, p))
    return rep
