"""Nonlocal kinetic equation ``d rho/dt = -rho + kappa * exp(-(phi * rho))`` on the torus."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from .model import Potential, TorusGrid

SOLVERS = ("integrating-factor", "picard")


@dataclass
class DensityField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 0:
            vals = np.full(self.grid.shape, float(vals))
        vals = vals.reshape(self.grid.shape)
        if np.any(vals < 0):
            raise ValueError("density must be nonnegative")
        self.values = vals

    @classmethod
    def constant(cls, grid: TorusGrid, c: float) -> DensityField:
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def cosine(cls, grid: TorusGrid, mean: float, modulation: float = 0.0) -> DensityField:
        """``mean * (1 + modulation * cos(2 pi x_1 / L))``."""
        x1 = grid.coordinates()[:, 0].reshape(grid.shape)
        return cls(grid, mean * (1.0 + modulation * np.cos(2 * np.pi * x1 / grid.L)))

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def mass(self) -> float:
        return float(self.grid.cell_volume * np.sum(self.values))

    def in_delta_plus(self, alpha: float, atol: float = 0.0) -> bool:
        """Nonnegative with sup-norm at most ``exp(-alpha)``."""
        return bool(np.all(self.values >= 0) and self.sup <= math.exp(-alpha) + atol)


class Convolver:
    """Periodic convolution with a fixed potential through the FFT."""

    def __init__(self, phi: Potential, grid: TorusGrid):
        self.grid = grid
        self.phi = phi
        self.zero = phi.is_zero
        self._khat = np.fft.rfftn(phi.grid_kernel(grid)) * grid.cell_volume

    def __call__(self, values: np.ndarray) -> np.ndarray:
        if self.zero:
            return np.zeros(self.grid.shape)
        axes = tuple(range(-self.grid.d, 0))
        return np.fft.irfftn(self._khat * np.fft.rfftn(values, axes=axes), s=self.grid.shape, axes=axes)


def convolve(phi: Potential, rho: DensityField) -> np.ndarray:
    """``(phi * rho)(x) = h^d sum_y phi(x - y) rho(y)`` with periodic wrap."""
    return Convolver(phi, rho.grid)(rho.values)


def convolve_direct(phi: Potential, rho: DensityField) -> np.ndarray:
    """Reference O(n^2) direct sum for :func:`convolve`."""
    grid = rho.grid
    kern = phi.pair_kernel(grid)
    return (grid.cell_volume * kern @ rho.values.ravel()).reshape(grid.shape)


def vlasov_rhs(rho: DensityField, kappa: float, phi: Potential) -> np.ndarray:
    return -rho.values + kappa * np.exp(-convolve(phi, rho))


def homogeneous_fixed_point(kappa: float, phi_mean: float, tol: float = 1e-14, max_iter: int = 200) -> float:
    """Positive root of ``rho = kappa * exp(-rho * phi_mean)``.

    Newton's method safeguarded by the bracket ``[0, kappa]``; falls back to
    bisection whenever a Newton step leaves the bracket.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    if phi_mean < 0:
        raise ValueError("phi_mean must be nonnegative")
    if phi_mean == 0:
        return float(kappa)

    def g(r):
        return r - kappa * math.exp(-r * phi_mean)

    lo, hi = 0.0, float(kappa)
    x = kappa / (1.0 + kappa * phi_mean)
    for _ in range(max_iter):
        gx = g(x)
        dg = 1.0 + phi_mean * kappa * math.exp(-x * phi_mean)
        step = x - gx / dg
        if abs(gx) <= tol * max(1.0, kappa):
            return step if lo <= step <= hi else x
        if gx > 0:
            hi = x
        else:
            lo = x
        x = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            return x
    raise RuntimeError("fixed-point iteration did not converge")


def contraction_factor(kappa: float, phi_mean: float, t: float) -> float:
    """Picard contraction factor ``kappa <phi> (1 - exp(-t))``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return kappa * phi_mean * -math.expm1(-t)


def picard_iterates(rho0: DensityField, kappa: float, phi: Potential, t: float, n_iters: int, n_sub: int = 64):
    """All Picard iterates on a uniform time mesh.

    Returns ``(s, iterates)`` with ``iterates[n]`` of shape ``(len(s), *grid.shape)``;
    ``iterates[0]`` is ``rho0`` at every time. The time integral uses composite
    Simpson quadrature on ``n_sub`` subintervals.
    """
    if n_iters < 0:
        raise ValueError("n_iters must be nonnegative")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if n_sub < 64:
        raise ValueError("at least 64 time subintervals are required")
    n_sub += n_sub % 2
    grid = rho0.grid
    conv = Convolver(phi, grid)
    s = np.linspace(0.0, t, n_sub + 1)
    decay = np.exp(-s).reshape((-1,) + (1,) * grid.d)
    grow = np.exp(s).reshape(decay.shape)
    base = rho0.values[None] * decay
    current = np.broadcast_to(rho0.values, (len(s),) + grid.shape).copy()
    iterates = [current]
    for _ in range(n_iters):
        nonlin = np.exp(-np.stack([conv(v) for v in current]))
        if t > 0:
            integral = cumulative_simpson(grow * nonlin, x=s, axis=0, initial=0.0)
        else:
            integral = np.zeros_like(nonlin)
        current = base + kappa * decay * integral
        iterates.append(current)
    return s, iterates


def picard_solve(rho0: DensityField, kappa: float, phi: Potential, t: float, n_iters: int, n_sub: int = 64) -> DensityField:
    """The ``n_iters``-th Picard iterate at time ``t``."""
    _, its = picard_iterates(rho0, kappa, phi, t, n_iters, n_sub)
    return DensityField(rho0.grid, np.maximum(its[-1][-1], 0.0))


@dataclass
class KineticRun:
    rho0: DensityField
    kappa: float
    phi: Potential
    dt: float
    t_end: float
    solver: str = "integrating-factor"
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sup: np.ndarray = field(default_factory=lambda: np.zeros(0))
    min: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mass: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fields: list[np.ndarray] = field(default_factory=list)

    CSV_COLUMNS = ("t", "sup_rho", "min_rho", "mass", "fixed_point_residual")

    @property
    def final(self) -> DensityField:
        return DensityField(self.rho0.grid, self.fields[-1])

    def at(self, t: float) -> DensityField:
        """Stored field at the mesh time closest to ``t``."""
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the step mesh")
        return DensityField(self.rho0.grid, self.fields[i])

    def rows(self):
        return np.column_stack([self.times, self.sup, self.min, self.mass, self.residual])


def _n_steps(dt: float, t_end: float) -> int:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    return max(int(math.ceil(t_end / dt - 1e-9)), 0)


def integrate_vlasov(rho0: DensityField, kappa: float, phi: Potential, dt: float = 1e-2, t_end: float = 1.0) -> KineticRun:
    """Exponential-midpoint stepping with the linear ``-rho`` part taken exactly.

    One step: ``rho_mid = rho e^{-dt/2} + (1 - e^{-dt/2}) N(rho)`` then
    ``rho_new = rho e^{-dt} + (1 - e^{-dt}) N(rho_mid)`` with
    ``N(rho) = kappa exp(-(phi * rho))``. The last step is shortened to land on
    ``t_end`` only if ``t_end`` is not a multiple of ``dt``.
    """
    n = _n_steps(dt, t_end)
    grid = rho0.grid
    conv = Convolver(phi, grid)
    h = t_end / n if n else dt
    e_full, e_half = math.exp(-h), math.exp(-0.5 * h)

    def nonlin(v):
        return kappa * np.exp(-conv(v))

    run = KineticRun(rho0, kappa, phi, h, t_end)
    rho = rho0.values.copy()
    times, fields, rows = [0.0], [rho.copy()], []

    def record(v):
        rows.append((v.max(), v.min(), grid.cell_volume * v.sum(), np.max(np.abs(-v + nonlin(v)))))

    record(rho)
    for i in range(n):
        mid = rho * e_half + (1.0 - e_half) * nonlin(rho)
        rho = rho * e_full + (1.0 - e_full) * nonlin(mid)
        times.append((i + 1) * h)
        fields.append(rho.copy())
        record(rho)
    rows = np.array(rows)
    run.times = np.array(times)
    run.sup, run.min, run.mass, run.residual = rows.T
    run.fields = fields
    return run


def solve_vlasov(rho0, kappa, phi, dt=1e-2, t_end=1.0, solver="integrating-factor", picard_iters=12) -> KineticRun:
    """Run either solver and return a :class:`KineticRun` on the ``dt`` mesh."""
    if solver == "integrating-factor":
        return integrate_vlasov(rho0, kappa, phi, dt, t_end)
    if solver != "picard":
        raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    n = _n_steps(dt, t_end)
    n_sub = max(64, n + n % 2)
    s, its = picard_iterates(rho0, kappa, phi, t_end, picard_iters, n_sub)
    vals = its[-1]
    conv = Convolver(phi, rho0.grid)
    run = KineticRun(rho0, kappa, phi, s[1] - s[0] if len(s) > 1 else dt, t_end, solver="picard")
    run.times = s
    run.fields = [np.maximum(v, 0.0) for v in vals]
    run.sup = np.array([v.max() for v in vals])
    run.min = np.array([v.min() for v in vals])
    run.mass = np.array([rho0.grid.cell_volume * v.sum() for v in vals])
    run.residual = np.array([np.max(np.abs(-v + kappa * np.exp(-conv(v)))) for v in vals])
    return run
