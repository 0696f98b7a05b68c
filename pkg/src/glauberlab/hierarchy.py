"""Truncated correlation-function hierarchy on a periodic grid.

A :class:`CorrelationVector` stores the components ``k^(0), ..., k^(N)`` as
full symmetric tensors over the flattened grid nodes. Multi-indices are
treated as multisets of node indices (repeated nodes allowed), and subsets of
a configuration are subsets of index positions. With this convention the
rectangle-rule version of the Lebesgue-Poisson integration-by-parts identity
holds exactly, so the symbol ``L_hat`` and the descent operator ``L_delta``
are exact adjoints under the truncated pairing (zero closure, ``m_xi >= N``).

Operators on correlation functions share one shape::

    (Op k)^(n)(x_1..x_n) = -n k^(n)
        + kappa * sum_i prod_{j != i} P(x_i, x_j)
              * sum_{m=0}^{m_xi} h^{md}/m! sum_{y_1..y_m} prod_l Q(x_i, y_l) k^(n-1+m)(x_{-i}, y)

with ``(P, Q)`` equal to ``(tau, t)`` for ``L_delta``, ``(tau_eps, t_eps / eps)``
for ``L_eps_ren`` and ``(1, -phi)`` for ``L_V``. Orders above ``N`` are either
dropped (zero closure) or replaced by products of ``k^(1)`` (product closure).
"""
from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .model import Potential, TorusGrid, lp_weights, pairing, symmetrize
from .vlasov import DensityField

KINDS = ("L_delta", "L_hat", "L_eps_ren", "L_V")
CLOSURES = ("zero", "product")
MAX_ORDER = 3
MAX_TABLE_ELEMENTS = 1 << 22
_LETTERS = "abcdefghijklmnopqrstuvwxyz"


@dataclass
class CorrelationVector:
    """Per-order symmetric tables ``k^(0..N)`` on a grid."""

    grid: TorusGrid
    tables: list[np.ndarray]
    closure: str = "zero"
    m_xi: int = 2
    symmetrized: bool = field(default=False, repr=False)

    def __post_init__(self):
        if self.closure not in CLOSURES:
            raise ValueError(f"closure must be one of {CLOSURES}")
        if self.m_xi < 0:
            raise ValueError("m_xi must be nonnegative")
        n_max = len(self.tables) - 1
        if n_max < 0 or n_max > MAX_ORDER:
            raise ValueError(f"stored orders must be 0..N with N <= {MAX_ORDER}")
        size = self.grid.size
        if n_max == 3 and size > 16:
            raise ValueError("order-3 tables are limited to grids of at most 16 nodes")
        if size**n_max > MAX_TABLE_ELEMENTS:
            raise ValueError(f"order-{n_max} table on {size} nodes exceeds the memory guard")
        tabs = []
        for n, t in enumerate(self.tables):
            t = np.asarray(t, dtype=float)
            if t.shape != (size,) * n:
                raise ValueError(f"order-{n} table has shape {t.shape}, expected {(size,) * n}")
            tabs.append(t if self.symmetrized else symmetrize(t))
        self.tables = tabs
        self.symmetrized = True

    @classmethod
    def zeros(cls, grid: TorusGrid, n_max: int = 2, **kw) -> CorrelationVector:
        return cls(grid, [np.zeros((grid.size,) * n) for n in range(n_max + 1)], symmetrized=True, **kw)

    @classmethod
    def random(cls, grid: TorusGrid, n_max: int = 2, rng=None, scale: float = 1.0, **kw) -> CorrelationVector:
        """Uniform ``[0, scale)`` entries, symmetrized; ``k^(0) = 1`` is not imposed."""
        rng = np.random.default_rng(rng)
        return cls(grid, [scale * rng.random((grid.size,) * n) for n in range(n_max + 1)], **kw)

    @property
    def n_max(self) -> int:
        return len(self.tables) - 1

    def __getitem__(self, n: int) -> np.ndarray:
        return self.tables[n]

    def _like(self, tables) -> CorrelationVector:
        return CorrelationVector(self.grid, tables, self.closure, self.m_xi, symmetrized=True)

    def _check(self, other: CorrelationVector):
        if other.grid != self.grid or other.n_max != self.n_max:
            raise ValueError("correlation vectors differ in grid or truncation order")

    def __add__(self, other: CorrelationVector) -> CorrelationVector:
        self._check(other)
        return self._like([a + b for a, b in zip(self.tables, other.tables)])

    def __sub__(self, other: CorrelationVector) -> CorrelationVector:
        self._check(other)
        return self._like([a - b for a, b in zip(self.tables, other.tables)])

    def __mul__(self, c: float) -> CorrelationVector:
        return self._like([c * a for a in self.tables])

    __rmul__ = __mul__

    def __neg__(self) -> CorrelationVector:
        return self * -1.0

    def axpy(self, a: float, other: CorrelationVector) -> CorrelationVector:
        """``self + a * other``."""
        return self._like([x + a * y for x, y in zip(self.tables, other.tables)])

    def norm(self, alpha: float = 0.0) -> float:
        """Truncated weighted sup-norm ``max_n e^{alpha n} max |k^(n)|``."""
        return max(math.exp(alpha * n) * float(np.max(np.abs(t))) for n, t in enumerate(self.tables))

    def l1_norm(self, alpha: float = 0.0) -> float:
        """Truncated weighted L1 norm, the quasi-observable counterpart of :meth:`norm`."""
        w = lp_weights(self.grid, self.n_max)
        return float(sum(w[n] * math.exp(-alpha * n) * np.sum(np.abs(t)) for n, t in enumerate(self.tables)))

    def is_symmetric(self, atol: float = 0.0) -> bool:
        return all(
            np.allclose(t, np.transpose(t, p), rtol=0, atol=atol)
            for t in self.tables
            for p in itertools.permutations(range(t.ndim))
        )


def product_state(rho: DensityField, n_max: int = 2, closure: str = "zero", m_xi: int = 2) -> CorrelationVector:
    """Correlation function of the Poisson measure with density ``rho``."""
    flat = np.ravel(rho.values)
    if np.any(flat < 0):
        raise ValueError("density must be nonnegative")
    tabs = [np.array(1.0)]
    for _ in range(n_max):
        tabs.append(np.multiply.outer(tabs[-1], flat))
    return CorrelationVector(rho.grid, tabs, closure, m_xi, symmetrized=True)


@dataclass(frozen=True)
class HierarchyOperatorSpec:
    """Operator kind plus model parameters; kernels are built lazily.

    ``death=False`` switches off the ``-n k^(n)`` diagonal (test hook).
    """

    kind: str
    kappa: float
    phi: Potential
    grid: TorusGrid
    eps: float | None = None
    death: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.kind == "L_eps_ren":
            if self.eps is None or not self.eps > 0:
                raise ValueError("L_eps_ren needs eps > 0")
        self.phi.check_fits(self.grid)

    def with_kind(self, kind: str, eps: float | None = None) -> HierarchyOperatorSpec:
        return HierarchyOperatorSpec(kind, self.kappa, self.phi, self.grid, eps, self.death)

    @cached_property
    def prefactor(self) -> np.ndarray | None:
        """``P(x, y)``; ``None`` means identically one."""
        if self.kind == "L_V":
            return None
        scale = self.eps if self.kind == "L_eps_ren" else 1.0
        return self.phi.pair_kernel(self.grid, lambda v: np.exp(-scale * v))

    @cached_property
    def xi_kernel(self) -> np.ndarray:
        """``Q(x, y)``; for ``L_hat`` this is ``t_x(y)``."""
        if self.kind == "L_V":
            return -self.phi.pair_kernel(self.grid)
        if self.kind == "L_eps_ren":
            e = self.eps
            return self.phi.pair_kernel(self.grid, lambda v: np.expm1(-e * v) / e)
        return self.phi.pair_kernel(self.grid, lambda v: np.expm1(-v))


def _outer_rows(mat: np.ndarray, r: int) -> np.ndarray:
    """``prod_{j<r} mat[x, z_j]`` as an array with axes ``(x, z_1..z_r)``."""
    size = mat.shape[0]
    out = np.ones((size,))
    for j in range(r):
        out = out[..., None] * mat.reshape((size,) + (1,) * j + (size,))
    return out


def _contract(Q: np.ndarray, K: np.ndarray, r: int, m: int) -> np.ndarray:
    """``sum_y prod_l Q[x, y_l] K[z_1..z_r, y_1..y_m]`` with axes ``(x, z)``."""
    size = Q.shape[0]
    if m == 0:
        return np.broadcast_to(K, (size,) + K.shape)
    x = _LETTERS[0]
    z = _LETTERS[1 : 1 + r]
    y = _LETTERS[1 + r : 1 + r + m]
    subs = ",".join(x + c for c in y) + "," + z + y + "->" + x + z
    return np.einsum(subs, *([Q] * m), K, optimize=True)


def _apply_descent(k: CorrelationVector, spec: HierarchyOperatorSpec) -> CorrelationVector:
    N, size, h = k.n_max, k.grid.size, k.grid.cell_volume
    if k.grid != spec.grid:
        raise ValueError("operator and correlation vector use different grids")
    P, Q = spec.prefactor, spec.xi_kernel
    k1_smeared = Q @ k.tables[1] if (k.closure == "product" and N >= 1) else None
    out = [np.zeros(())]
    for n in range(1, N + 1):
        r = n - 1
        B = np.zeros((size,) * n)
        for m in range(k.m_xi + 1):
            p = r + m
            if p <= N:
                term = _contract(Q, k.tables[p], r, m)
            elif k.closure == "product":
                rest = _outer_rows(np.broadcast_to(k.tables[1], (size, size)), r)
                term = rest * (k1_smeared**m).reshape((size,) + (1,) * r)
            else:
                continue
            B = B + (h**m / math.factorial(m)) * term
        if P is not None:
            B = B * _outer_rows(P, r)
        birth = sum(np.moveaxis(B, 0, i) for i in range(n))
        res = spec.kappa * birth
        if spec.death:
            res = res - n * k.tables[n]
        out.append(res)
    return k._like(out)


def _apply_symbol(G: CorrelationVector, spec: HierarchyOperatorSpec) -> CorrelationVector:
    N, size, h = G.n_max, G.grid.size, G.grid.cell_volume
    tau = spec.phi.pair_kernel(spec.grid, lambda v: np.exp(-v))
    t = tau - 1.0
    out = []
    for n in range(N + 1):
        acc = np.zeros((size,) * n)
        idx = _LETTERS[1 : 1 + n]
        for j in range(n + 1):
            if j + 1 > N:
                continue
            for S in itertools.combinations(range(n), j):
                mats = [tau if i in S else t for i in range(n)]
                subs = [ "a" + idx[i] for i in range(n)]
                gsub = "".join(idx[i] for i in S) + "a"
                expr = ",".join(subs + [gsub]) + "->" + idx
                acc = acc + h * np.einsum(expr, *mats, G.tables[j + 1], optimize=True)
        res = spec.kappa * acc
        if spec.death:
            res = res - n * G.tables[n]
        out.append(res)
    return G._like(out)


def apply_operator(k: CorrelationVector, spec: HierarchyOperatorSpec) -> CorrelationVector:
    if spec.kind == "L_hat":
        return _apply_symbol(k, spec)
    return _apply_descent(k, spec)


def apply_L_delta(k: CorrelationVector, spec: HierarchyOperatorSpec) -> CorrelationVector:
    _expect(spec, "L_delta")
    return _apply_descent(k, spec)


def apply_L_hat(G: CorrelationVector, spec: HierarchyOperatorSpec) -> CorrelationVector:
    """Symbol of the generator acting on quasi-observables.

    Orders of ``G`` above the stored ones are zero (bounded support).
    """
    _expect(spec, "L_hat")
    return _apply_symbol(G, spec)


def apply_L_V(k: CorrelationVector, spec: HierarchyOperatorSpec) -> CorrelationVector:
    _expect(spec, "L_V")
    return _apply_descent(k, spec)


def apply_L_eps_ren(k: CorrelationVector, spec: HierarchyOperatorSpec) -> CorrelationVector:
    _expect(spec, "L_eps_ren")
    return _apply_descent(k, spec)


def _expect(spec, kind):
    if spec.kind != kind:
        raise ValueError(f"operator spec has kind {spec.kind!r}, expected {kind!r}")


def ovsjannikov_series(k0: CorrelationVector, spec: HierarchyOperatorSpec, t: float, M_terms: int) -> CorrelationVector:
    """Partial Taylor sum ``sum_{m<=M} t^m/m! Op^m k0``."""
    if t < 0 or M_terms < 0:
        raise ValueError("need t >= 0 and M_terms >= 0")
    total, term = k0, k0
    for m in range(1, M_terms + 1):
        term = apply_operator(term, spec) * (t / m)
        total = total + term
    return total


def series_terms(k0: CorrelationVector, spec: HierarchyOperatorSpec, t: float, M_terms: int) -> list[CorrelationVector]:
    """Individual terms ``t^m/m! Op^m k0`` for ``m = 0..M_terms``."""
    terms = [k0]
    for m in range(1, M_terms + 1):
        terms.append(apply_operator(terms[-1], spec) * (t / m))
    return terms


@dataclass
class HierarchyTrajectory:
    times: np.ndarray
    alphas: tuple[float, ...]
    norms: np.ndarray
    states: list[CorrelationVector]
    error_estimate: float | None = None

    @property
    def final(self) -> CorrelationVector:
        return self.states[-1]


def rk4_step(k: CorrelationVector, spec: HierarchyOperatorSpec, dt: float) -> CorrelationVector:
    s1 = apply_operator(k, spec)
    s2 = apply_operator(k.axpy(0.5 * dt, s1), spec)
    s3 = apply_operator(k.axpy(0.5 * dt, s2), spec)
    s4 = apply_operator(k.axpy(dt, s3), spec)
    return k._like(
        [a + dt / 6.0 * (b + 2 * c + 2 * d + e) for a, b, c, d, e in zip(k.tables, s1.tables, s2.tables, s3.tables, s4.tables)]
    )


def _rk4_run(k0, spec, dt, t_end, keep: bool, observe):
    n = max(int(math.ceil(t_end / dt - 1e-9)), 0)
    h = t_end / n if n else dt
    k, states, times = k0, [k0], [0.0]
    if observe:
        observe(0.0, k0)
    for i in range(n):
        k = rk4_step(k, spec, h)
        t = (i + 1) * h
        times.append(t)
        if keep:
            states.append(k)
        if observe:
            observe(t, k)
    if not keep:
        states = [k0, k]
    return np.array(times), states, k


def integrate_hierarchy(
    k0: CorrelationVector,
    spec: HierarchyOperatorSpec,
    dt: float,
    t_end: float,
    alphas: Sequence[float] = (0.0,),
    store_states: bool = True,
    error_estimate: bool = False,
    observe: Callable[[float, CorrelationVector], None] | None = None,
) -> HierarchyTrajectory:
    """Classical RK4 on the truncated linear system.

    With ``error_estimate`` the run is repeated at ``dt/2`` and the
    ``alphas[0]``-norm of the final-state difference is reported.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    alphas = tuple(float(a) for a in alphas)
    norms = []

    def obs(t, k):
        norms.append([k.norm(a) for a in alphas])
        if observe:
            observe(t, k)

    times, states, final = _rk4_run(k0, spec, dt, t_end, store_states, obs)
    traj = HierarchyTrajectory(times, alphas, np.array(norms), states)
    if error_estimate:
        _, _, fine = _rk4_run(k0, spec, dt / 2, t_end, False, None)
        traj.error_estimate = (fine - final).norm(alphas[0])
    return traj


def continue_hierarchy(
    k0: CorrelationVector,
    spec: HierarchyOperatorSpec,
    dt: float,
    t_end: float,
    segment: float,
    alphas: Sequence[float] = (0.0,),
    observe=None,
) -> HierarchyTrajectory:
    """Restart-continuation: consecutive runs of length at most ``segment``."""
    if not segment > 0:
        raise ValueError("segment must be positive")
    t0, k = 0.0, k0
    times, norms, states = [0.0], None, [k0]
    while t0 < t_end - 1e-12:
        length = min(segment, t_end - t0)
        shifted = (lambda t, kk, base=t0: observe(base + t, kk)) if observe else None
        part = integrate_hierarchy(k, spec, min(dt, length), length, alphas, store_states=False, observe=shifted)
        norms = part.norms if norms is None else np.vstack([norms, part.norms[1:]])
        times.extend(t0 + part.times[1:])
        k = part.final
        states.append(k)
        t0 += length
    if norms is None:
        norms = np.array([[k0.norm(a) for a in alphas]])
    return HierarchyTrajectory(np.array(times), tuple(alphas), norms, states)


def domination_check(k: CorrelationVector, kappa: float, rtol: float = 1e-8) -> tuple[bool, float]:
    """Whether ``k^(n) <= kappa^n (1 + rtol)`` everywhere, and the worst ratio ``k^(n)/kappa^n``."""
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    worst = max(float(np.max(t)) / kappa**n for n, t in enumerate(k.tables))
    return worst <= 1.0 + rtol, worst


def duality_residual(G: CorrelationVector, k: CorrelationVector, spec: HierarchyOperatorSpec) -> float:
    """``|<<L_hat G, k>> - <<G, L_delta k>>|`` under the truncated pairing."""
    if G.n_max != k.n_max or G.grid != k.grid:
        raise ValueError("G and k must share grid and truncation order")
    if np.any(G.tables[-1] != 0):
        raise ValueError("G must vanish at the top stored order")
    hat = spec.with_kind("L_hat")
    delta = spec.with_kind("L_delta")
    lhs = pairing(apply_L_hat(G, hat), k, k.grid)
    rhs = pairing(G, apply_L_delta(k, delta), k.grid)
    return abs(lhs - rhs)


def eps_difference_norm(k: CorrelationVector, spec: HierarchyOperatorSpec, eps: float, alpha: float = 0.0) -> float:
    """``|| (L_eps_ren - L_V) k ||_alpha``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    a = apply_operator(k, spec.with_kind("L_eps_ren", eps))
    b = apply_operator(k, spec.with_kind("L_V"))
    return (a - b).norm(alpha)


def chaos_deviation(r: CorrelationVector, rho: DensityField, alpha: float = 0.0) -> float:
    """Distance between ``r`` and the product state built from ``rho``."""
    prod = product_state(rho, r.n_max, r.closure, r.m_xi)
    return (r - prod).norm(alpha)
