"""Geometric and combinatorial primitives on a periodic grid.

Finite configurations live on the torus ``[0, L)^d``. Functions on finite
configurations are stored order by order as full symmetric tensors over the
grid nodes: the order-``n`` table has ``n`` axes, each of length
``grid.size`` (flattened node index). Integrals against the Lebesgue-Poisson
measure use the rectangle rule, so an order-``n`` table is weighted by
``cell_volume**n / n!``.
"""
from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

POTENTIAL_KINDS = ("tophat", "truncated-gaussian", "exponential-decay", "zero")

# relative tolerance for deciding that a node sits exactly on the cutoff sphere
_EDGE_RTOL = 1e-12
# max number of points for which subset enumeration is allowed
MAX_SUBSET_POINTS = 20


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid with ``n`` points per axis on ``[0, L)^d``."""

    L: float = 8.0
    n: int = 32
    d: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be positive, got {self.d}")
        if not self.L > 0:
            raise ValueError(f"period must be positive, got {self.L}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"points per axis must be a power of two >= 8, got {self.n}")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def volume(self) -> float:
        return self.L**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        """Total number of nodes."""
        return self.n**self.d

    def axis(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape ``(size, d)``, in flattened (C) order."""
        idx = np.indices(self.shape).reshape(self.d, -1).T
        return idx * self.h

    def wrap(self, x) -> np.ndarray:
        return np.mod(np.asarray(x, dtype=float), self.L)

    def displacement(self, x, y) -> np.ndarray:
        """Minimal-image displacement ``x - y`` per axis, in ``[-L/2, L/2]``."""
        delta = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return delta - self.L * np.round(delta / self.L)

    def distance(self, x, y) -> np.ndarray:
        delta = self.displacement(x, y)
        if delta.ndim == 0:
            return np.abs(delta)
        return np.sqrt(np.sum(delta**2, axis=-1))

    def node_offsets(self) -> np.ndarray:
        """Minimal-image distance from node 0 to every node, grid-shaped."""
        comps = [np.minimum(np.arange(self.n), self.n - np.arange(self.n)) * self.h]
        mesh = np.meshgrid(*(comps * self.d), indexing="ij")
        return np.sqrt(sum(m**2 for m in mesh))

    def pair_distances(self) -> np.ndarray:
        """Matrix of minimal-image distances between all pairs of nodes."""
        coords = self.coordinates()
        return self.distance(coords[:, None, :], coords[None, :, :])

    def nearest_node(self, points) -> np.ndarray:
        """Flattened index of the node nearest to each point (shape ``(m, d)``)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.mod(np.rint(pts / self.h).astype(np.int64), self.n)
        return np.ravel_multi_index(tuple(idx.T), self.shape) if len(pts) else np.zeros(0, np.int64)


@dataclass(frozen=True)
class Potential:
    """Nonnegative, radially symmetric, compactly supported pair potential.

    ``range_`` is the length scale ``a``; ``cutoff`` defaults to ``a`` for the
    tophat, ``3a`` for the truncated Gaussian and ``5a`` for the exponential.

    Functions of the potential evaluated exactly on the cutoff sphere take the
    average of the inside and outside limits, ``(f(phi(a-)) + f(0)) / 2``. On a
    grid that resolves the cutoff this makes rectangle-rule integrals of
    ``f(phi)`` exact for the tophat.
    """

    kind: str = "tophat"
    amplitude: float = 1.0
    range_: float = 1.0
    cutoff: float | None = None
    d: int = 1

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}; expected one of {POTENTIAL_KINDS}")
        if self.amplitude < 0:
            raise ValueError("potential amplitude must be nonnegative")
        if not self.range_ > 0:
            raise ValueError("potential range must be positive")
        if self.cutoff is not None and not self.cutoff > 0:
            raise ValueError("potential cutoff must be positive")

    @classmethod
    def zero(cls, d: int = 1) -> Potential:
        return cls(kind="zero", amplitude=0.0, d=d)

    @property
    def support(self) -> float:
        if self.cutoff is not None:
            return self.cutoff
        return {"tophat": 1.0, "truncated-gaussian": 3.0, "exponential-decay": 5.0, "zero": 1.0}[
            self.kind
        ] * self.range_

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.amplitude == 0.0

    @property
    def sup(self) -> float:
        """Supremum of the potential."""
        return 0.0 if self.is_zero else self.amplitude

    def scaled(self, factor: float) -> Potential:
        """The potential ``factor * phi``."""
        return Potential(self.kind, self.amplitude * factor, self.range_, self.cutoff, self.d)

    def check_fits(self, grid: TorusGrid) -> None:
        if grid.d != self.d:
            raise ValueError(f"potential dimension {self.d} does not match grid dimension {grid.d}")
        if not self.is_zero and self.support > grid.L / 2:
            raise ValueError(
                f"potential support {self.support} exceeds half the period {grid.L / 2}"
            )

    def _inside(self, r):
        a = self.range_
        if self.kind == "tophat":
            return np.full_like(r, self.amplitude, dtype=float)
        if self.kind == "truncated-gaussian":
            return self.amplitude * np.exp(-0.5 * (r / a) ** 2)
        return self.amplitude * np.exp(-r / a)

    def radial(self, r, func: Callable | None = None) -> np.ndarray:
        """``func(phi(r))`` for distances ``r`` (default ``func`` is identity)."""
        r = np.asarray(r, dtype=float)
        f = (lambda v: v) if func is None else func
        if self.is_zero:
            return np.asarray(f(np.zeros_like(r)), dtype=float) * np.ones_like(r)
        rc = self.support
        inner = np.asarray(f(self._inside(r)), dtype=float) * np.ones_like(r)
        outer = np.asarray(f(np.zeros_like(r)), dtype=float) * np.ones_like(r)
        edge = np.abs(r - rc) <= _EDGE_RTOL * rc
        out = np.where(r < rc, inner, outer)
        return np.where(edge, 0.5 * (inner + outer), out)

    def value(self, r: float) -> float:
        """Scalar ``phi(r)``; fast path for the simulator's inner loop."""
        if self.is_zero or r > self.support:
            return 0.0
        if self.kind == "tophat":
            v = self.amplitude
        elif self.kind == "truncated-gaussian":
            v = self.amplitude * math.exp(-0.5 * (r / self.range_) ** 2)
        else:
            v = self.amplitude * math.exp(-r / self.range_)
        if abs(r - self.support) <= _EDGE_RTOL * self.support:
            return 0.5 * v
        return v

    def grid_kernel(self, grid: TorusGrid, func: Callable | None = None) -> np.ndarray:
        """``func(phi)`` at every node offset from the origin, grid-shaped."""
        self.check_fits(grid)
        return self.radial(grid.node_offsets(), func)

    def pair_kernel(self, grid: TorusGrid, func: Callable | None = None) -> np.ndarray:
        """Matrix ``func(phi(x - y))`` over all pairs of grid nodes."""
        self.check_fits(grid)
        return self.radial(grid.pair_distances(), func)


@dataclass(frozen=True)
class FiniteConfiguration:
    """Finite set of distinct points on the torus, stored as an ``(m, d)`` array."""

    positions: np.ndarray
    L: float
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.ndim != 2:
            raise ValueError("positions must have shape (m, d)")
        object.__setattr__(self, "positions", pos)
        if self.check:
            if np.any(pos < 0) or np.any(pos >= self.L):
                raise ValueError(f"coordinates must lie in [0, {self.L})")
            if len(np.unique(pos, axis=0)) != len(pos):
                raise ValueError("configuration contains duplicate points")

    @classmethod
    def empty(cls, L: float, d: int = 1) -> FiniteConfiguration:
        return cls(np.zeros((0, d)), L)

    @property
    def count(self) -> int:
        return len(self.positions)

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def __len__(self):
        return self.count


def eval_potential(phi: Potential, x, L: float) -> float:
    """``phi`` at the minimal periodic image of ``x``; zero beyond the cutoff."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    delta = x - L * np.round(x / L)
    return float(phi.radial(np.sqrt(np.sum(delta**2))))


def relative_energy(phi: Potential, x, gamma: FiniteConfiguration) -> float:
    """Interaction energy ``sum_{y in gamma} phi(x - y)`` of a point with a configuration."""
    if gamma.count == 0 or phi.is_zero:
        return 0.0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    delta = x[None, :] - gamma.positions
    delta -= gamma.L * np.round(delta / gamma.L)
    return float(np.sum(phi.radial(np.sqrt(np.sum(delta**2, axis=1)))))


def lp_exponent(f: np.ndarray, eta: Sequence[int]) -> float:
    """Lebesgue-Poisson exponent: product of the grid function over the nodes of ``eta``."""
    flat = np.ravel(f)
    return float(np.prod(flat[np.asarray(eta, dtype=np.int64)])) if len(eta) else 1.0


def k_transform(G: Mapping | Callable, gamma: Sequence) -> float:
    """Sum of ``G`` over all subsets of ``gamma``, the empty set included.

    ``G`` is either a callable taking a tuple of points or a mapping keyed by
    ``frozenset`` (absent keys count as zero).
    """
    gamma = list(gamma)
    if len(gamma) > MAX_SUBSET_POINTS:
        raise ValueError(
            f"subset enumeration over {len(gamma)} points exceeds the guard of {MAX_SUBSET_POINTS}"
        )
    if isinstance(G, Mapping):
        def g(sub):
            return G.get(frozenset(sub), 0.0)
    else:
        g = G
    total = 0.0
    for r in range(len(gamma) + 1):
        for sub in itertools.combinations(gamma, r):
            total += g(sub)
    return total


def lp_weights(grid: TorusGrid, max_order: int) -> np.ndarray:
    """Quadrature weights ``cell_volume**n / n!`` for ``n = 0..max_order``."""
    return np.array([grid.cell_volume**n / math.factorial(n) for n in range(max_order + 1)])


def lp_integrate(F: Sequence[np.ndarray], grid: TorusGrid, max_order: int | None = None) -> float:
    """Rectangle-rule integral of a per-order table against the Lebesgue-Poisson measure."""
    if max_order is None:
        max_order = len(F) - 1
    if max_order >= len(F):
        raise ValueError(f"max_order {max_order} exceeds stored orders (0..{len(F) - 1})")
    w = lp_weights(grid, max_order)
    return float(sum(w[n] * np.sum(F[n]) for n in range(max_order + 1)))


def exponent_table(f: np.ndarray, max_order: int) -> list[np.ndarray]:
    """Per-order tables of ``e(f, .)``: the ``n``-fold outer product of ``f``."""
    flat = np.ravel(np.asarray(f, dtype=float))
    tables = [np.array(1.0)]
    for _ in range(max_order):
        tables.append(np.multiply.outer(tables[-1], flat))
    return tables


def pairing(G, k, grid: TorusGrid, max_order: int | None = None) -> float:
    """Truncated pairing of a quasi-observable with a correlation function."""
    g_grid = getattr(G, "grid", grid)
    k_grid = getattr(k, "grid", grid)
    if g_grid != grid or k_grid != grid:
        raise ValueError("pairing arguments live on different grids")
    gt = list(getattr(G, "tables", G))
    kt = list(getattr(k, "tables", k))
    if max_order is None:
        max_order = min(len(gt), len(kt)) - 1
    if max_order >= len(gt) or max_order >= len(kt):
        raise ValueError("pairing requested beyond the stored orders")
    prod = [np.asarray(gt[n]) * np.asarray(kt[n]) for n in range(max_order + 1)]
    return lp_integrate(prod, grid, max_order)


def symmetrize(table: np.ndarray) -> np.ndarray:
    """Average a tensor over all permutations of its axes."""
    table = np.asarray(table, dtype=float)
    n = table.ndim
    if n < 2:
        return table.copy()
    perms = list(itertools.permutations(range(n)))
    return sum(np.transpose(table, p) for p in perms) / len(perms)
