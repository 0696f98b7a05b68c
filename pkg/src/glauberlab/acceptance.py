"""Canned acceptance experiments, one function per criterion.

Each criterion returns a :class:`CriterionResult`; :func:`run_acceptance`
runs them in order and prints one ``PASS``/``FAIL`` line per criterion.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .bounds import ScaleParams, c_phi, c_phi_eps, eps_convergence_bound, phi_mean, t_star_upper, time_horizon, vlasov_horizon
from .hierarchy import (
    CorrelationVector,
    HierarchyOperatorSpec,
    chaos_deviation,
    continue_hierarchy,
    domination_check,
    duality_residual,
    eps_difference_norm,
    integrate_hierarchy,
    ovsjannikov_series,
    product_state,
)
from .model import FiniteConfiguration, Potential, TorusGrid
from .sim import SimParams, estimate_density, estimate_pair_correlation, run_replicas, vlasov_scaling_sweep
from .vlasov import DensityField, contraction_factor, homogeneous_fixed_point, integrate_vlasov, picard_iterates

ACCEPT_SEED = 20240611


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    runtime: float = 0.0
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} [{self.number:2d}] {self.name}: {self.detail} ({self.runtime:.1f}s)"


def bisect_root(f, lo: float, hi: float, tol: float = 1e-15) -> float:
    flo = f(lo)
    while hi - lo > tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def criterion_adjointness(n_pairs: int = 50, seed: int = ACCEPT_SEED) -> CriterionResult:
    grid = TorusGrid(4.0, 8, 1)
    spec = HierarchyOperatorSpec("L_delta", 0.7, Potential("tophat", 1.0, 1.0), grid)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        G = CorrelationVector.random(grid, 2, rng, scale=2.0)
        G = CorrelationVector(grid, G.tables[:-1] + [np.zeros_like(G.tables[-1])], symmetrized=True)
        k = CorrelationVector.random(grid, 2, rng, scale=2.0, m_xi=2)
        res = duality_residual(G, k, spec)
        worst = max(worst, res / (G.l1_norm() * k.norm()))
    ok = worst <= 1e-10
    return CriterionResult(1, "adjointness", ok, f"max residual/(|G| |k|) = {worst:.2e} <= 1e-10", values={"worst": worst})


def _chaos_setup():
    grid = TorusGrid(8.0, 32, 1)
    phi = Potential("tophat", 1.0, 1.0)
    rho0 = DensityField.cosine(grid, 0.2, 0.5)
    return grid, phi, rho0


def chaos_deviations(m_values=(1, 3), kappa: float = 0.3, t: float = 0.2, dt: float = 1e-3, alpha: float = -1.0):
    grid, phi, rho0 = _chaos_setup()
    rho_t = integrate_vlasov(rho0, kappa, phi, dt, t).final
    spec = HierarchyOperatorSpec("L_V", kappa, phi, grid)
    out = {}
    for m in m_values:
        k0 = product_state(rho0, 2, "product", m)
        r_t = integrate_hierarchy(k0, spec, dt, t, (alpha,), store_states=False).final
        out[m] = chaos_deviation(r_t, rho_t, alpha)
    return out


def criterion_chaos() -> CriterionResult:
    dev = chaos_deviations()
    ratio = dev[1] / dev[3]
    ok = ratio >= 10.0 and dev[3] <= 1e-4
    return CriterionResult(
        2, "chaos preservation", ok,
        f"alpha=-1: dev(M=1)={dev[1]:.3e} dev(M=3)={dev[3]:.3e} ratio={ratio:.1f} (need >=10, dev(M=3)<=1e-4)",
        values={"dev": dev, "ratio": ratio},
    )


def criterion_domination(kappa: float = 0.3) -> CriterionResult:
    grid = TorusGrid(8.0, 32, 1)
    phi = Potential("tophat", 1.0, 1.0)
    alpha0 = -math.log(kappa)
    p = ScaleParams(kappa, alpha0, alpha0 - 1.0)
    T = time_horizon(p, c_phi(phi, grid))
    k0 = product_state(DensityField.constant(grid, kappa), 2, "zero", 2)
    spec = HierarchyOperatorSpec("L_delta", kappa, phi, grid)
    worst = [0.0]
    steps = [0]

    def observe(t, k):
        worst[0] = max(worst[0], domination_check(k, kappa)[1])
        steps[0] += 1

    continue_hierarchy(k0, spec, dt=T / 100, t_end=2 * T, segment=0.5 * T, alphas=(p.alpha,), observe=observe)
    ok = worst[0] <= 1.0 + 1e-6
    return CriterionResult(
        3, "domination", ok,
        f"max k^(n)/kappa^n = {worst[0]:.12f} over {steps[0]} steps to t=2T={2 * T:.4g} (need <= 1+1e-6)",
        values={"worst": worst[0], "T": T},
    )


def criterion_fixed_point() -> CriterionResult:
    rho_star = homogeneous_fixed_point(1.0, 1.0)
    oracle = bisect_root(lambda r: r - math.exp(-r), 0.0, 1.0)
    grid = TorusGrid(8.0, 32, 1)
    phi = Potential("tophat", 0.5, 1.0)
    pm = phi_mean(phi, grid)
    run = integrate_vlasov(DensityField.constant(grid, 0.2), 1.0, phi, 1e-2, 30.0)
    dist = float(np.max(np.abs(run.final.values - homogeneous_fixed_point(1.0, pm))))
    ok = abs(rho_star - 0.5671433) <= 1e-6 and abs(rho_star - oracle) <= 1e-12 and dist <= 1e-6
    return CriterionResult(
        4, "kinetic fixed point", ok,
        f"rho*={rho_star:.10f} (bisection {oracle:.10f}), sup|rho(30)-rho*|={dist:.2e} (need <= 1e-6)",
        values={"rho_star": rho_star, "dist": dist},
    )


def picard_ratios(n_max: int = 8):
    grid = TorusGrid(8.0, 32, 1)
    phi = Potential("tophat", 1.0, 1.0)
    kappa = 1.0
    pm = phi_mean(phi, grid)
    T = -math.log1p(-0.5 / (kappa * pm))
    q = contraction_factor(kappa, pm, T)
    _, its = picard_iterates(DensityField.cosine(grid, 0.2, 0.5), kappa, phi, T, n_max, n_sub=128)
    diffs = [float(np.max(np.abs(its[n] - its[n - 1]))) for n in range(1, n_max + 1)]
    ratios = [diffs[i] / diffs[i - 1] for i in range(1, len(diffs))]
    return q, diffs, ratios


def criterion_picard() -> CriterionResult:
    q, diffs, ratios = picard_ratios()
    ok = abs(q - 0.5) < 1e-12 and max(ratios) <= 0.55
    return CriterionResult(
        5, "Picard contraction", ok,
        f"q(T)={q:.3f}, max ratio over n=2..8 = {max(ratios):.3f} (need <= 0.55)",
        values={"q": q, "ratios": ratios},
    )


def eps_convergence_data(eps_values=(0.4, 0.2, 0.1, 0.05), seed: int = ACCEPT_SEED):
    grid = TorusGrid(8.0, 16, 1)
    phi = Potential("tophat", 1.0, 1.0)
    kappa, alpha0, alpha = 0.5, 0.0, -1.0
    p = ScaleParams(kappa, alpha0, alpha)
    k = CorrelationVector.random(grid, 2, np.random.default_rng(seed), m_xi=2)
    spec = HierarchyOperatorSpec("L_V", kappa, phi, grid)
    pm = phi_mean(phi, grid)
    values = np.array([eps_difference_norm(k, spec, e, alpha) for e in eps_values])
    bounds = np.array([eps_convergence_bound(e, kappa, phi.sup, pm, p) * k.norm(alpha0) for e in eps_values])
    slope = float(np.polyfit(np.log(eps_values), np.log(values), 1)[0])
    return np.array(eps_values), values, bounds, slope


def criterion_eps_convergence() -> CriterionResult:
    _, values, bounds, slope = eps_convergence_data()
    ok = abs(slope - 1.0) <= 0.15 and bool(np.all(values <= bounds))
    return CriterionResult(
        6, "eps-convergence", ok,
        f"slope={slope:.3f} (need 1 +- 0.15), max value/bound = {np.max(values / bounds):.3e}",
        values={"slope": slope, "values": values, "bounds": bounds},
    )


def horizon_sweep(n_draws: int = 1000, seed: int = ACCEPT_SEED) -> int:
    """Number of random draws with ``T_tilde > T`` for ``c = c_phi_eps``."""
    rng = np.random.default_rng(seed)
    grid = TorusGrid(8.0, 32, 1)
    bad = 0
    for _ in range(n_draws):
        phi = Potential("tophat", float(rng.uniform(0.05, 3.0)), float(rng.uniform(0.3, 4.0)))
        eps = float(rng.uniform(1e-3, 2.0))
        alpha0 = float(rng.uniform(-3.0, 3.0))
        p = ScaleParams(float(rng.uniform(1e-3, 5.0)), alpha0, alpha0 - float(rng.uniform(1e-3, 5.0)))
        if vlasov_horizon(p, phi_mean(phi, grid)) > time_horizon(p, c_phi_eps(phi, grid, eps)):
            bad += 1
    return bad


def criterion_horizons() -> CriterionResult:
    T = time_horizon(ScaleParams(1.0, 0.0, 1.0), 1.0)
    exact = 1.0 / (1.0 + math.e**2)
    bad = horizon_sweep()
    ok = abs(T - exact) <= 1e-15 and T < t_star_upper(1.0, 1.0) and bad == 0
    return CriterionResult(
        7, "horizon formulas", ok,
        f"T={T:.17g} vs 1/(1+e^2) (diff {abs(T - exact):.1e}), T*={t_star_upper(1.0, 1.0):.6g}, "
        f"T_tilde>T in {bad}/1000 draws",
        values={"T": T, "bad": bad},
    )


def poisson_chisquare(counts, mean: float, min_expected: float = 5.0):
    """Pearson chi-square of integer counts against Poisson(``mean``), tails pooled."""
    counts = np.asarray(counts, dtype=int)
    n = len(counts)
    lo = int(stats.poisson.ppf(1e-6, mean))
    hi = int(stats.poisson.isf(1e-6, mean))
    edges = [lo]
    acc = 0.0
    for v in range(lo, hi + 1):
        acc += n * stats.poisson.pmf(v, mean)
        if acc >= min_expected:
            edges.append(v + 1)
            acc = 0.0
    edges[-1] = hi + 1
    cuts = np.array(edges[1:-1])
    probs = np.diff(np.concatenate([[0.0], stats.poisson.cdf(cuts - 1, mean), [1.0]]))
    observed = np.bincount(np.searchsorted(cuts, counts, side="right"), minlength=len(probs))
    return stats.chisquare(observed, probs * n)


def simulator_baseline(replicas: int = 400, seed: int = ACCEPT_SEED):
    grid = TorusGrid(10.0, 16, 1)
    p = SimParams(5.0, Potential.zero(), grid, 10.0, seed=seed, replicas=replicas)
    traces = run_replicas(FiniteConfiguration.empty(grid.L), p)
    counts = np.array([tr.counts[-1] for tr in traces])
    se = counts.std(ddof=1) / math.sqrt(len(counts))
    chi = poisson_chisquare(counts, 50.0)
    pc = estimate_pair_correlation(traces, grid)
    z = np.abs(pc.g - 1.0) / pc.se
    return counts, se, chi, pc, z


def criterion_simulator() -> CriterionResult:
    counts, se, chi, pc, z = simulator_baseline()
    mean_ok = abs(counts.mean() - 50.0) <= 3 * se
    ok = mean_ok and chi.pvalue > 0.01 and bool(np.all(z <= 3.0))
    return CriterionResult(
        8, "simulator baseline", ok,
        f"mean count {counts.mean():.2f} +- {se:.2f} (target 50), chi-square p={chi.pvalue:.3f}, "
        f"max |g-1|/SE={z.max():.2f} over {len(z)} bins",
        values={"mean": counts.mean(), "p": chi.pvalue, "zmax": float(z.max())},
    )


def scaling_sweep_rows(replicas: int = 20000, seed: int = ACCEPT_SEED, eps_list=(1.0, 0.5, 0.25)):
    grid = TorusGrid(8.0, 16, 1)
    base = SimParams(1.0, Potential("tophat", 1.0, 1.0), grid, 1.0, seed=seed, replicas=replicas,
                     snapshot_times=(0.5, 1.0))
    return vlasov_scaling_sweep(base, eps_list, DensityField.cosine(grid, 0.5, 0.5), dt=1e-3)


def sweep_monotone(rows) -> list[tuple[float, float, float, bool]]:
    """For each time and consecutive eps pair: (t, d_small - d_large, 2 SE, ok)."""
    checks = []
    for t in sorted({r.t for r in rows}):
        sel = sorted((r for r in rows if r.t == t), key=lambda r: -r.eps)
        for a, b in zip(sel, sel[1:]):
            tol = 2.0 * math.hypot(a.se, b.se)
            checks.append((t, b.sup_distance - a.sup_distance, tol, b.sup_distance <= a.sup_distance + tol))
    return checks


def criterion_scaling_sweep() -> CriterionResult:
    rows = scaling_sweep_rows()
    checks = sweep_monotone(rows)
    ok = all(c[3] for c in checks)
    dist = ", ".join(f"d(eps={r.eps:g},t={r.t:g})={r.sup_distance:.4f}" for r in rows)
    return CriterionResult(9, "scaling sweep", ok, dist, values={"rows": rows, "checks": checks})


def series_vs_rk4(seed: int = ACCEPT_SEED, n_terms: int = 14):
    grid = TorusGrid(8.0, 16, 1)
    phi = Potential("tophat", 1.0, 1.0)
    kappa, alpha0, alpha = 0.3, 0.0, -1.0
    p = ScaleParams(kappa, alpha0, alpha)
    t = 0.2 * vlasov_horizon(p, phi_mean(phi, grid))
    spec = HierarchyOperatorSpec("L_V", kappa, phi, grid)
    k0 = CorrelationVector.random(grid, 2, np.random.default_rng(seed), m_xi=2)
    series = ovsjannikov_series(k0, spec, t, n_terms)
    rk4 = integrate_hierarchy(k0, spec, t / 100, t, (alpha,), store_states=False).final
    return t, (series - rk4).norm(alpha)


def criterion_series() -> CriterionResult:
    t, diff = series_vs_rk4()
    ok = diff <= 1e-6
    return CriterionResult(10, "series vs RK4", ok, f"t={t:.4g}, ||series - rk4||_alpha = {diff:.2e} (need <= 1e-6)",
                           values={"diff": diff})


CRITERIA = (
    criterion_adjointness,
    criterion_chaos,
    criterion_domination,
    criterion_fixed_point,
    criterion_picard,
    criterion_eps_convergence,
    criterion_horizons,
    criterion_simulator,
    criterion_scaling_sweep,
    criterion_series,
)


def run_criterion(func) -> CriterionResult:
    start = time.perf_counter()
    res = func()
    res.runtime = time.perf_counter() - start
    return res


def run_acceptance(numbers=None, printer=print) -> list[CriterionResult]:
    results = []
    for i, func in enumerate(CRITERIA, 1):
        if numbers is not None and i not in numbers:
            continue
        res = run_criterion(func)
        results.append(res)
        if printer:
            printer(res.line())
    return results
