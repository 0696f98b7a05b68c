"""Command-line entry point: ``glauberlab <subcommand> [--config PATH] [--key value ...]``.

Every config key has a flag (``--t-end`` for ``t_end``); flags override the
file. Exit status 0 on success, 1 on numeric/runtime failure, 2 on usage or
config errors. Failures print a single ``ERROR`` line to stderr.
"""
from __future__ import annotations

import argparse
import hashlib
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import bound_report
from .config import KEYS, SUBCOMMANDS, ConfigError, RunConfig, apply_overrides, parse_config, serialize, validate
from .hierarchy import (
    HierarchyOperatorSpec,
    chaos_deviation,
    integrate_hierarchy,
    product_state,
    series_terms,
)
from .model import FiniteConfiguration
from .sim import SWEEP_COLUMNS, SimParams, estimate_density, estimate_pair_correlation, run_replicas, vlasov_scaling_sweep
from .vlasov import DensityField, KineticRun, integrate_vlasov, solve_vlasov


def content_hash(text: str) -> str:
    """Git blob hash (SHA-1 over ``"blob <len>\\0" + content``)."""
    data = text.encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")


def write_manifest(out: Path, config: RunConfig) -> Path:
    body = serialize(config)
    text = (
        f"# glauberlab run manifest\n# version = {__version__}\n"
        f"# content_hash = {content_hash(body)}\n{body}"
    )
    path = out / "manifest.txt"
    path.write_text(text, encoding="utf-8")
    return path


def _rho0(c: RunConfig) -> DensityField:
    return DensityField.cosine(c.grid(), c.rho0, c.rho0_modulation)


def _say(c: RunConfig, msg: str) -> None:
    if not c.quiet:
        print(msg)


def run_bounds(c: RunConfig, out: Path) -> None:
    rows, eps_rows, texts = [], [], []
    for alpha in c.alphas:
        rep = bound_report(c.potential_obj(), c.grid(), c.scale_params(alpha), c.eps_list)
        rows.append(rep.row())
        eps_rows.extend([[alpha] + r for r in rep.eps_rows()])
        texts.append(rep.text())
    write_csv(out / "bounds.csv", rep.CSV_COLUMNS, rows)
    write_csv(out / "bounds_eps.csv", ("alpha",) + rep.EPS_CSV_COLUMNS, eps_rows)
    _say(c, "\n\n".join(texts))


def run_vlasov(c: RunConfig, out: Path) -> None:
    run = solve_vlasov(
        _rho0(c), c.kappa, c.potential_obj(), c.dt, c.t_end, c.resolved_solver(), c.picard_iters
    )
    write_csv(out / "vlasov.csv", KineticRun.CSV_COLUMNS, run.rows())
    grid = c.grid()
    final = run.fields[-1].ravel()
    write_csv(out / "vlasov_final.csv", ("node", "rho"), [(i, v) for i, v in enumerate(final)])
    _say(c, f"t={run.times[-1]:.6g} sup={run.sup[-1]:.10g} min={run.min[-1]:.10g} "
            f"residual={run.residual[-1]:.3e} (grid n={grid.n}, solver={run.solver})")


def run_hierarchy(c: RunConfig, out: Path) -> None:
    grid, phi = c.grid(), c.potential_obj()
    rho0 = _rho0(c)
    k0 = product_state(rho0, c.n_max, c.closure, c.m_xi)
    spec = HierarchyOperatorSpec(c.operator, c.kappa, phi, grid, c.eps if c.operator == "L_eps_ren" else None)
    kinetic = integrate_vlasov(rho0, c.kappa, phi, c.dt, c.t_end)
    times = kinetic.times
    if c.resolved_solver() == "series":
        terms = series_terms(k0, spec, 1.0, c.n_terms)
        states = []
        for t in times:
            total = terms[0]
            for m, term in enumerate(terms[1:], 1):
                total = total + term * t**m
            states.append(total)
    else:
        states = integrate_hierarchy(k0, spec, c.dt, c.t_end, c.alphas).states
    rows = []
    for t, k, rho in zip(times, states, kinetic.fields):
        # margin is 1 - max_{n>=1} k^(n)/kappa^n, negative once domination fails
        worst = max((float(np.max(tab)) / c.kappa**n for n, tab in enumerate(k.tables) if n), default=0.0)
        rows.append(
            [t] + [k.norm(a) for a in c.alphas]
            + [1.0 - worst, chaos_deviation(k, DensityField(grid, rho), c.alphas[0])]
        )
    cols = ["t"] + [f"norm_alpha_{a!r}" for a in c.alphas] + ["domination_margin", "chaos_deviation"]
    write_csv(out / "hierarchy.csv", cols, rows)
    _say(c, f"t={times[-1]:.6g} norm={rows[-1][1]:.10g} domination_margin={rows[-1][-2]:.6g} "
            f"chaos_deviation={rows[-1][-1]:.3e}")


def _sim_params(c: RunConfig) -> SimParams:
    return SimParams(
        c.kappa, c.potential_obj(), c.grid(), c.t_end, c.eps, c.seed, c.replicas, c.snapshot_times(),
        pair_bins=c.pair_bins,
    )


def run_simulate(c: RunConfig, out: Path) -> None:
    p = _sim_params(c)
    gamma0 = _rho0(c) if c.rho0 > 0 else FiniteConfiguration.empty(c.L, c.d)
    traces = run_replicas(gamma0, p, c.workers)
    mean, se = estimate_density(traces, p.grid, -1)
    write_csv(out / "density.csv", ("node", "mean", "se"),
              [(i, m, s) for i, (m, s) in enumerate(zip(mean.values.ravel(), se.ravel()))])
    try:
        pc = estimate_pair_correlation(traces, p.grid, snapshot=-1)
        pair_rows = list(zip(pc.edges[:-1], pc.edges[1:], pc.g, pc.se))
    except ValueError:
        edges = p.pair_edges()
        pair_rows = [(a, b, math.nan, math.nan) for a, b in zip(edges[:-1], edges[1:])]
    write_csv(out / "pairs.csv", ("r_low", "r_high", "g", "se"), pair_rows)
    write_csv(
        out / "counts.csv",
        ("replica", "t", "count"),
        [(tr.replica, t, n) for tr in traces for t, n in zip(tr.times, tr.counts)],
    )
    write_csv(
        out / "events.csv",
        ("replica", "deaths", "births_accepted", "births_rejected"),
        [(tr.replica, tr.deaths, tr.births_accepted, tr.births_rejected) for tr in traces],
    )
    final = np.array([tr.counts[-1] for tr in traces], dtype=float)
    _say(c, f"replicas={len(traces)} mean_count={final.mean():.6g} density_mean={mean.values.mean():.6g}")


def run_sweep(c: RunConfig, out: Path) -> None:
    rows = vlasov_scaling_sweep(_sim_params(c), c.eps_list, _rho0(c), c.dt, c.workers)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, [(r.eps, r.t, r.sup_distance, r.se) for r in rows])
    for r in rows:
        _say(c, f"eps={r.eps:<8g} t={r.t:<8g} sup_distance={r.sup_distance:.6g} se={r.se:.3g}")


def run_accept(c: RunConfig, out: Path) -> int:
    from .acceptance import CRITERIA, run_acceptance

    results = run_acceptance(printer=None if c.quiet else print)
    write_csv(
        out / "acceptance.csv",
        ("criterion", "passed", "runtime_s"),
        [(r.number, r.passed, r.runtime) for r in results],
    )
    with open(out / "acceptance.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(r.line() for r in results) + "\n")
    return 0 if len(results) == len(CRITERIA) and all(r.passed for r in results) else 1


DISPATCH = {
    "bounds": run_bounds,
    "vlasov": run_vlasov,
    "hierarchy": run_hierarchy,
    "simulate": run_simulate,
    "scaling-sweep": run_sweep,
    "accept": run_accept,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glauberlab", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", metavar="PATH", help="key = value configuration file")
    parser.add_argument("--quiet", action="store_true", help="suppress the stdout summary")
    for key in KEYS:
        if key in ("subcommand", "quiet"):
            continue
        parser.add_argument("--" + key.replace("_", "-"), dest=key, metavar="VALUE", default=None)
    return parser


def _error(kind: str, key: str | None, message: str) -> None:
    key_part = f" key={key}" if key else ""
    print(f"ERROR kind={kind}{key_part} message={message}", file=sys.stderr)


def load_config(args: argparse.Namespace) -> RunConfig:
    text = ""
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
    config = parse_config(text, validate_result=False)
    overrides = {k: getattr(args, k) for k in KEYS if k not in ("subcommand", "quiet") and getattr(args, k) is not None}
    overrides["subcommand"] = args.subcommand
    if args.quiet:
        overrides["quiet"] = "true"
    return validate(apply_overrides(config, overrides))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
    except ConfigError as exc:
        _error("config", exc.key, exc.message)
        return 2
    except OSError as exc:
        _error("config", "config", str(exc))
        return 2
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out, config)
        status = DISPATCH[config.subcommand](config, out)
    except (ValueError, RuntimeError, ArithmeticError, OSError) as exc:
        _error(type(exc).__name__, None, str(exc))
        return 1
    return int(status or 0)


if __name__ == "__main__":
    sys.exit(main())
