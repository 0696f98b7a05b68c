import csv
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glauberlab.bounds import ScaleParams, c_phi, t_star_upper, time_horizon, vlasov_horizon
from glauberlab.cli import content_hash, main
from glauberlab.config import DEFAULTS, ConfigError, RunConfig, parse_config, serialize
from glauberlab.model import Potential, TorusGrid


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_empty_config_is_defaults():
    assert parse_config("") == DEFAULTS
    assert parse_config("# only a comment\n\n") == DEFAULTS


@pytest.mark.parametrize(
    "text,key",
    [
        ("kappa=-1", "kappa"),
        ("n = 12", "n"),
        ("bogus = 3", "bogus"),
        ("dt = fast", "dt"),
        ("alphas = 0.5", "alphas"),
        ("eps_list = 0.5,1.0", "eps_list"),
        ("range = 5", "range"),
        ("snapshots = 2.0", "snapshots"),
        ("n_max = 4", "n_max"),
        ("solver = rk4\nsubcommand = vlasov", "solver"),
        ("quiet = maybe", "quiet"),
    ],
)
def test_errors_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key
    assert key in str(info.value)


def test_missing_equals_sign():
    with pytest.raises(ConfigError):
        parse_config("kappa 1")


def test_parse_values():
    c = parse_config("kappa = 0.5  # comment\nalphas = -1, -2\ncutoff = 1.5\nsnapshots=0.5,1\nquiet=true")
    assert c.kappa == 0.5 and c.alphas == (-1.0, -2.0) and c.cutoff == 1.5
    assert c.snapshot_times() == (0.5, 1.0) and c.quiet is True
    assert parse_config("cutoff = auto").cutoff is None


configs = st.builds(
    RunConfig,
    kappa=st.floats(1e-3, 10.0),
    eps=st.floats(1e-3, 2.0),
    alpha0=st.floats(-2.0, 2.0),
    dt=st.floats(1e-4, 0.5),
    t_end=st.floats(0.5, 5.0),
    amplitude=st.floats(0.0, 5.0),
    seed=st.integers(0, 2**40),
    replicas=st.integers(1, 1000),
    n=st.sampled_from([8, 16, 64]),
    closure=st.sampled_from(["zero", "product"]),
    quiet=st.booleans(),
)


@settings(max_examples=200)
@given(c=configs)
def test_serialize_round_trip(c):
    c = RunConfig(**{**c.__dict__, "alphas": (c.alpha0 - 1.0, c.alpha0 - 0.25)})
    text = serialize(c)
    again = parse_config(text)
    assert again == c
    assert serialize(again) == text


def test_bounds_cli_matches_library(tmp_path):
    out = tmp_path / "b"
    assert main(["bounds", "--out", str(out), "--quiet"]) == 0
    head, row = read_csv(out / "bounds.csv")
    vals = dict(zip(head, row))
    grid, phi = TorusGrid(8.0, 32), Potential("tophat", 1.0, 1.0)
    p = ScaleParams(DEFAULTS.kappa, DEFAULTS.alpha0, DEFAULTS.alphas[0])
    cp = c_phi(phi, grid)
    assert float(vals["T_horizon"]) == time_horizon(p, cp)
    assert float(vals["T_tilde"]) == vlasov_horizon(p, 2.0)
    assert float(vals["T_star_upper"]) == t_star_upper(DEFAULTS.kappa, cp)
    eps = read_csv(out / "bounds_eps.csv")
    assert eps[0] == ["alpha", "eps", "c_phi_eps", "norm_L_eps_ren", "eps_convergence_bound"]
    assert len(eps) == 1 + len(DEFAULTS.eps_list)


def test_manifest_reproduces_run(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["vlasov", "--out", str(a), "--t-end", "0.5", "--rho0-modulation", "0.5", "--quiet"]) == 0
    manifest = (a / "manifest.txt").read_text()
    assert "content_hash" in manifest and "version" in manifest and "seed = " in manifest
    cfg = tmp_path / "m.txt"
    cfg.write_text(manifest)
    assert main(["vlasov", "--config", str(cfg), "--out", str(b), "--quiet"]) == 0
    assert (a / "vlasov.csv").read_bytes() == (b / "vlasov.csv").read_bytes()
    assert read_csv(a / "vlasov.csv")[0] == ["t", "sup_rho", "min_rho", "mass", "fixed_point_residual"]
    body = manifest.split("\n", 3)[3]
    assert content_hash(body) in manifest


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("kappa = 0.9\nt_end = 0.3\n")
    out = tmp_path / "o"
    assert main(["vlasov", "--config", str(cfg), "--kappa", "0.4", "--out", str(out), "--quiet"]) == 0
    m = parse_config((out / "manifest.txt").read_text())
    assert m.kappa == 0.4 and m.t_end == 0.3


def test_simulate_is_reproducible(tmp_path):
    args = ["simulate", "--kappa", "1", "--t-end", "1", "--replicas", "20", "--seed", "5", "--quiet"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("density.csv", "pairs.csv", "counts.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert read_csv(tmp_path / "a" / "density.csv")[0] == ["node", "mean", "se"]
    assert read_csv(tmp_path / "a" / "pairs.csv")[0] == ["r_low", "r_high", "g", "se"]
    assert len(read_csv(tmp_path / "a" / "pairs.csv")) == 65


def test_hierarchy_and_sweep_columns(tmp_path):
    out = tmp_path / "h"
    assert main(["hierarchy", "--out", str(out), "--n", "16", "--t-end", "0.05", "--alphas=-1,-2",
                 "--operator", "L_V", "--closure", "product", "--quiet"]) == 0
    rows = read_csv(out / "hierarchy.csv")
    assert rows[0] == ["t", "norm_alpha_-1.0", "norm_alpha_-2.0", "domination_margin", "chaos_deviation"]
    assert len(rows) == 7
    out = tmp_path / "s"
    assert main(["hierarchy", "--out", str(out), "--n", "16", "--t-end", "0.05", "--solver", "series",
                 "--quiet"]) == 0
    series = read_csv(out / "hierarchy.csv")
    rk4 = tmp_path / "r"
    main(["hierarchy", "--out", str(rk4), "--n", "16", "--t-end", "0.05", "--quiet"])
    assert float(series[-1][1]) == pytest.approx(float(read_csv(rk4 / "hierarchy.csv")[-1][1]), rel=1e-9)
    out = tmp_path / "w"
    assert main(["scaling-sweep", "--out", str(out), "--n", "16", "--replicas", "10", "--t-end", "0.5",
                 "--quiet"]) == 0
    assert read_csv(out / "sweep.csv")[0] == ["eps", "t", "sup_distance", "se"]


def test_exit_codes(tmp_path, capsys):
    assert main(["bounds", "--kappa", "-1", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("ERROR") and "key=kappa" in err
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err
    assert main(["bounds", "--config", str(tmp_path / "missing.txt")]) == 2
    # runtime failure: cap exceeded in the simulator
    cfg = tmp_path / "c.txt"
    cfg.write_text("kappa = 0.1\nrho0 = 5\n")
    assert main(["simulate", "--config", str(cfg), "--eps", "0.001", "--replicas", "1", "--t-end", "0.1",
                 "--out", str(tmp_path / "x"), "--quiet"]) == 1
    assert "CapExceeded" in capsys.readouterr().err


def test_accept_subcommand(tmp_path, monkeypatch, capsys):
    import glauberlab.acceptance as acc

    monkeypatch.setattr(acc, "CRITERIA", (acc.criterion_horizons, acc.criterion_fixed_point))
    assert main(["accept", "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and all(line.startswith("PASS") for line in lines)
    assert read_csv(tmp_path / "acceptance.csv")[0] == ["criterion", "passed", "runtime_s"]
