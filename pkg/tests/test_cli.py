import math

import pytest

from groupnoise import experiments as E
from groupnoise import measures as M
from groupnoise import report as R
from groupnoise.cli import main

EXACT = """\
# exact l1 on the line
kind = exact-l1
group = Z
measure = lazy
rho = 0.3, 0.6
n = 1, 4, 9
"""

MC = """\
kind = avg-distance
group = F2
rho = 0.2
n = 50, 100
reps = 700
seed = 5
"""


def write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- config --------------------------------------------------------------------
def test_parse_config_and_overrides():
    cfg = E.parse_config(EXACT, ["n = 2,3", "seed=7"])
    assert cfg.kind == "exact-l1" and cfg.group == "Z" and cfg.measure == "lazy"
    assert cfg.rho == [0.3, 0.6] and cfg.n == [2, 3] and cfg.seed == 7
    again = E.parse_config(E.dump_config(cfg))
    assert again == cfg


@pytest.mark.parametrize("bad", [
    "n =", "n = 4, 2", "n = 3, 3", "rho = 1.5", "foo = 1", "kind = nonsense", "reps = x",
    "target = both", "just words",
])
def test_config_errors(bad):
    with pytest.raises(E.ConfigError):
        E.parse_config(EXACT + bad + "\n")


def test_mc_kinds_need_two_reps():
    with pytest.raises(E.ConfigError):
        E.parse_config(MC, ["reps = 1"])
    E.parse_config(EXACT, ["reps = 1"])


def test_missing_kind():
    with pytest.raises(E.ConfigError):
        E.parse_config("group = Z\n")


def test_presets_exist():
    for name in ("dihedral-dichotomy", "abelian-entropy", "lamplighter-ens",
                 "grigorchuk-partial-ens", "finite-mixing", "free-group-witness"):
        assert E.preset(name)
    with pytest.raises(E.ConfigError):
        E.preset("nope")


def test_dihedral_preset_measures():
    simple, lazy = E.preset("dihedral-dichotomy")
    a, b = (0, -1), (1, -1)
    assert dict(E.build_measure(simple).items()) == {a: 0.5, b: 0.5}
    lz = dict(E.build_measure(lazy).items())
    assert set(lz) == {(0, 1), a, b} and all(m == pytest.approx(1 / 3) for m in lz.values())
    assert simple.rho == lazy.rho == [0.3] and simple.n == [256, 1024, 4096]


def test_custom_atoms_measure(tmp_path):
    mu = M.SparseMeasure(M.simple_measure(E.G.Lattice(1)).group, {(1,): 0.7, (-2,): 0.3})
    path = tmp_path / "atoms.tsv"
    M.write_atoms(mu, path)
    cfg = E.parse_config(EXACT, [f"measure = atoms:{path}"])
    assert dict(E.build_measure(cfg).items()) == dict(mu.items())
    with pytest.raises(E.ConfigError):
        E.build_measure(E.parse_config(EXACT, [f"measure = atoms:{tmp_path / 'missing'}"]))


# -- runner ------------------------------------------------------------------
def test_finite_mixing_decreasing():
    rows = [r for c in E.preset("finite-mixing") for r in E.run_experiment(c)]
    vals = [r.value for r in rows]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert all(r.stderr is None and r.reps is None for r in rows)


def test_exact_rows_are_bit_stable():
    cfg = E.parse_config(EXACT)
    assert E.run_experiment(cfg) == E.run_experiment(cfg)


@pytest.mark.parametrize("kind,extra", [
    ("entropy-ns", []), ("u-scale", ["scales = 1, 3"]), ("homogeneity", ["eps = 0.1"]),
    ("tv-event", ["group = D_inf", "event = same-sheet", "reps = 300"]),
    ("speed", ["reps = 300"]), ("avg-distance", ["reps = 300"]),
    ("lamplighter", ["group = lamplighter", "measure = sws", "reps = 300"]),
    ("grigorchuk", ["reps = 50"]),
])
def test_every_kind_runs(kind, extra):
    cfg = E.parse_config(EXACT, [f"kind = {kind}"] + extra)
    rows = E.run_experiment(cfg)
    assert rows and all(math.isfinite(r.value) for r in rows)
    assert all(r.kind == kind for r in rows)


def test_kind_group_mismatch():
    with pytest.raises(E.ConfigError):
        E.run_experiment(E.parse_config(EXACT, ["kind = lamplighter", "reps = 300"]))
    with pytest.raises(E.ConfigError):
        E.run_experiment(E.parse_config(EXACT, ["measure = sws"]))
    with pytest.raises(E.ConfigError):
        E.run_experiment(E.parse_config(EXACT, ["target = uniform"]))


# -- report ------------------------------------------------------------------
ROWS = [
    R.ReportRow("exact-l1", "Z[lazy]", 0.3, 4, "l1_product", 0.123456789012345678),
    R.ReportRow("avg-distance", "F2[simple]", 0.2, 50, "distance_ratio", 0.98, 0.01, 700, 5, 12),
    R.ReportRow("grigorchuk", "g", 0.05, None, "rho1[d0=2]", 1e-300, None, None, 1, None),
]


def test_csv_layout():
    text = R.to_csv(ROWS[:1])
    lines = text.split("\n")
    assert lines[0] == "kind,group,rho,n,metric,value,stderr,reps,seed,wall_ms"
    assert lines[1] == "exact-l1,Z[lazy],0.3,4,l1_product,0.12345678901234568,,,,"
    assert "\r" not in text and text.endswith("\n")


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_round_trip(fmt, tmp_path):
    path = R.emit_report(ROWS, tmp_path / f"out.{fmt}", fmt)
    assert R.parse(path.read_text(encoding="utf-8"), fmt) == ROWS
    assert b"\r\n" not in path.read_bytes()


def test_emit_report_errors(tmp_path):
    with pytest.raises(ValueError):
        R.emit_report([], tmp_path / "x.csv")
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        R.emit_report(ROWS, blocker / "sub" / "x.csv")


def test_plot_rows(tmp_path):
    assert R.plot_rows(ROWS, tmp_path / "fig.png").stat().st_size > 0
    assert R.plot_rows([ROWS[2]], tmp_path / "none.png") is None


# -- command line ----------------------------------------------------------------
def test_cli_run_csv_and_figure(tmp_path, capsys):
    cfg = write(tmp_path, EXACT)
    out = tmp_path / "res" / "exact.csv"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    rows = R.from_csv(out.read_text())
    assert len(rows) == 6 and all(r.wall_ms is None for r in rows)
    assert out.with_suffix(".png").exists()
    out2 = tmp_path / "plain.csv"
    assert main(["run", str(cfg), "--out", str(out2), "--no-plot", "--timing"]) == 0
    assert not out2.with_suffix(".png").exists()
    assert all(r.wall_ms is not None for r in R.from_csv(out2.read_text()))


def test_cli_stdout_json(tmp_path, capsys):
    cfg = write(tmp_path, EXACT)
    assert main(["run", str(cfg), "--format", "json", "--set", "n=2"]) == 0
    rows = R.from_json(capsys.readouterr().out)
    assert [r.n for r in rows] == [2, 2]


def test_cli_byte_identical_across_threads(tmp_path, monkeypatch):
    cfg = write(tmp_path, MC)
    blobs = []
    for t in ("1", "2", "2"):
        monkeypatch.setenv("GROUPNOISE_THREADS", t)
        out = tmp_path / f"mc{len(blobs)}.csv"
        assert main(["run", str(cfg), "--out", str(out), "--no-plot"]) == 0
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1] == blobs[2]
    out = tmp_path / "seeded.csv"
    assert main(["run", str(cfg), "--out", str(out), "--no-plot", "--seed", "6"]) == 0
    assert out.read_bytes() != blobs[0]


def test_cli_config_out_key(tmp_path):
    target = tmp_path / "from_cfg.csv"
    cfg = write(tmp_path, EXACT + f"out = {target}\n")
    assert main(["run", str(cfg), "--no-plot"]) == 0
    assert target.exists()


def test_cli_exit_codes(tmp_path, capsys):
    cfg = write(tmp_path, EXACT)
    assert main(["run", str(cfg), "--set", "n="]) == 2
    assert "empty n schedule" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg")]) == 2
    assert main(["run", str(cfg), "--set", "budget=20", "--set", "n=50"]) == 3
    err = capsys.readouterr().err
    assert "budget" in err and "last completed n" in err
    assert main(["preset", "no-such-preset"]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", str(cfg), "--out", str(blocker / "x.csv")]) == 2


def test_cli_presets_listing(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "dihedral-dichotomy" in out and "finite-mixing" in out


def test_cli_preset_run(tmp_path):
    out = tmp_path / "fm.csv"
    assert main(["preset", "finite-mixing", "--out", str(out)]) == 0
    rows = R.from_csv(out.read_text())
    assert [r.n for r in rows] == [25, 50, 100, 150, 200]
    assert out.with_suffix(".png").exists()
