import csv
import re

import numpy as np
import pytest

from mlcomp import cli
from mlcomp.plot import line_plot_svg
from mlcomp.problem import SmoothLevel
from mlcomp.runner import COLUMNS


def _run(argv, capsys=None):
    code = cli.main(argv)
    out = capsys.readouterr() if capsys is not None else None
    return code, out


def test_run_spec_example(tmp_path, capsys):
    out = tmp_path / "runs" / "a.csv"
    code, _ = _run(["run", "--algo", "dsmcgdm", "--topology", "ring", "--nodes", "4", "--problem",
                    "quadratic_maml", "--inner-steps", "3", "--from-corollary", "1",
                    "--epsilon-sq", "0.1", "--seeds", "5", "--out", str(out)], capsys)
    assert code == 0
    for k in range(5):
        with open(tmp_path / "runs" / f"a_dsmcgdm_seed{k}.csv") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == COLUMNS
        assert rows[-1][0] == "225"
    assert (tmp_path / "runs" / "a_summary.csv").exists()
    assert "epsilon = 0.31622776601683794" in (tmp_path / "runs" / "a_config.txt").read_text()


def test_single_run_writes_exact_path(tmp_path, capsys):
    out = tmp_path / "x.csv"
    code, _ = _run(["run", "--nodes", "1", "--topology", "complete", "--T", "20",
                    "--out", str(out)], capsys)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(COLUMNS) and lines[-1].startswith("20,")


def test_config_echo_reproduces_csv(tmp_path, capsys):
    a = tmp_path / "a" / "r.csv"
    _run(["run", "--algo", "dsmcvrg", "--algo", "dsgd", "--problem", "tanh_chain", "--delta",
          "0.2", "--sigma", "0.1,0.2,0.3", "--T", "25", "--eta", "0.2", "--seeds", "2",
          "--stride", "3", "--out", str(a)], capsys)
    b = tmp_path / "b" / "r.csv"
    code, _ = _run(["run", "--config", str(tmp_path / "a" / "r_config.txt"), "--out", str(b)],
                   capsys)
    assert code == 0
    names = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert len(names) == 5
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_flags_override_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("# comment\nT = 40\nproblem = \"tanh_chain\"\nstride = 40\n")
    out = tmp_path / "o.csv"
    assert _run(["run", "--config", str(cfg), "--T", "8", "--stride", "8", "--out", str(out)],
                capsys)[0] == 0
    assert [line.split(",")[0] for line in out.read_text().splitlines()[1:]] == ["0", "8"]
    assert "problem = tanh_chain" in (tmp_path / "o_config.txt").read_text()


def test_default_out_from_config_hash(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    _, out1 = _run(["run", "--T", "5"], capsys)
    _, out2 = _run(["run", "--T", "5"], capsys)
    _, out3 = _run(["run", "--T", "6"], capsys)
    first = out1.out.splitlines()[0]
    assert re.fullmatch(r"runs/[0-9a-f]{12}\.csv", first)
    assert first == out2.out.splitlines()[0] != out3.out.splitlines()[0]


def test_seed_env_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("MLCOMP_SEED", "4")
    _run(["run", "--T", "3", "--seeds", "2", "--out", str(tmp_path / "s.csv")], capsys)
    assert (tmp_path / "s_dsmcgdm_seed4.csv").exists()
    assert (tmp_path / "s_dsmcgdm_seed5.csv").exists()
    monkeypatch.setenv("MLCOMP_SEED", "abc")
    assert _run(["run", "--T", "3", "--out", str(tmp_path / "t.csv")], capsys)[0] == 2


def test_plot_written_for_multiple_algorithms(tmp_path, capsys):
    out = tmp_path / "p.csv"
    code, _ = _run(["run", "--algo", "dsmcgdm", "--algo", "dsmcvrg", "--algo", "dsgd", "--T", "30",
                    "--eta", "0.2", "--delta", "0.1", "--plot", "--out", str(out)], capsys)
    assert code == 0
    svg = (tmp_path / "p.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<polyline") == 3


def test_plot_svg_drops_nonpositive():
    svg = line_plot_svg({"a": ([0, 1, 2], [1.0, 0.0, 0.1]), "b": ([0], [float("nan")])})
    assert svg.count("<polyline") == 1
    assert line_plot_svg({}).endswith("</svg>")


@pytest.mark.parametrize("argv", [
    ["run", "--bogus"],
    ["run", "--config", "/nonexistent/cfg.txt"],
    ["run", "--T", "abc"],
    ["run", "--algo", "adam"],
    ["run", "--eta", "2.0"],
    ["run", "--from-corollary", "1"],
    ["run", "--epsilon", "0.1", "--epsilon-sq", "0.01"],
    ["run", "--topology", "star"],
    ["frobnicate"],
    ["verify", "--gate", "nope"],
])
def test_usage_errors_exit_2(argv, capsys):
    code, out = _run(argv, capsys)
    assert code == 2
    assert out.err


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, out = _run(["run", "--T", "2", "--out", str(blocker / "x.csv")], capsys)
    assert code == 2 and "cannot write" in out.err


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("colour = blue\n")
    assert _run(["run", "--config", str(cfg)], capsys)[0] == 2


def test_topology_command(tmp_path, capsys):
    code, out = _run(["topology", "--ring", "--nodes", "4"], capsys)
    assert code == 0 and "spectral_gap = 0.666666666666666" in out.out
    _, out = _run(["topology", "--complete", "--nodes", "8"], capsys)
    gap = float(out.out.strip().splitlines()[-1].split("=")[1])
    assert gap == pytest.approx(1.0, abs=1e-12)
    argv = ["topology", "--random", "--nodes", "4", "--edge-prob", "0.4", "--seed", "7",
            "--csv", str(tmp_path / "w.csv")]
    _, a = _run(argv, capsys)
    _, b = _run(argv, capsys)
    assert a.out == b.out
    W = np.loadtxt(tmp_path / "w.csv", delimiter=",")
    np.testing.assert_allclose(W.sum(axis=1), 1.0)


def test_verify_single_gate(capsys):
    code, out = _run(["verify", "--gate", "tracking"], capsys)
    assert code == 0
    rows = out.out.splitlines()[1:]
    assert len(rows) == 1 and rows[0].startswith("tracking") and "pass" in rows[0]


def test_verify_clean_build(capsys):
    code, out = _run(["verify", "--skip-slow"], capsys)
    assert code == 0
    assert "FAIL" not in out.out


def test_verify_detects_jacobian_bug(capsys, monkeypatch):
    original = SmoothLevel._clean_jac
    monkeypatch.setattr(SmoothLevel, "_clean_jac", lambda self, u: 1.01 * original(self, u))
    code, out = _run(["verify", "--gate", "fd"], capsys)
    assert code == 1 and "FAIL" in out.out
