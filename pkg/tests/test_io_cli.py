import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from hjbmaxplus import cli
from hjbmaxplus.errors import ParseError
from hjbmaxplus.io import (atomic_write_text, bundled_instance, csv_text, load_instance,
                           load_value, save_instance, save_value, value_from_dict)
from hjbmaxplus.problem import derive_constants
from hjbmaxplus.propagation import MaxPlusValue, PruneConfig, solve


@pytest.fixture
def scalar_file(tmp_path):
    path = tmp_path / "scalar.json"
    save_instance(bundled_instance("scalar"), path)
    return path


@pytest.fixture
def bad_file(tmp_path):
    # assumption 1 fails: D far above the stabilizable range
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"gamma": 1.0, "modes": [
        {"A": [[-1.0]], "sigma": [[0.5]], "D": [[5.0]]}]}))
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


class TestInstanceFiles:
    def test_bundled_instances_pass(self):
        for name in ("scalar", "standard_2d"):
            assert derive_constants(bundled_instance(name)).assumptions_ok
        inst = bundled_instance("standard_2d")
        assert (inst.n, inst.num_modes) == (2, 3)

    def test_round_trip(self, tmp_path):
        inst = bundled_instance("standard_2d")
        save_instance(inst, tmp_path / "i.json")
        again = load_instance(tmp_path / "i.json")
        for a, b in zip(inst.modes, again.modes):
            assert np.array_equal(a.A, b.A) and np.array_equal(a.D, b.D)

    def test_symmetrizes_cost(self, tmp_path):
        path = tmp_path / "i.json"
        path.write_text(json.dumps({"gamma": 1, "modes": [
            {"A": [[-1, 0], [0, -1]], "sigma": [[1, 0], [0, 1]], "D": [[1, 0.2], [0.4, 1]]}]}))
        assert load_instance(path).modes[0].D[0, 1] == pytest.approx(0.3)

    @pytest.mark.parametrize("text, fragment", [
        ("{", "line 1"),
        ('{"modes": []}', "gamma"),
        ('{"gamma": 1, "modes": [{"A": [[1, 2]], "sigma": [[1]], "D": [[1]]}]}', "square"),
        ('{"gamma": 1, "modes": [{"A": [[-1]], "sigma": [[1]], "D": [["x"]]}]}', "D"),
    ])
    def test_parse_errors(self, tmp_path, text, fragment):
        path = tmp_path / "i.json"
        path.write_text(text)
        with pytest.raises(ParseError, match=fragment):
            load_instance(path)

    def test_unknown_bundled(self):
        with pytest.raises(ParseError):
            bundled_instance("nope")


class TestValueFiles:
    def test_bitwise_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        P = rng.standard_normal((5, 2, 2))
        V = MaxPlusValue(P + np.swapaxes(P, 1, 2), [(0, 1), (2,), (), (1, 1, 1), (0,)])
        save_value(V, tmp_path / "v.json")
        W = load_value(tmp_path / "v.json")
        assert np.array_equal(V.P, W.P) and V.words == W.words

    def test_schema(self):
        with pytest.raises(ParseError):
            value_from_dict({"dim": 2, "quadratics": []})
        with pytest.raises(ParseError):
            value_from_dict({"dim": 2, "quadratics": [{"P": [[1.0]]}]})


class TestAtomicWrite:
    def test_replaces_whole_file(self, tmp_path):
        path = tmp_path / "out.txt"
        atomic_write_text(path, "old\n")
        atomic_write_text(path, "new\n")
        assert path.read_text() == "new\n"
        assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]

    def test_failure_leaves_original(self, tmp_path, monkeypatch):
        path = tmp_path / "out.txt"
        atomic_write_text(path, "keep\n")

        def boom(*a, **k):
            raise OSError("disk full")

        monkeypatch.setattr(os, "replace", boom)
        with pytest.raises(OSError):
            atomic_write_text(path, "lost\n")
        assert path.read_text() == "keep\n"
        assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]

    def test_csv_floats(self):
        text = csv_text(("a", "b"), [(1, 0.1), (2, None)])
        assert text.splitlines() == ["a,b", "1,0.10000000000000001", "2,"]


class TestCheck:
    def test_ok(self, scalar_file, capsys):
        assert run("check", scalar_file) == 0
        out = capsys.readouterr().out
        line = next(l for l in out.splitlines() if l.startswith("lambda1:"))
        assert float(line.split()[-1]) == pytest.approx(4 - 13 ** 0.5, abs=1e-15)

    def test_bundled_name(self, capsys):
        assert run("check", "standard_2d") == 0

    def test_assumption_failure(self, bad_file):
        assert run("check", bad_file) == 1

    def test_parse_error(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text("[1, 2")
        assert run("check", path) == 2

    def test_unknown_flag(self, scalar_file):
        with pytest.raises(SystemExit) as info:
            run("check", scalar_file, "--bogus")
        assert info.value.code == 2

    def test_help(self, capsys):
        with pytest.raises(SystemExit) as info:
            run("--help")
        assert info.value.code == 0
        assert "solve" in capsys.readouterr().out


class TestSolveCommand:
    def test_zero_steps_round_trip(self, scalar_file, tmp_path):
        out = tmp_path / "run"
        assert run("solve", scalar_file, "--tau", 0.1, "--steps", 0, "--out", out) == 0
        V = load_value(out / "value.json")
        c = derive_constants(bundled_instance("scalar"))
        assert np.array_equal(V.P, [[[c.epsilon]]])
        lines = (out / "report.csv").read_text().splitlines()
        assert lines[0] == "iteration,T,basis_size,pruned,residual" and len(lines) == 2
        assert json.loads((out / "config.json").read_text())["steps"] == 0

    def test_refuses_bad_instance(self, bad_file, tmp_path):
        assert run("solve", bad_file, "--tau", 0.1, "--steps", 1, "--out", tmp_path) == 1

    def test_unchecked_runs(self, bad_file, tmp_path):
        code = run("solve", bad_file, "--tau", 0.1, "--steps", 1, "--out", tmp_path,
                   "--unchecked")
        assert code in (0, 4)

    def test_bad_tau(self, scalar_file):
        with pytest.raises(SystemExit) as info:
            run("solve", scalar_file, "--tau", -1, "--steps", 1)
        assert info.value.code == 2

    def test_basis_cap_exit(self, tmp_path):
        code = run("solve", "standard_2d", "--tau", 0.05, "--steps", 8, "--prune", "none",
                   "--basis-cap", 50, "--out", tmp_path)
        assert code == 3

    def test_deterministic_across_threads(self, tmp_path):
        outs = []
        for threads in (1, 3):
            out = tmp_path / f"t{threads}"
            assert run("solve", "standard_2d", "--tau", 0.02, "--steps", 20, "--prune", "cover",
                       "--grid-points", 11, "--threads", threads, "--out", out) == 0
            outs.append(out)
        for name in ("value.json", "report.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_v0_from_file(self, tmp_path):
        c = derive_constants(bundled_instance("standard_2d"))
        save_value(MaxPlusValue.scalar_identity(c.epsilon, 2), tmp_path / "v0.json")
        assert run("solve", "standard_2d", "--tau", 0.1, "--steps", 1, "--v0",
                   tmp_path / "v0.json", "--out", tmp_path / "o") == 0
        save_value(MaxPlusValue.scalar_identity(1.0, 3), tmp_path / "v3.json")
        assert run("solve", "standard_2d", "--tau", 0.1, "--steps", 1, "--v0",
                   tmp_path / "v3.json", "--out", tmp_path / "o") == 2

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "hjbmaxplus", "check", "scalar"],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and "assumption1_ok: yes" in proc.stdout


class TestResidualAndSweep:
    def test_residual_curve(self, tmp_path, capsys):
        assert run("residual", "scalar", "--tau", 0.1, "--steps", 60, "--prune", "envelope",
                   "--grid-points", 9, "--out", tmp_path) == 0
        lines = (tmp_path / "residual_curve.csv").read_text().splitlines()
        assert lines[0] == "iteration,T,basis_size,residual" and len(lines) == 62
        assert "stationary" in capsys.readouterr().out

    def test_sweep_dedup_and_order(self, tmp_path, capsys):
        code = run("sweep", "scalar", "--tau-list", "0.1,0.05,0.1", "--horizon-budget", 3,
                   "--prune", "envelope", "--grid-points", 9, "--out", tmp_path)
        assert code == 0
        assert "duplicate" in capsys.readouterr().err
        rows = (tmp_path / "convergence.csv").read_text().splitlines()
        assert rows[0] == "tau,neg_log_tau,T_star"
        assert [float(r.split(",")[0]) for r in rows[1:]] == [0.1, 0.05]
        err = (tmp_path / "error_curve.csv").read_text().splitlines()
        assert err[0] == "tau,error,log_tau,log_error" and len(err) == 3

    def test_sweep_nonintegral(self, tmp_path):
        assert run("sweep", "scalar", "--tau-list", "0.3", "--horizon-budget", 1,
                   "--out", tmp_path) == 2

    def test_sweep_partial_failure(self, tmp_path):
        code = run("sweep", "standard_2d", "--tau-list", "0.1,0.05", "--horizon-budget", 0.5,
                   "--prune", "none", "--basis-cap", 250, "--grid-points", 5, "--out", tmp_path)
        assert code == 3
        status = (tmp_path / "sweep_status.csv").read_text()
        assert "not-converged" in status and "failed" in status


def test_contraction_command(capsys):
    assert run("contraction", "standard_2d", "--samples", 20) == 0
    out = capsys.readouterr().out
    ratio = float(next(l for l in out.splitlines() if l.startswith("worst_ratio")).split()[-1])
    assert 0 < ratio < 1
