import csv
import itertools
import json
from pathlib import Path

import numpy as np
import pytest

from gdspin import cli
from gdspin.cli import build_parser, main, parse_config
from gdspin.dynamics import IntegrationError
from gdspin.instances import bundled_text, load_instance, matrix_to_json, parse_gset
from gdspin.model import CouplingMatrix, maxcut_value
from gdspin.records import RunRecord

GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def ferro_json(tmp_path):
    p = tmp_path / "ferro.json"
    p.write_text(matrix_to_json(CouplingMatrix.from_dense([[0, 1], [1, 0]])))
    return str(p)


class TestHelp:
    @pytest.mark.parametrize("command", ["main", "solve", "gen", "bench"])
    def test_golden(self, capsys, command):
        argv = ["--help"] if command == "main" else [command, "--help"]
        code, out, _ = run(capsys, *argv)
        assert code == 0
        assert out == (GOLDEN / f"help_{command}.txt").read_text()

    def test_every_flag_documented(self, capsys):
        parser = build_parser()
        sub = next(a for a in parser._actions if hasattr(a, "choices") and isinstance(a.choices, dict))
        for name, sp in sub.choices.items():
            _, out, _ = run(capsys, name, "--help")
            for act in sp._actions:
                for opt in act.option_strings:
                    assert opt in out
                if act.help is not None and act.dest != "help":
                    assert act.help.split("(")[0].strip()[:20] in " ".join(out.split())


class TestSolve:
    def test_toy6_ising_cut(self, capsys):
        code, out, _ = run(capsys, "solve", "--input", "toy6.gset", "--model", "ising", "--algo", "gd",
                           "--runs", "10")
        g = parse_gset(bundled_text("toy6.gset"))
        best = max(maxcut_value(g, np.array(s)) for s in itertools.product([-1, 1], repeat=6))
        assert code == 0
        assert f"cut value      {best:g}" in out

    @pytest.mark.parametrize("algo", ["gd", "gd-mod", "mc", "bh"])
    def test_ferromagnet(self, capsys, ferro_json, algo):
        code, out, _ = run(capsys, "solve", "--input", ferro_json, "--algo", algo)
        assert code == 0
        energy = float(next(ln for ln in out.splitlines() if ln.startswith("best energy")).split()[2])
        assert energy == pytest.approx(-2.0, abs=1e-12)

    def test_bh_deterministic(self, capsys, tmp_path):
        outs, recs = [], []
        for k in range(2):
            f = tmp_path / f"o{k}.json"
            code, out, _ = run(capsys, "solve", "--input", "gen:dense:8:3", "--algo", "bh", "--runs", "1",
                               "--seed", "7", "--out", str(f))
            assert code == 0
            outs.append(out)
            recs.append([RunRecord.from_dict(d) for d in json.loads(f.read_text())["records"]])
        assert outs[0] == outs[1]
        assert recs[0] == recs[1]

    def test_out_file(self, capsys, tmp_path):
        f = tmp_path / "o.json"
        code, _, _ = run(capsys, "solve", "--input", "gen:sparse3:10:1", "--runs", "3", "--out", str(f))
        doc = json.loads(f.read_text())
        assert code == 0 and len(doc["records"]) == 3
        assert doc["summary"]["hamiltonian_energy"] == min(r["best_energy"] for r in doc["records"])

    def test_potts_readout(self, capsys):
        code, out, _ = run(capsys, "solve", "--input", "gen:dense:6:0", "--model", "potts:3", "--runs", "2")
        assert code == 0 and "objective" in out

    @pytest.mark.parametrize("argv", [
        ["--input", "missing.json"],
        ["--input", "gen:dense:x:0"],
        ["--input", "gen:sparse3:5:0"],
        ["--input", "gen:dense:6:0", "--model", "ising", "--algo", "mc"],
    ])
    def test_input_errors(self, capsys, argv):
        code, _, err = run(capsys, "solve", *argv)
        assert code == 2 and "error" in err

    def test_malformed_files(self, capsys, tmp_path):
        bad = tmp_path / "bad.gset"
        bad.write_text("3 2\n1 1 1\n2 3 1\n")
        code, _, err = run(capsys, "solve", "--input", str(bad))
        assert code == 2 and "line 2" in err
        js = tmp_path / "bad.json"
        js.write_text('{"format": "gdspin-matrix", "n": 2, "entries": [[0, 0, 1.0]]}')
        assert run(capsys, "solve", "--input", str(js))[0] == 2

    @pytest.mark.parametrize("argv", [
        ["solve"],
        ["solve", "--input", "x", "--bogus"],
        ["solve", "--input", "x", "--runs", "0"],
        ["solve", "--input", "x", "--model", "potts:1"],
        ["solve", "--input", "x", "--algo", "sa"],
        ["frobnicate"],
    ])
    def test_usage_errors(self, capsys, argv):
        assert run(capsys, *argv)[0] == 2

    def test_numerical_abort(self, capsys, monkeypatch):
        def boom(*a, **k):
            raise IntegrationError("non-finite state")

        monkeypatch.setattr(cli, "run_gd_batch", boom)
        code, _, err = run(capsys, "solve", "--input", "gen:dense:4:0")
        assert code == 3 and "numerical abort" in err


class TestConfig:
    def test_parse(self):
        assert parse_config("# c\nruns = 3\nmodel='ising'  # x\n\n") == {"runs": "3", "model": "ising"}
        with pytest.raises(cli.InputError):
            parse_config("runs 3\n")

    def test_overlay_under_flags(self, capsys, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text("input = gen:dense:6:2\nruns = 3\nalgo = mc\n")
        code, out, _ = run(capsys, "solve", "--config", str(cfg))
        assert code == 0 and "mc (3 runs)" in out
        code, out, _ = run(capsys, "solve", "--config", str(cfg), "--runs", "2")
        assert code == 0 and "mc (2 runs)" in out

    @pytest.mark.parametrize("text", ["bogus = 1\n", "runs = 0\n", "algo = sa\n"])
    def test_bad_config(self, capsys, tmp_path, text):
        cfg = tmp_path / "c.txt"
        cfg.write_text(text)
        code, _, err = run(capsys, "solve", "--input", "gen:dense:4:0", "--config", str(cfg))
        assert code == 2 and "config" in err

    def test_missing_config(self, capsys):
        assert run(capsys, "gen", "--kind", "dense", "--n", "3", "--config", "/nonexistent")[0] == 2


class TestGen:
    def test_k4(self, capsys, tmp_path):
        f = tmp_path / "k4.json"
        assert run(capsys, "gen", "--kind", "sparse3", "--n", "4", "--out", str(f))[0] == 0
        J, _, _ = load_instance(f)
        assert np.all((J.to_dense() != 0) == ~np.eye(4, dtype=bool))

    def test_deterministic_and_roundtrip(self, capsys, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run(capsys, "gen", "--kind", "dense", "--n", "50", "--seed", "3", "--out", str(a))
        run(capsys, "gen", "--kind", "dense", "--n", "50", "--seed", "3", "--out", str(b))
        assert a.read_bytes() == b.read_bytes()
        from gdspin.instances import EnsembleSpec, gen_dense

        J, _, _ = load_instance(a)
        assert J == gen_dense(EnsembleSpec("dense", 50, seed=3))

    def test_gset_format_to_stdout(self, capsys):
        code, out, _ = run(capsys, "gen", "--kind", "sparse3", "--n", "6", "--format", "gset")
        g = parse_gset(out)
        assert code == 0 and g.n == 6 and len(g.edges) == 9

    def test_invalid_spec(self, capsys):
        assert run(capsys, "gen", "--kind", "sparse3", "--n", "5")[0] == 2
        assert run(capsys, "gen", "--kind", "dense", "--n", "1")[0] == 2


class TestBench:
    def test_scaling_synthetic(self, capsys, tmp_path):
        code, out, _ = run(capsys, "bench", "--experiment", "scaling", "--synthetic-exponent", "2",
                           "--out", str(tmp_path))
        assert code == 0 and "fit: ln T = 2.0000 ln N" in out
        rows = list(csv.DictReader(open(tmp_path / "scaling.csv")))
        assert [int(r["n"]) for r in rows] == [100, 200, 400, 800]

    def test_success_mini(self, capsys, tmp_path):
        code, out, _ = run(capsys, "bench", "--experiment", "success", "--n", "6", "--instances", "2",
                           "--runs", "4", "--algos", "gd,mc", "--out", str(tmp_path))
        assert code == 0
        rows = list(csv.DictReader(open(tmp_path / "success.csv")))
        assert list(rows[0]) == ["method", "instance", "success_probability", "n_runs", "best_energy",
                                 "reference_energy"]
        assert len(rows) == 4 and all(0 <= float(r["success_probability"]) <= 1 for r in rows)
        assert (tmp_path / "runs.jsonl").is_file()

    def test_maxcut_toy6(self, capsys, tmp_path):
        code, out, _ = run(capsys, "bench", "--experiment", "maxcut", "--runs", "3", "--out", str(tmp_path))
        assert code == 0
        line = next(ln for ln in out.splitlines() if ln.startswith("toy6"))
        assert line.split()[-1] == "0.000"
        rows = list(csv.DictReader(open(tmp_path / "maxcut.csv")))
        assert rows[0]["best_dev_pct"] == "0.0000"

    def test_missing_gset_data(self, capsys, monkeypatch):
        monkeypatch.delenv("GDSPIN_DATA", raising=False)
        code, _, err = run(capsys, "bench", "--experiment", "maxcut", "--instances", "G1")
        assert code == 2 and "GDSPIN_DATA" in err

    def test_gset_from_data_dir(self, capsys, tmp_path, monkeypatch):
        (tmp_path / "tiny.txt").write_text("3 3\n1 2 1\n2 3 1\n1 3 1\n")
        monkeypatch.setenv("GDSPIN_DATA", str(tmp_path))
        code, out, _ = run(capsys, "bench", "--experiment", "maxcut", "--instances", "tiny", "--runs", "2")
        assert code == 0 and out.splitlines()[1].split()[2] == "2"

    def test_bad_algos(self, capsys):
        assert run(capsys, "bench", "--experiment", "success", "--algos", "gd,sa")[0] == 2
