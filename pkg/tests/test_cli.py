import csv
import json

import numpy as np
import pytest

import renreduce.cli as cli
from conftest import zero_model
from renreduce.errors import ReductionError
from renreduce.model import Activation, RenPackage, load_package, save_package
from renreduce.reduce import HISTORY_HEADER
from renreduce.simulate import white_noise_inputs, write_inputs_csv
from renreduce.synth import generate


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def fixture_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "m.json"
    save_package(generate(14, 8, 1, 1, seed=2), path)
    return path


class TestGenerate:
    def test_defaults_verify(self, tmp_path, capsys):
        out = tmp_path / "m.json"
        assert run(capsys, "generate", "-o", out)[0] == 0
        assert load_package(out).model.dims == {"n": 100, "q": 100, "m": 1, "p": 1}
        code, text, _ = run(capsys, "verify", out)
        doc = json.loads(text)
        assert code == 0 and doc["passed"]
        assert all(r["min_eig"] > 0 for r in doc["reports"])

    def test_minimal(self, tmp_path, capsys):
        assert run(capsys, "generate", "--n", 1, "--q", 1, "-o", tmp_path / "a.json")[0] == 0
        assert run(capsys, "verify", tmp_path / "a.json")[0] == 0

    def test_deterministic(self, tmp_path, capsys):
        for name in ("a.json", "b.json"):
            run(capsys, "generate", "--n", 10, "--q", 5, "--seed", 7, "-o", tmp_path / name)
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_options(self, tmp_path, capsys):
        code, text, _ = run(capsys, "generate", "--n", 5, "--q", 4, "--lower-triangular-d11",
                            "--activation", "tanh", "--alpha-bar", 0.9, "--json", "-o", tmp_path / "a.json")
        assert code == 0 and json.loads(text)["lower_triangular_d11"]
        pkg = load_package(tmp_path / "a.json")
        assert pkg.model.activation is Activation.TANH and pkg.certificate.alpha_bar == 0.9

    def test_generation_failure(self, tmp_path, capsys):
        assert run(capsys, "generate", "--n", 3, "--q", 2, "--gamma", 1e-40, "-o", tmp_path / "x.json")[0] == 2

    def test_io_error(self, tmp_path, capsys):
        assert run(capsys, "generate", "--n", 2, "--q", 2, "-o", tmp_path / "no" / "x.json")[0] == 3

    def test_bad_argument(self, tmp_path, capsys):
        assert run(capsys, "generate", "--n", 0, "-o", tmp_path / "x.json")[0] == 3
        with pytest.raises(SystemExit) as exc:
            cli.main(["generate"])
        assert exc.value.code == 3


class TestVerify:
    def test_destabilized_fails(self, fixture_file, tmp_path, capsys):
        pkg = load_package(fixture_file)
        bad = RenPackage(pkg.model.replace(A=2 * pkg.model.A), pkg.certificate, pkg.iqc)
        save_package(bad, tmp_path / "bad.json")
        code, text, _ = run(capsys, "verify", tmp_path / "bad.json")
        assert code == 1 and not json.loads(text)["passed"]

    def test_missing_certificate(self, tmp_path, capsys):
        save_package(RenPackage(zero_model(A=0.5)), tmp_path / "nc.json")
        assert run(capsys, "verify", tmp_path / "nc.json")[0] == 2

    def test_margin(self, fixture_file, capsys):
        assert run(capsys, "verify", fixture_file, "--margin", 1e6)[0] == 1

    def test_missing_file(self, tmp_path, capsys):
        assert run(capsys, "verify", tmp_path / "none.json")[0] == 3


class TestReduce:
    def test_reduce_verify_history(self, fixture_file, tmp_path, capsys):
        out, hist = tmp_path / "r.json", tmp_path / "h.csv"
        code, text, _ = run(capsys, "reduce", fixture_file, "--order", 3, "--restarts", 2,
                            "--max-iter", 20, "-o", out, "--history", hist, "--json")
        assert code == 0
        doc = json.loads(text)
        assert doc["n_hat"] == 3 and "b_conditions_hold" in doc
        assert run(capsys, "verify", out)[0] == 0
        rows = list(csv.reader(hist.open()))
        assert tuple(rows[0]) == HISTORY_HEADER and len(rows) > 2

    def test_full_order(self, fixture_file, tmp_path, capsys):
        code, text, _ = run(capsys, "reduce", fixture_file, "--order", 14, "--restarts", 1,
                            "--max-iter", 3, "-o", tmp_path / "r.json", "--json")
        assert code == 0 and json.loads(text)["relative_h2_error"] <= 1e-8

    def test_human_output(self, fixture_file, tmp_path, capsys):
        code, text, _ = run(capsys, "reduce", fixture_file, "--order", 2, "--restarts", 1,
                            "--max-iter", 5, "-o", tmp_path / "r.json")
        assert code == 0 and "h2 error" in text and "b-conditions" in text

    @pytest.mark.parametrize("order", [0, 15])
    def test_order_bounds(self, fixture_file, tmp_path, capsys, order):
        assert run(capsys, "reduce", fixture_file, "--order", order, "-o", tmp_path / "r.json")[0] == 3

    def test_failure(self, fixture_file, tmp_path, capsys, monkeypatch):
        def fail(*a, **k):
            raise ReductionError("every restart failed", history=None)
        monkeypatch.setattr(cli, "isrk_reduce", fail)
        assert run(capsys, "reduce", fixture_file, "--order", 2, "-o", tmp_path / "r.json")[0] == 2


class TestEvaluate:
    def test_self(self, fixture_file, tmp_path, capsys):
        rep = tmp_path / "rep.json"
        code, text, _ = run(capsys, "evaluate", fixture_file, fixture_file, "--inputs", 3,
                            "--horizon", 100, "-o", rep)
        assert code == 0
        doc = json.loads(rep.read_text())
        assert doc["c_mean"] == 0 and doc["beta_full"] == doc["beta_reduced"] <= 2
        fields = text.strip().split(",")
        assert fields[0] == "14" and float(fields[1]) == 0

    def test_dimension_mismatch(self, fixture_file, tmp_path, capsys):
        save_package(generate(4, 3, 2, 1, seed=0), tmp_path / "o.json")
        assert run(capsys, "evaluate", fixture_file, tmp_path / "o.json", "--horizon", 10)[0] == 2


class TestSweep:
    def test_parse_orders(self):
        assert cli.parse_orders("1:3,10, 5") == [1, 2, 3, 5, 10]
        for bad in ("", ",", "3:1", "a", "0"):
            with pytest.raises(cli.UsageError):
                cli.parse_orders(bad)

    def test_empty_orders(self, fixture_file, tmp_path, capsys):
        assert run(capsys, "sweep", fixture_file, "--orders", "", "-o", tmp_path / "s")[0] == 3

    def test_sweep_rows_and_parallel_determinism(self, fixture_file, tmp_path, capsys, monkeypatch):
        args = ["sweep", fixture_file, "--orders", "1:2,4", "--restarts", 2, "--max-iter", 15,
                "--inputs", 3, "--horizon", 100]
        monkeypatch.setenv("REN_REDUCE_THREADS", "1")
        assert run(capsys, *args, "-o", tmp_path / "s1")[0] == 0
        monkeypatch.setenv("REN_REDUCE_THREADS", "2")
        assert run(capsys, *args, "-o", tmp_path / "s2")[0] == 0
        a = (tmp_path / "s1" / "sweep.csv").read_text()
        assert a == (tmp_path / "s2" / "sweep.csv").read_text()
        rows = list(csv.DictReader(a.splitlines()))
        assert [int(r["n_hat"]) for r in rows] == [1, 2, 4]
        assert list(rows[0]) == list(cli.SWEEP_HEADER)
        assert (tmp_path / "s1" / "reduced_4.json").exists()
        assert (tmp_path / "s1" / "history_2.csv").exists()

    def test_h2_trend(self, tmp_path, capsys):
        save_package(generate(40, 20, 1, 1, seed=1), tmp_path / "m.json")
        code, text, _ = run(capsys, "sweep", tmp_path / "m.json", "--orders", "5,10,20,40",
                            "--restarts", 3, "--inputs", 2, "--horizon", 50, "-o", tmp_path / "s", "--json")
        h2 = [r["h2_error"] for r in json.loads(text)]
        assert code == 0 and all(b <= a for a, b in zip(h2, h2[1:]))

    def test_bad_threads(self, fixture_file, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("REN_REDUCE_THREADS", "x")
        assert run(capsys, "sweep", fixture_file, "--orders", "1,2", "-o", tmp_path / "s")[0] == 3


class TestSimulate:
    def test_zero_trace(self, fixture_file, tmp_path, capsys):
        pkg = load_package(fixture_file)
        mdl = pkg.model.replace(beta_x=np.zeros(14), beta_v=np.zeros(8), beta_y=np.zeros(1))
        save_package(RenPackage(mdl, pkg.certificate, pkg.iqc), tmp_path / "z.json")
        write_inputs_csv(tmp_path / "u.csv", np.zeros((20, 1)))
        assert run(capsys, "simulate", tmp_path / "z.json", "--input", tmp_path / "u.csv",
                   "-o", tmp_path / "t.csv")[0] == 0
        rows = list(csv.DictReader((tmp_path / "t.csv").open()))
        assert len(rows) == 20 and all(float(r["y1"]) == 0 for r in rows)

    def test_white_noise_residuals(self, fixture_file, tmp_path, capsys):
        write_inputs_csv(tmp_path / "u.csv", white_noise_inputs(1, 300, 1, seed=0)[0])
        x0 = tmp_path / "x0.csv"
        x0.write_text(",".join(["0.5"] * 14) + "\n")
        code, text, _ = run(capsys, "simulate", fixture_file, "--input", tmp_path / "u.csv",
                            "--x0", x0, "-o", tmp_path / "t.csv", "--json")
        assert code == 0 and json.loads(text)["max_residual"] <= 1e-10
        rows = list(csv.DictReader((tmp_path / "t.csv").open()))
        assert all(np.isfinite(float(r["y1"])) for r in rows)

    def test_malformed_csv(self, fixture_file, tmp_path, capsys):
        (tmp_path / "u.csv").write_text("t,u1\n0,1.0\n1,oops\n")
        code, _, err = run(capsys, "simulate", fixture_file, "--input", tmp_path / "u.csv",
                           "-o", tmp_path / "t.csv")
        assert code == 3 and "u.csv:3" in err

    def test_bad_x0(self, fixture_file, tmp_path, capsys):
        write_inputs_csv(tmp_path / "u.csv", np.zeros((2, 1)))
        (tmp_path / "x0.csv").write_text("1,2\n")
        assert run(capsys, "simulate", fixture_file, "--input", tmp_path / "u.csv", "--x0",
                   tmp_path / "x0.csv", "-o", tmp_path / "t.csv")[0] == 3

    def test_non_convergence(self, tmp_path, capsys):
        mdl = zero_model(1, 2, 1, 1, D11=[[0.0, 2.0], [2.0, 0.0]], beta_v=[1.0, 1.0])
        save_package(RenPackage(mdl.replace(activation=Activation.IDENTITY)), tmp_path / "b.json")
        write_inputs_csv(tmp_path / "u.csv", np.zeros((3, 1)))
        assert run(capsys, "simulate", tmp_path / "b.json", "--input", tmp_path / "u.csv",
                   "-o", tmp_path / "t.csv")[0] == 2
