import csv
import json

import numpy as np
import pytest

from linescale import __version__
from linescale.cli import main
from linescale.io import dumps, load_matrix, save_matrix

from oracles import STAR3


@pytest.fixture
def files(tmp_path):
    save_matrix(tmp_path / "star3.csv", STAR3)
    save_matrix(tmp_path / "W.csv", np.array([[1.0, 2.0], [2.0, 1.0]]))
    P = np.roll(np.eye(5), 1, axis=1)
    save_matrix(tmp_path / "W5.csv", (np.eye(5) + P + P.T) * np.random.default_rng(3).uniform(0.5, 2, (5, 5)))
    return tmp_path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert __version__ in out and "PCG64" in out


def test_scale_writes_run_result(files, capsys):
    out = files / "run.json"
    code, _, _ = run(["scale", "--input", files / "W.csv", "--schedule", "cyclic", "--tol", "1e-10",
                      "--max-steps", "100000", "--out", out], capsys)
    assert code == 0
    rep = json.loads(out.read_text())
    for key in ("final_matrix", "accumulator", "steps_taken", "d_B_final", "converged", "stop_reason"):
        assert key in rep
    assert rep["converged"] and rep["limit_report"]["passed"]


def test_scale_trace_output(files, capsys):
    trace = files / "trace.jsonl"
    code, out, _ = run(["scale", "--input", files / "W.csv", "--trace-out", trace], capsys)
    assert code == 0
    lines = [json.loads(x) for x in trace.read_text().splitlines()]
    assert set(lines[0]) == {"t", "axis", "index", "d_t", "d_B"}


def test_scale_trace_schedule(files, capsys):
    (files / "t.txt").write_text("r1 c1\nr2\n")
    code, out, _ = run(["scale", "--input", files / "W.csv", "--schedule", f"trace:{files / 't.txt'}"], capsys)
    assert code == 0 and json.loads(out)["steps_taken"] <= 3


def test_support_star(files, capsys):
    code, out, _ = run(["support", "--input", files / "star3.csv", "--k", "full"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["has_support"] is False and rep["positive_part_null"] is True


def test_support_partial_k_and_decompose(files, capsys):
    (files / "k.json").write_text('{"rows": [2, 3], "cols": [2, 3]}')
    code, out, _ = run(["support", "--input", files / "star3.csv", "--k", files / "k.json"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["has_k_diagonal"]
    save_matrix(files / "ds.csv", np.array([[0.5, 0.5], [0.5, 0.5]]))
    code, out, _ = run(["support", "--input", files / "ds.csv", "--decompose"], capsys)
    assert code == 0 and len(json.loads(out)["decomposition"]) == 2


def test_drw(files, capsys):
    counts = files / "counts.csv"
    code, out, _ = run(["drw", "--matrix", files / "W5.csv", "--steps", "200000", "--seed", "1",
                        "--dump-counts", counts], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["max_dev"] < 0.01
    assert sum(int(r["count"]) for r in csv.DictReader(counts.open())) == 200000


def test_outputs_are_byte_identical(files, capsys):
    for k in (1, 2):
        assert main(["drw", "--matrix", str(files / "W5.csv"), "--steps", "1000", "--seed", "5",
                     "--out", str(files / f"d{k}.json")]) == 0
        assert main(["scale", "--input", str(files / "W5.csv"), "--schedule", "random", "--seed", "9",
                     "--out", str(files / f"s{k}.json")]) == 0
    assert (files / "d1.json").read_bytes() == (files / "d2.json").read_bytes()
    assert (files / "s1.json").read_bytes() == (files / "s2.json").read_bytes()


@pytest.mark.parametrize(
    "argv, code, needle",
    [
        (["scale", "--input", "{d}/W.csv", "--schedule", "random"], 1, "--seed"),
        (["scale", "--input", "{d}/W.csv", "--unknown"], 1, "unrecognized"),
        (["drw", "--matrix", "{d}/W5.csv", "--steps", "10"], 1, "--seed"),
        (["scale", "--input", "{d}/missing.csv"], 1, "missing.csv"),
        (["drw", "--matrix", "{d}/star3.csv", "--steps", "10", "--seed", "1"], 1, "irreducible"),
        (["scale", "--input", "{d}/W.csv", "--seed", "-3", "--schedule", "random"], 1, "unsigned"),
    ],
)
def test_error_exit_codes(files, capsys, argv, code, needle):
    got, _, err = run([a.format(d=files) for a in argv], capsys)
    assert got == code and needle in err


def test_null_line_input_is_domain_error(files, capsys):
    (files / "bad.csv").write_text("1,0\n0,0\n")
    code, _, err = run(["support", "--input", files / "bad.csv"], capsys)
    assert code == 1 and "row 2 is null" in err


def test_invariant_failure_exit_code(files, capsys, monkeypatch):
    from linescale import cli
    from linescale.errors import InvariantViolation

    def boom(*a, **k):
        raise InvariantViolation("forced")

    monkeypatch.setattr(cli, "run_scaling", boom)
    code, _, err = run(["scale", "--input", files / "W.csv"], capsys)
    assert code == 2 and "forced" in err


def test_ot_densities_and_solve(files, capsys):
    out = files / "fig1.csv"
    assert main(["ot", "densities", "--out", str(out), "--points", "101", "--n", "50"]) == 0
    header = out.read_text().splitlines()[0].split(",")
    assert header == ["x", "source_pdf", "target_pdf", "source_cdf", "target_cdf"]
    q = (files / "fig1_quantiles.csv").read_text().splitlines()
    assert q[0] == "n,level,source_quantile,target_quantile" and len(q) == 51
    code, text, _ = run(["ot", "solve", "--n", "40", "--epsilon", "0.05"], capsys)
    assert code == 0 and json.loads(text)["converged"]


def test_ot_sweep(files, capsys):
    out = files / "fig2.csv"
    report = files / "fig2.json"
    code, _, _ = run(["ot", "sweep", "--n", "60", "--eps-grid", "log:0:-5:12", "--out", out,
                      "--report", report, "--check-scaling", "--scaling-steps", "2000"], capsys)
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == ["epsilon", "zero_count", "has_support", "has_total_support", "log10_min_positive_entry"]
    rep = json.loads(report.read_text())
    assert rep["monotone"] and rep["eps_fail"] is not None
    assert all(not c["converged"] for c in rep["scaling_checks"])


def test_matrix_csv_round_trip(tmp_path):
    W = np.random.default_rng(0).random((4, 4)) + 1e-300
    save_matrix(tmp_path / "m.csv", W)
    assert np.array_equal(load_matrix(tmp_path / "m.csv").entries, W)


def test_json_is_deterministic_and_strict():
    text = dumps({"b": 0.1, "a": [np.float64(1.0), np.int64(3), float("nan"), True]})
    assert text == '{"a": [1.0, 3, null, true], "b": 0.10000000000000001}\n'
    assert json.loads(text)["b"] == 0.1
