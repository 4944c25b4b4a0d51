import json

import numpy as np
import pytest

from shrinkdiff.cli import main
from shrinkdiff.io import CSVParseError, dataset_summary, emit_report, load_csv, read_table
from shrinkdiff.simbench import METRIC_COLUMNS


def _write(path, text):
    path.write_text(text)
    return path


@pytest.fixture
def small_csv(tmp_path):
    rng = np.random.default_rng(3)
    X = rng.standard_normal((40, 6))
    y = 2 * X[:, 0] - 1.5 * X[:, 3] + 0.5 * rng.standard_normal(40)
    lines = ["y," + ",".join(f"g{j}" for j in range(6))]
    lines += [",".join(repr(float(v)) for v in (y[i], *X[i])) for i in range(40)]
    return _write(tmp_path / "d.csv", "\n".join(lines) + "\n")


def test_three_by_two_csv(tmp_path):
    data = load_csv(_write(tmp_path / "a.csv", "y,x\n1,2\n2,4\n4,5\n"))
    assert (data.n, data.p) == (3, 1)
    assert data.names == ("x",)


def test_constant_column_flagged(tmp_path):
    data = load_csv(_write(tmp_path / "a.csv", "y,x,c\n1,2,7\n2,4,7\n4,5,7\n3,1,7\n"))
    s = dataset_summary(data)
    assert s["degenerate_columns"] == [1] and s["degenerate_names"] == ["c"]


@pytest.mark.parametrize("body, where", [
    ("y,x\n1,2\n2,abc\n", "row 3, column 2"),
    ("y,x\n1,2\n2\n", "row 3"),
    ("y,x\n1,2\n,3\n", "row 3, column 1"),
    ("y,x\n1,NA\n", "row 2, column 2"),
    ("y,x\n1,inf\n", "row 2, column 2"),
])
def test_parse_errors_name_location(tmp_path, body, where):
    with pytest.raises(CSVParseError, match=where):
        read_table(_write(tmp_path / "bad.csv", body))


def test_missing_value_message(tmp_path):
    with pytest.raises(CSVParseError, match="missing value"):
        load_csv(_write(tmp_path / "m.csv", "y,x\n1,\n2,3\n"))


def test_empty_and_headerless(tmp_path):
    with pytest.raises(CSVParseError):
        read_table(_write(tmp_path / "e.csv", ""))
    with pytest.raises(CSVParseError):
        read_table(_write(tmp_path / "h.csv", "y,x\n"))


def test_response_selection(tmp_path):
    p = _write(tmp_path / "r.csv", "a,b,c\n1,2,3\n2,5,1\n4,4,4\n")
    assert load_csv(p).names == ("b", "c")
    assert load_csv(p, response="c").names == ("a", "b")
    assert load_csv(p, response=1).names == ("a", "c")
    with pytest.raises(CSVParseError):
        load_csv(p, response="zz")


def test_standardization_round_trip(small_csv):
    header, table = read_table(small_csv)
    data = load_csv(small_csv)
    X, Y = data.raw_arrays()
    assert np.max(np.abs(X - table[:, 1:])) <= 1e-8
    assert np.max(np.abs(Y - table[:, 0])) <= 1e-8


def test_emit_report_rejects_unwritable(tmp_path):
    rep = {"command": "x", "config": {}, "columns": ["a"], "table": [{"a": 1.0}]}
    with pytest.raises(OSError):
        emit_report(rep, "csv", tmp_path / "missing_dir" / "out.csv")
    with pytest.raises(ValueError):
        emit_report(rep, "xml")


def test_json_has_no_nan():
    text = emit_report({"command": "x", "config": {"v": float("nan")}, "columns": [], "table": []})
    assert json.loads(text)["config"]["v"] is None


def _run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_fit_one_probability_per_column(capsys, small_csv):
    code, out, _ = _run(capsys, ["fit", str(small_csv), "--burnin", "100", "--iters", "500"])
    assert code == 0
    rep = json.loads(out)
    assert [r["name"] for r in rep["table"]] == [f"g{j}" for j in range(6)]
    probs = [r["marginal_prob"] for r in rep["table"]]
    assert all(0 <= v <= 1 for v in probs)
    assert rep["selected"]["median"] == ["g0", "g3"]
    assert rep["config"]["seed"] == 0 and rep["schema_version"] == "1.0"


def test_bench_csv_columns_exact(capsys):
    code, out, _ = _run(capsys, ["bench", "--case", "1", "--n", "40", "--p", "20", "--reps", "2",
                                 "--burnin", "100", "--iters", "400", "--format", "csv"])
    assert code == 0
    body = [line for line in out.splitlines() if not line.startswith("#")]
    assert body[0].split(",") == list(METRIC_COLUMNS)
    assert len(body) == 3


def test_unwritable_output_errors(capsys, small_csv, tmp_path):
    code, _, err = _run(capsys, ["fit", str(small_csv), "--iters", "100", "--burnin", "10",
                                 "-o", str(tmp_path / "nope" / "r.json")])
    assert code == 2 and "cannot write" in err


def test_bad_input_errors(capsys, tmp_path):
    bad = _write(tmp_path / "b.csv", "y,x\n1,2\n2,oops\n")
    code, _, err = _run(capsys, ["fit", str(bad)])
    assert code == 2 and "row 3, column 2" in err


def test_screen_write_subset(capsys, small_csv, tmp_path):
    sub = tmp_path / "sub.csv"
    code, out, _ = _run(capsys, ["screen", str(small_csv), "--keep", "2", "--force", "g5",
                                 "--write-subset", str(sub)])
    assert code == 0
    header, table = read_table(sub)
    assert header[0] == "y" and set(header[1:]) == {"g0", "g3", "g5"}
    assert table.shape == (40, 4)


def test_oracle_compare(capsys, small_csv):
    code, out, _ = _run(capsys, ["oracle", str(small_csv), "--compare", "--iters", "20000",
                                 "--burnin", "500", "--sigma2", "fixed:0.25"])
    assert code == 0
    rep = json.loads(out)
    assert len(rep["table"]) == 6
    assert rep["max_abs_diff"] < 0.03


def _strip_timing(text, fmt):
    if fmt == "json":
        doc = json.loads(text)
        doc.pop("timing", None)
        return json.dumps(doc, sort_keys=True)
    return text


@pytest.mark.parametrize("fmt", ["json", "csv"])
@pytest.mark.parametrize("cmd", ["fit", "screen", "oracle", "bench", "diagnose"])
def test_reruns_identical_modulo_timing(capsys, small_csv, tmp_path, cmd, fmt):
    chain = ["--burnin", "50", "--iters", "300"]
    argv = {
        "fit": ["fit", str(small_csv), *chain, "--seed", "7"],
        "screen": ["screen", str(small_csv), "--keep", "3"],
        "oracle": ["oracle", str(small_csv)],
        "bench": ["bench", "--case", "2", "--n", "30", "--p", "15", "--reps", "2", *chain],
        "diagnose": ["diagnose", str(small_csv), "--budget", "2000"],
    }[cmd]
    outs = []
    for i in range(2):
        path = tmp_path / f"r{i}.{fmt}"
        assert main([*argv, "--format", fmt, "-o", str(path)]) == 0
        outs.append(_strip_timing(path.read_text(), fmt))
    assert outs[0] == outs[1]
