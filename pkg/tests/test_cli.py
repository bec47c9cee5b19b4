import csv
import io
import json

import pytest

from sigmanet.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_sigma_table_values(capsys):
    code, out, _ = run(capsys, "sigma-table", "--start", "0", "--end", "49", "--step", "1")
    assert code == 0
    table = rows(out)
    assert table[0] == ["t", "sigma"]
    assert len(table) == 51
    values = {float(t): float(v) for t, v in table[1:]}
    assert values[3.0] == pytest.approx(0.91514, abs=5e-6)
    assert values[18.0] == pytest.approx(0.95775, abs=5e-6)


def test_sigma_table_bad_range(capsys):
    assert run(capsys, "sigma-table", "--start", "5", "--end", "1")[0] == 2
    assert run(capsys, "sigma-table", "--step", "0")[0] == 2
    assert run(capsys, "sigma-table", "--s", "-1")[0] == 2


def test_figure_data(capsys, tmp_path):
    out_file = tmp_path / "fig.csv"
    assert run(capsys, "figure", "--which", "3", "--step", "5", "--out", str(out_file))[0] == 0
    table = rows(out_file.read_text())
    assert len(table[0]) == 5 and len(table) == 22
    assert run(capsys, "figure", "--which", "1", "--step", "10")[0] == 0


def test_enum(capsys):
    assert run(capsys, "enum", "poly-to-index", "x^2 - 1")[1].strip() == "5"
    assert run(capsys, "enum", "index-to-poly", "6")[1].strip() == "x^3"
    code, out, _ = run(capsys, "enum", "poly-to-index", "x^3 - 1/7 x + 5/3")
    assert run(capsys, "enum", "index-to-poly", out.strip())[1].strip() == "x^3 - 1/7 x + 5/3"
    assert run(capsys, "enum", "poly-to-index", "2x + 1")[0] == 2
    assert run(capsys, "enum", "index-to-poly", "abc")[0] == 2


def test_enum_huge_index_as_json(capsys):
    code, out, _ = run(capsys, "enum", "poly-to-index", "x^2 + 1/5000 x", "--max-bits", "64")
    assert code == 0
    obj = json.loads(out)
    assert obj["n"] is None
    assert run(capsys, "enum", "index-to-poly", out.strip())[1].strip() == "x^2 + 1/5000 x"


def test_fit1d(capsys, tmp_path):
    code, out, _ = run(capsys, "fit1d", "--function", "identity")
    assert code == 0 and float(json.loads(out)["sigma_error"]) == 0.0
    code, out, _ = run(capsys, "fit1d", "--function", "const:2.5")
    assert code == 0 and float(json.loads(out)["sigma_error"]) == 0.0
    term_file = tmp_path / "term.json"
    code, out, _ = run(capsys, "fit1d", "--function", "sin-pi", "--eps", "1e-2", "--out", str(term_file))
    report = json.loads(out)
    assert code == 0 and float(report["sigma_error"]) < 1e-2
    assert json.loads(term_file.read_text())["cf"]
    assert run(capsys, "fit1d", "--function", "nope")[0] == 2
    assert run(capsys, "fit1d", "--function", "abs-shift", "--eps", "1e-5", "--max-degree", "4")[0] == 3


def test_build_verify_cycle(capsys, tmp_path):
    model = tmp_path / "m.json"
    code, out, _ = run(capsys, "build", "--function", "mean2", "--d", "2", "--eps", "0.2", "--out", str(model))
    assert code == 0
    assert float(json.loads(out)["measured_error"]) <= 0.2
    code, out, _ = run(capsys, "verify", str(model), "--function", "mean2", "--grid", "17")
    assert code == 0 and json.loads(out)["ok"]
    assert run(capsys, "verify", str(model), "--grid", "1")[0] == 2
    assert run(capsys, "verify", str(tmp_path / "missing.json"))[0] == 2

    obj = json.loads(model.read_text())
    obj["e"] = [str(float(v) * 1.5) for v in obj["e"]]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(obj))
    assert run(capsys, "verify", str(bad), "--function", "mean2")[0] in (1, 2)


def test_corrupted_model_fails_verification(capsys, tmp_path):
    model = tmp_path / "c.json"
    assert run(capsys, "build", "--function", "const:1.5", "--d", "1", "--out", str(model))[0] == 0
    obj = json.loads(model.read_text())
    obj["constant_unit"]["e"] = "0"
    model.write_text(json.dumps(obj))
    assert run(capsys, "verify", str(model), "--function", "const:1.5")[0] == 1


@pytest.mark.parametrize("fn,d,eps", [("identity", 1, "0.01"), ("sin-pi", 1, "0.05"), ("abs-shift", 1, "0.1"),
                                      ("const:-2", 2, "0.01"), ("product2", 2, "1.0")])
def test_documented_eps_verify(capsys, tmp_path, fn, d, eps):
    model = tmp_path / "m.json"
    assert run(capsys, "build", "--function", fn, "--d", str(d), "--eps", eps, "--out", str(model))[0] == 0
    assert run(capsys, "verify", str(model), "--function", fn)[0] == 0


def test_build_budget_failure_and_usage(capsys):
    assert run(capsys, "build", "--function", "product2", "--d", "2", "--eps", "0.05")[0] == 3
    assert run(capsys, "build", "--function", "identity", "--d", "2")[0] == 2
    assert run(capsys, "build", "--b", "9")[0] == 2
    assert run(capsys, "build", "--eps", "-1")[0] == 2
    assert run(capsys)[0] == 2


def test_csv_target(capsys, tmp_path):
    samples = tmp_path / "s.csv"
    lines = ["x,f"] + [f"{i / 16},{(i / 16) ** 2}" for i in range(17)]
    samples.write_text("\n".join(lines) + "\n")
    code, out, _ = run(capsys, "fit1d", "--function", f"csv:{samples}", "--eps", "0.01")
    assert code == 0
    assert run(capsys, "fit1d", "--function", f"csv:{tmp_path / 'none.csv'}")[0] == 2


def test_build_is_byte_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert run(capsys, "build", "--function", "mean2", "--d", "2", "--eps", "0.2", "--out", str(path))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_help_exits_cleanly(capsys):
    assert run(capsys, "--help")[0] == 0
