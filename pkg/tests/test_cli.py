import csv
import io
from pathlib import Path

import pytest

from illposed_iter import cli
from illposed_iter.config import parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SECOND_KIND = """
[experiment]
n_max = 40

[operator]
kind = second
spectrum = points(0.5)

[problem]
rhs = const(1)
solution = const(2)
initial = const(3)
"""

BAD_SPECTRUM = """
[operator]
kind = first
spectrum = points(0.5, 2.5)

[problem]
solution = const(1)

[scheme]
scheme = explicit-power alpha=1 k=1
"""

RATES = """
[experiment]
n_max = 10000

[scheme]
scheme = explicit-power alpha=1 k=1

[functions]
theta = power(1)

[rates]
interval = 0 1
points = 25
"""


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_run_second_kind_geometric(tmp_path, capsys):
    assert cli.main(["run", "--config", write(tmp_path, SECOND_KIND)]) == 0
    table = rows(capsys.readouterr().out)
    assert len(table) == 41
    for r in table:
        n = int(r["n"])
        # 2 * 0.5^n * |x0/2 - f| with x0 = 3, f = 1
        assert float(r["error"]) == 2 * 0.5**n * abs(3 / 2 - 1)


def test_offending_spectrum_exit_2(tmp_path, capsys):
    assert cli.main(["run", "--config", write(tmp_path, BAD_SPECTRUM)]) == cli.EXIT_INVALID
    err = capsys.readouterr().err
    assert "2.5" in err and "b)" in err


def test_parse_error_reports_position(tmp_path, capsys):
    path = write(tmp_path, "[experiment]\nn_max = many\n")
    assert cli.main(["run", "--config", path]) == cli.EXIT_INVALID
    assert f"{path}:2:9:" in capsys.readouterr().err


def test_missing_config_exit_1(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "nope.ini")]) == cli.EXIT_IO


def test_unwritable_output_exit_1(tmp_path):
    path = write(tmp_path, SECOND_KIND)
    out = tmp_path / "missing-dir" / "x.csv"
    assert cli.main(["run", "--config", path, "--out", str(out)]) == cli.EXIT_IO


def test_numerical_failure_exit_3(tmp_path, monkeypatch):
    def boom(cfg, jobs=1):
        raise FloatingPointError("overflow")
    monkeypatch.setitem(cli.COMMAND_FUNCS, "run", boom)
    assert cli.main(["run", "--config", write(tmp_path, SECOND_KIND)]) == cli.EXIT_NUMERIC


def test_command_mismatch(tmp_path):
    path = write(tmp_path, "[experiment]\ncommand = rates\n" + SECOND_KIND.split("\n", 3)[3])
    assert cli.main(["run", "--config", path]) == cli.EXIT_INVALID


def test_dry_run_writes_nothing(tmp_path, capsys):
    out = tmp_path / "x.csv"
    path = write(tmp_path, SECOND_KIND)
    assert cli.main(["run", "--config", path, "--out", str(out), "--dry-run",
                     "--set", "experiment.n_max=5"]) == 0
    printed = capsys.readouterr().out
    assert not out.exists()
    cfg = parse_config(printed)
    assert cfg.n_max == 5 and cfg.output == str(out) and cfg.command == "run"


def test_output_file_and_determinism(tmp_path):
    path = write(tmp_path, RATES)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["rates", "--config", path, "--out", str(a)]) == 0
    assert cli.main(["rates", "--config", path, "--out", str(b), "--jobs", "4"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_rates_rows(tmp_path, capsys):
    assert cli.main(["rates", "--config", write(tmp_path, RATES)]) == 0
    table = rows(capsys.readouterr().out)
    assert table[0]["n"] == "0" and float(table[0]["gamma_numeric"]) == 1.0
    assert table[0]["gamma_asymptotic"] == ""
    one = table[1]
    assert one["n"] == "1"
    assert float(one["gamma_numeric"]) == pytest.approx(0.25, rel=1e-12)
    assert float(one["gamma_closed_form"]) == 0.25
    for r in table:
        if int(r["n"]) >= 1000:
            ratio = float(r["gamma_numeric"]) / float(r["gamma_asymptotic"])
            assert 0.95 <= ratio <= 1.05


def test_compare_duplicate_scheme(tmp_path, capsys):
    text = RATES.replace("scheme = explicit-power alpha=1 k=1",
                         "scheme = explicit-power alpha=1 k=1\nscheme = explicit-power alpha=1 k=1")
    assert cli.main(["compare", "--config", write(tmp_path, text)]) == 0
    lines = capsys.readouterr().out.splitlines()
    for line in lines[1:]:
        _, a, b = line.split(",")
        assert a == b
    assert lines[-1].startswith("fit_p,")


def test_compare_needs_two_schemes(tmp_path):
    assert cli.main(["compare", "--config", write(tmp_path, RATES)]) == cli.EXIT_INVALID


def test_shipped_explicit_compare(capsys):
    assert cli.main(["compare", "--config", str(CONFIGS / "compare_explicit.ini")]) == 0
    p_row = capsys.readouterr().out.splitlines()[-1].split(",")
    assert float(p_row[1]) == pytest.approx(1.0, rel=0.03)
    assert float(p_row[2]) == pytest.approx(0.5, rel=0.03)


def test_shipped_noise_config(capsys):
    """Default sweep: stop rule lands within 3x of the best achievable error."""
    assert cli.main(["noise", "--config", str(CONFIGS / "noise_default.ini"), "--jobs", "4"]) == 0
    table = rows(capsys.readouterr().out)
    n_max = parse_config((CONFIGS / "noise_default.ini").read_text()).n_max
    assert [float(r["delta"]) for r in table] == sorted((float(r["delta"]) for r in table),
                                                       reverse=True)
    best = [float(r["best_error"]) for r in table]
    assert best == sorted(best, reverse=True)
    for r in table:
        assert float(r["error_at_stop"]) <= 3 * float(r["best_error"])
    assert int(table[-1]["stop_n"]) == n_max and float(table[-1]["delta"]) == 0.0


def test_shipped_oracle_config(capsys):
    assert cli.main(["oracle-check", "--config", str(CONFIGS / "oracle_check.ini"),
                     "--jobs", "4"]) == 0
    table = rows(capsys.readouterr().out)
    assert len(table) == 50 and all(r["passed"] == "yes" for r in table)


@pytest.mark.parametrize("name", ["run_first_kind.ini", "run_second_kind.ini",
                                  "rates_explicit_power.ini", "compare_implicit.ini"])
def test_shipped_configs_run(name, tmp_path):
    cfg = parse_config((CONFIGS / name).read_text())
    out = tmp_path / "o.csv"
    assert cli.main([cfg.command, "--config", str(CONFIGS / name), "--out", str(out)]) == 0
    assert out.read_text().count("\n") > 2


def test_run_from_table(tmp_path, capsys):
    table = tmp_path / "op.txt"
    table.write_text("# kind=second\n# columns=lambda weight f start\n0.5 1 1 3\n")
    text = SECOND_KIND.replace("spectrum = points(0.5)", f"table = {table}").replace(
        "rhs = const(1)", "rhs = table(f)").replace("initial = const(3)", "initial = table(start)")
    assert cli.main(["run", "--config", write(tmp_path, text)]) == 0
    table_rows = rows(capsys.readouterr().out)
    assert float(table_rows[3]["error"]) == 0.125


def test_missing_table_exit_1(tmp_path):
    text = SECOND_KIND.replace("spectrum = points(0.5)", f"table = {tmp_path / 'none.txt'}")
    assert cli.main(["run", "--config", write(tmp_path, text)]) == cli.EXIT_IO
