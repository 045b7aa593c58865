import csv
import io

import pytest

from fed_distill.cli import main, parse_class_range
from fed_distill.errors import InputError

WORKED = [
    "--xdist", "40000", "--logit-width", "10", "--conf", "40000", "--mask", "2",
    "--params", "9146954", "--rounds", "10", "--clients", "1",
]


def test_cost_reproduces_worked_numbers(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["cost", *WORKED]) == 0
    rows = dict(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows["fedavg"] == "182939080"
    assert rows["dlsh"] == "440000"
    assert rows["dlmh"] == "120002"
    assert rows["idlmh"] == "80000"


def test_cost_with_zero_operands(capsys: pytest.CaptureFixture[str]) -> None:
    zeros = ["--xdist", "0", "--logit-width", "0", "--conf", "0", "--mask", "0", "--params", "0",
             "--rounds", "0", "--clients", "0"]
    assert main(["cost", *zeros]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "protocol,total"
    assert all(line.endswith(",0") for line in lines[1:])


def test_cost_sweep(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["cost", "--sweep-classes", "1..100", *WORKED]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 100
    dlmh = [int(r["dlmh"]) for r in rows]
    assert all(a < b for a, b in zip(dlmh, dlmh[1:]))
    assert {r["fedavg"] for r in rows} == {"182939080"}


def test_bad_sweep_range(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["cost", "--sweep-classes", "10..2"]) == 1
    assert "class range" in capsys.readouterr().err


def test_parse_class_range() -> None:
    assert parse_class_range("3..5") == [3, 4, 5]
    with pytest.raises(InputError):
        parse_class_range("3-5")


def _partition_rows(out: str) -> list[list[str]]:
    return list(csv.reader(io.StringIO(out)))[1:]


def test_partition_check_niid1(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["partition-check", "--scheme", "NIID1", "--clients", "5", "--classes", "10", "--seed", "0"]) == 0
    rows = _partition_rows(capsys.readouterr().out)
    probs = [r for r in rows if r[1] == "probability"]
    assert len(probs) == 5
    for i, row in enumerate(probs):
        values = [float(v) for v in row[2:]]
        assert [c for c, v in enumerate(values) if v > 0] == [2 * i, 2 * i + 1]
        assert values[2 * i] == 0.5


def test_partition_check_iid_rows_equal(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["partition-check", "--scheme", "IID", "--clients", "3", "--classes", "10", "--draws", "10"]) == 0
    probs = [r[2:] for r in _partition_rows(capsys.readouterr().out) if r[1] == "probability"]
    assert probs[0] == probs[1] == probs[2]


def test_partition_check_frequencies_track_probabilities(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["partition-check", "--scheme", "NIID2", "--clients", "5", "--classes", "10", "--seed", "3"]) == 0
    rows = _partition_rows(capsys.readouterr().out)
    for prob_row, freq_row in zip(rows[::2], rows[1::2]):
        assert prob_row[0] == freq_row[0]
        for p, f in zip(prob_row[2:], freq_row[2:]):
            assert abs(float(p) - float(f)) < 0.01


def test_partition_check_rejects_bad_scheme(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["partition-check", "--scheme", "NIID3", "--clients", "5", "--classes", "12"]) == 1
    assert "NIID3" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys: pytest.CaptureFixture[str]) -> None:
    missing = tmp_path / "absent.cfg"
    assert main(["run", "--config", str(missing), "--out", str(tmp_path / "out")]) == 1
    assert "absent.cfg" in capsys.readouterr().err
