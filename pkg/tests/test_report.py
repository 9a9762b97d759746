import csv

import pytest

from lutread.errors import FormatError
from lutread.report import (read_log, read_trajectory, render_run_report,
                            write_summary_csv)
from lutread.search import write_log_csv, write_trajectory_csv


@pytest.fixture()
def run_dir(tmp_path):
    d = tmp_path / "run"
    d.mkdir()
    write_trajectory_csv(d / "trajectory.csv", [0.9, 0.7, 0.7, 0.5])
    rows = [(g, i, 0.5 + 0.1 * i + 0.01 * g, 100.0 + 10 * i, 8 + i, 0.95)
            for g in range(3) for i in range(4)]
    rows.append((0, 4, 1e9, 0.0, 0, 0.0))  # one sentinel candidate
    write_log_csv(d / "search_log.csv", rows)
    return d


def test_round_trip_readers(run_dir):
    gens, costs = read_trajectory(run_dir / "trajectory.csv")
    assert gens == [0, 1, 2, 3]
    assert costs == [0.9, 0.7, 0.7, 0.5]
    rows = read_log(run_dir / "search_log.csv")
    assert len(rows) == 13
    assert rows[0]["generation"] == 0 and rows[0]["latency"] == 8


def test_reader_header_checks(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("foo,bar\n1,2\n")
    with pytest.raises(FormatError):
        read_trajectory(bad)
    with pytest.raises(FormatError):
        read_log(bad)


def test_render_run_report(run_dir, tmp_path):
    out = tmp_path / "report"
    outputs = render_run_report(run_dir, out)
    names = {p.name for p in outputs}
    assert names == {"trajectory.png", "population.png", "tradeoffs.png",
                     "summary.csv"}
    for p in outputs:
        assert p.exists() and p.stat().st_size > 0
    # PNG magic on the figures
    for p in outputs:
        if p.suffix == ".png":
            assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_render_without_log(run_dir, tmp_path):
    (run_dir / "search_log.csv").unlink()
    outputs = render_run_report(run_dir, tmp_path / "r")
    assert [p.name for p in outputs] == ["trajectory.png"]


def test_render_missing_trajectory(tmp_path):
    with pytest.raises(FormatError):
        render_run_report(tmp_path, tmp_path / "out")


def test_summary_columns_and_sentinel_exclusion(run_dir, tmp_path):
    rows = read_log(run_dir / "search_log.csv")
    out = tmp_path / "summary.csv"
    write_summary_csv(rows, out)
    with open(out, newline="") as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["generation", "evaluations", "feasible", "min_cost",
                       "mean_cost", "best_fidelity", "min_area", "min_latency"]
    gen0 = table[1]
    assert gen0[1] == "5" and gen0[2] == "4"  # sentinel counted but infeasible
