"""Figure rendering, kept light: correctness of the plots is eyeballed, the
tests only pin the file contract and the series grouping."""
from pathlib import Path

import pytest

from twrelay.experiments import build_preset
from twrelay.figures import _collect_sum_series, render_csv

GOLDEN = Path(__file__).parent / "data" / "smoke_golden.csv"


def golden_rows():
    import csv

    with open(GOLDEN, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return list(reader)


def test_sum_series_grouping():
    series = _collect_sum_series(golden_rows())
    assert set(series) == {"mrc-mrt", "zfr-zft"}
    for kind, groups in series.items():
        assert set(groups) == {("epa", "mc"), ("epa", "bound")}
        xs, ys, errs = groups[("epa", "mc")]
        assert xs == [0.0, 10.0]
        assert all(y > 0 for y in ys)
        assert all(e > 0 for e in errs)
        _, _, bound_errs = groups[("epa", "bound")]
        assert bound_errs == [0.0, 0.0]


def test_render_from_csv_writes_png(tmp_path):
    out = tmp_path / "replot.png"
    render_csv(GOLDEN, out, build_preset("smoke"))
    data = out.read_bytes()
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    assert len(data) > 5000


def test_render_rejects_foreign_csv(tmp_path):
    bad = tmp_path / "foreign.csv"
    bad.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError, match="column count"):
        render_csv(bad, tmp_path / "x.png", build_preset("smoke"))
