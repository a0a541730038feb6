"""The sampling oracle that cross-checks every closed-form moment."""
import numpy as np
import pytest

from twrelay.beamforming import BeamformerKind
from twrelay.config import SystemConfig
from twrelay.moments import (
    MomentCheck,
    OracleReport,
    check_gaussian_fourth_moments,
    check_inverse_wishart,
    check_relay_gain_moments,
    run_oracle_suite,
)


def test_check_status_gating():
    ok = MomentCheck("a", analytic=1.0, estimate=1.02, stderr=0.01, n_samples=5000)
    assert ok.status == "pass"
    assert ok.z_score == pytest.approx(2.0)

    off = MomentCheck("b", analytic=1.0, estimate=1.1, stderr=0.01, n_samples=5000)
    assert off.status == "fail"
    assert off.z_score == pytest.approx(10.0)

    # The same gap on too few samples is reported but never called a failure.
    weak = MomentCheck("c", analytic=1.0, estimate=1.1, stderr=0.01, n_samples=200)
    assert weak.status == "inconclusive"


def test_check_handles_zero_stderr():
    exact = MomentCheck("d", analytic=2.0, estimate=2.0, stderr=0.0, n_samples=10)
    assert exact.status == "pass"
    assert exact.z_score == 0.0
    broken = MomentCheck("e", analytic=2.0, estimate=3.0, stderr=0.0, n_samples=2000)
    assert broken.status == "fail"
    assert broken.z_score == np.inf


def test_report_aggregates():
    report = OracleReport(
        checks=(
            MomentCheck("one", 1.0, 1.0, 0.1, 2000),
            MomentCheck("two", 1.0, 9.0, 0.1, 2000),
            MomentCheck("three", 1.0, 9.0, 0.1, 200),
        )
    )
    assert (report.n_pass, report.n_fail, report.n_inconclusive) == (1, 1, 1)
    assert not report.passed
    assert report.failing_names() == ["two"]
    rows = report.to_csv_rows()
    assert rows[0] == ("name", "analytic", "estimate", "stderr", "z_score", "status")
    assert len(rows) == 4
    table = report.format_table()
    assert "two" in table
    assert "1 pass, 1 fail, 1 inconclusive" in table


def test_gaussian_moment_checks_pass():
    rng = np.random.default_rng(42)
    checks = check_gaussian_fourth_moments(16, 1.3, 0.7, 20_000, rng)
    assert all(c.status == "pass" for c in checks), [
        (c.name, c.z_score) for c in checks
    ]
    assert any("norm-fourth" in c.name for c in checks)


def test_inverse_wishart_checks_pass():
    rng = np.random.default_rng(43)
    d = 0.5 + 0.25 * np.arange(4)
    checks = check_inverse_wishart(16, 2, d, 20_000, rng)
    assert all(c.status == "pass" for c in checks), [
        (c.name, c.z_score) for c in checks
    ]


def test_relay_gain_checks_pass_for_both_kinds():
    cfg = SystemConfig(
        n_relay_antennas=16,
        n_pairs=1,
        coherence_symbols=200,
        training_symbols=2,
        noise_variance=1.0,
        pilot_power=10.0,
        large_scale=np.array([0.8, 1.1]),
    )
    for kind in BeamformerKind:
        rng = np.random.default_rng(44)
        checks = check_relay_gain_moments(
            cfg, kind, user_powers=np.array([0.5, 1.0]), relay_power=4.0,
            n_samples=20_000, rng=rng,
        )
        assert all(c.status == "pass" for c in checks), [
            (c.name, c.z_score) for c in checks if c.status != "pass"
        ]


def test_suite_is_deterministic():
    a = run_oracle_suite(seed=7, n_samples=500)
    b = run_oracle_suite(seed=7, n_samples=500)
    assert [c.estimate for c in a.checks] == [c.estimate for c in b.checks]
    assert [c.name for c in a.checks] == [c.name for c in b.checks]
    # 500 samples cannot conclusively fail anything.
    assert a.n_fail == 0


def test_suite_names_are_unique():
    report = run_oracle_suite(seed=1, n_samples=200)
    names = [c.name for c in report.checks]
    assert len(names) == len(set(names))
    assert len(names) > 50
