"""Experiment specs, grid execution, output files, and the presets."""
import csv
import json
import os
from pathlib import Path

import pytest
import yaml

import twrelay.figures
from twrelay.experiments import (
    CSV_COLUMNS,
    ExperimentError,
    build_preset,
    load_spec,
    preset_names,
    run_experiment,
    spec_from_dict,
)

GOLDEN = Path(__file__).parent / "data" / "smoke_golden.csv"


def minimal_spec_dict(**overrides):
    data = {
        "system": {
            "n_pairs": 1,
            "n_relay_antennas": 12,
            "coherence_symbols": 40,
            "training_symbols": 2,
            "pilot_power_db": 10,
        },
        "sweep": {"variable": "P_S_db", "values": [0, 10]},
        "schemes": [
            {"label": "epa", "mode": "direct", "user_power_db": "sweep"},
        ],
        "trials": 16,
        "seed": 3,
    }
    data.update(overrides)
    return data


def test_spec_requires_core_sections():
    for missing in ("system", "sweep", "schemes"):
        data = minimal_spec_dict()
        del data[missing]
        with pytest.raises(ExperimentError, match=missing):
            spec_from_dict(data)
    with pytest.raises(ExperimentError):
        spec_from_dict(["not", "a", "mapping"])


def test_spec_rejects_bad_fields():
    with pytest.raises(ExperimentError, match="sweep variable"):
        spec_from_dict(minimal_spec_dict(sweep={"variable": "bogus", "values": [1]}))
    with pytest.raises(ExperimentError, match="estimator"):
        spec_from_dict(minimal_spec_dict(estimators=["mc", "exact"]))
    with pytest.raises(ExperimentError, match="trials"):
        spec_from_dict(minimal_spec_dict(trials=0))
    with pytest.raises(ExperimentError, match="mode"):
        spec_from_dict(
            minimal_spec_dict(schemes=[{"label": "x", "mode": "psychic"}])
        )
    with pytest.raises(ExperimentError, match="label"):
        spec_from_dict(minimal_spec_dict(schemes=[{"mode": "epa"}]))


def test_spec_loads_from_yaml_file(tmp_path):
    path = tmp_path / "sweep_users.yaml"
    path.write_text(yaml.safe_dump(minimal_spec_dict()))
    spec = load_spec(path)
    assert spec.name == "sweep_users"
    assert spec.sweep_values == (0, 10)
    assert spec.trials == 16


def test_presets_all_build():
    for name in preset_names():
        spec = build_preset(name)
        assert spec.name == name
        assert spec.sweep_values
    with pytest.raises(ExperimentError, match="unknown preset"):
        build_preset("fig99")


def test_optimization_preset_fading_profile():
    spec = build_preset("fig5")
    profile = spec.base_system["large_scale"]
    assert len(profile) == 20
    assert profile[0] == 0.749
    assert profile[12] == 1.000
    assert profile[14] == 0.014


def test_large_array_preset_uses_unit_product_pairs():
    spec = build_preset("fig6")
    profile = spec.base_system["large_scale"]
    pairs = [profile[i] * profile[i + 1] for i in range(0, len(profile), 2)]
    assert pairs == pytest.approx([1.0] * (len(profile) // 2))


def test_smoke_run_writes_all_outputs(tmp_path):
    spec = build_preset("smoke")
    written = run_experiment(spec, output=str(tmp_path / "out"), render=True)
    assert set(written) == {"csv", "json", "png"}
    for path in written.values():
        assert os.path.exists(path)
        assert os.path.getsize(path) > 0

    with open(written["csv"], newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    # 2 sweep values x 2 beamformers x 2 estimators x (2 links + SUM).
    assert len(rows) - 1 == 2 * 2 * 2 * 3
    kinds = {r[1] for r in rows[1:]}
    assert kinds == {"mrc-mrt", "zfr-zft"}
    assert {r[6] for r in rows[1:]} == {"mc", "bound"}

    with open(written["json"]) as fh:
        meta = json.load(fh)
    assert meta["seed"] == spec.seed
    assert meta["trials"] == spec.trials
    assert meta["csv_columns"] == list(CSV_COLUMNS)
    assert meta["sweep"]["values_linear"] == pytest.approx([1.0, 10.0])
    assert meta["generator"].startswith("twrelay ")


def test_smoke_run_matches_golden_file(tmp_path):
    written = run_experiment(
        build_preset("smoke"), output=str(tmp_path / "smoke"), render=False
    )
    assert Path(written["csv"]).read_bytes() == GOLDEN.read_bytes()


def test_worker_count_does_not_change_results(tmp_path, monkeypatch):
    spec = build_preset("smoke")
    serial = run_experiment(spec, output=str(tmp_path / "serial"), render=False)
    monkeypatch.setenv("TWRELAY_WORKERS", "2")
    parallel = run_experiment(spec, output=str(tmp_path / "parallel"), render=False)
    assert (
        Path(serial["csv"]).read_bytes() == Path(parallel["csv"]).read_bytes()
    )
    assert (
        Path(serial["json"]).read_bytes() == Path(parallel["json"]).read_bytes()
    )


def test_worker_env_must_be_integer(tmp_path, monkeypatch):
    monkeypatch.setenv("TWRELAY_WORKERS", "many")
    with pytest.raises(ExperimentError, match="TWRELAY_WORKERS"):
        run_experiment(build_preset("smoke"), output=str(tmp_path / "x"), render=False)


def test_failed_run_leaves_no_partial_outputs(tmp_path, monkeypatch):
    def boom(rows, spec, path):
        raise RuntimeError("render failure injected by the test")

    monkeypatch.setattr(twrelay.figures, "render_experiment", boom)
    with pytest.raises(RuntimeError, match="injected"):
        run_experiment(build_preset("smoke"), output=str(tmp_path / "out"), render=True)
    assert list(tmp_path.iterdir()) == []


def test_mismatched_sweep_scheme_fails_cleanly(tmp_path):
    # user_power_db="sweep" is only meaningful when user power is the sweep
    # variable; the run must fail without leaving output files behind.
    data = minimal_spec_dict(sweep={"variable": "N", "values": [8, 12]})
    spec = spec_from_dict(data)
    with pytest.raises(ExperimentError, match="sweep"):
        run_experiment(spec, output=str(tmp_path / "bad"), render=False)
    assert list(tmp_path.iterdir()) == []


def test_antenna_ratio_resolves_against_swept_pairs(tmp_path):
    data = minimal_spec_dict(
        sweep={"variable": "K", "values": [1, 2]},
        schemes=[
            {
                "label": "ratio",
                "mode": "epa",
                "budget": {"total": 8.0},
                "antenna_ratio": 16,
            }
        ],
    )
    data["system"].pop("n_relay_antennas")
    data["system"]["training_symbols"] = "2K"
    spec = spec_from_dict(data)
    written = run_experiment(spec, output=str(tmp_path / "ratio"), render=False)
    with open(written["csv"], newline="") as fh:
        rows = list(csv.reader(fh))
    # K = 2 rows must carry four per-link entries, confirming N and tau
    # scaled with the swept pair count rather than staying at their K=1 size.
    k2_links = {r[5] for r in rows[1:] if r[4] == "2"}
    assert k2_links == {"0", "1", "2", "3", "SUM"}
