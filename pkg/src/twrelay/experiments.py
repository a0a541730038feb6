"""Experiment definitions and the sweep runner behind the command line.

An experiment sweeps one variable (antenna count, pair count, per-user
power, or pilot power) over a grid, evaluates one or more power schemes
under one or both beamformers, and writes:

* ``<out>.csv``   - one row per (grid point, beamformer, scheme, estimator,
                    link or SUM aggregate),
* ``<out>.json``  - provenance: full configuration, seed, package version,
                    with power quantities recorded in linear and dB, and
* ``<out>.png``   - a rendered summary figure of the SUM rows.

Runs are deterministic for a given spec and seed: grid tasks are enumerated
in a fixed order and each draws its random stream from an independently
spawned child seed, so the worker count (``TWRELAY_WORKERS``) never changes
the numbers.  Output is written to temporaries and renamed at the end; a
failure mid-run leaves no partial files behind.
"""
from __future__ import annotations

import csv
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import yaml

from . import __version__
from .allocation import aopa_mrc, aopa_zf, epa, opa, OpaSettings
from .beamforming import BeamformerKind
from .config import (
    ConfigError,
    PowerAllocation,
    PowerBudget,
    SystemConfig,
    budget_from_dict,
    db_to_linear,
    linear_to_db,
    validate_config,
)
from .rates import bound_rates, monte_carlo_rate

__all__ = [
    "ExperimentError",
    "ExperimentSpec",
    "spec_from_dict",
    "load_spec",
    "preset_names",
    "build_preset",
    "run_experiment",
    "CSV_COLUMNS",
]

CSV_COLUMNS = (
    "preset",
    "kind",
    "scheme",
    "sweep_var",
    "sweep_value",
    "link_id",
    "estimator",
    "value",
    "stderr",
)

SWEEP_VARIABLES = ("N", "K", "P_S_db", "p_P_db")


class ExperimentError(ValueError):
    """An experiment spec is malformed or inconsistent."""


@dataclass(frozen=True)
class ExperimentSpec:
    """A fully resolved experiment: grid, schemes, estimators, seed, output.

    ``schemes`` entries are plain mappings (see :func:`spec_from_dict` for
    the accepted keys); keeping them declarative means YAML files and the
    built-in presets share one code path.
    """

    name: str
    base_system: dict
    sweep_var: str
    sweep_values: tuple
    beamformers: tuple
    schemes: tuple
    estimators: tuple = ("mc", "bound")
    trials: int = 2_000
    seed: int = 0
    output: str | None = None

    def __post_init__(self):
        if self.sweep_var not in SWEEP_VARIABLES:
            raise ExperimentError(
                f"sweep variable must be one of {SWEEP_VARIABLES}, got {self.sweep_var!r}"
            )
        if not self.sweep_values:
            raise ExperimentError("sweep grid is empty")
        if not self.beamformers:
            raise ExperimentError("no beamformers selected")
        if not self.schemes:
            raise ExperimentError("no power schemes given")
        for est in self.estimators:
            if est not in ("mc", "bound"):
                raise ExperimentError(f"unknown estimator {est!r}")
        if self.trials < 1:
            raise ExperimentError(f"trials must be >= 1, got {self.trials}")
        for entry in self.schemes:
            if "label" not in entry or "mode" not in entry:
                raise ExperimentError(
                    f"scheme entry needs 'label' and 'mode': {entry!r}"
                )
            if entry["mode"] not in ("direct", "epa", "opa", "aopa"):
                raise ExperimentError(f"unknown scheme mode {entry['mode']!r}")


def spec_from_dict(data: dict, name: str = "custom") -> ExperimentSpec:
    """Build an :class:`ExperimentSpec` from a parsed YAML mapping.

    Top-level keys: ``system`` (see
    :func:`~twrelay.config.system_config_from_dict`, except that
    ``training_symbols`` may be the string ``"2K"`` and ``large_scale`` may
    be omitted for a unit profile), ``sweep`` (``variable`` + ``values``),
    ``beamformers``, ``schemes``, and optional ``estimators``, ``trials``,
    ``seed``, ``output``.

    Scheme entries: ``label``, ``mode`` plus mode-specific keys.
    ``direct`` uses ``user_power_db`` (number or ``"sweep"``) or ``snr_db``
    (relay power; users get an equal share), and ``relay_power_db`` (number
    or ``"sum-of-users"``).  ``epa``/``opa``/``aopa`` take a ``budget``
    mapping (``total``/``total_db``, optional ``per_user_limit``,
    ``relay_limit``, ``fixed_relay``, each with a ``_db`` variant; for
    ``fixed_relay`` the string ``"half"`` pins the relay to half the total).
    Any entry may carry ``system`` overrides or ``antenna_ratio`` (antennas
    per pair, resolved against the swept pair count).
    """
    if not isinstance(data, dict):
        raise ExperimentError("experiment spec must be a mapping")
    try:
        sweep = data["sweep"]
        system = data["system"]
        schemes = data["schemes"]
    except KeyError as missing:
        raise ExperimentError(f"spec is missing the {missing.args[0]!r} section") from None
    if not isinstance(sweep, dict) or "variable" not in sweep or "values" not in sweep:
        raise ExperimentError("sweep section needs 'variable' and 'values'")
    kinds = tuple(
        BeamformerKind.parse(k)
        for k in data.get("beamformers", ["mrc-mrt", "zfr-zft"])
    )
    return ExperimentSpec(
        name=str(data.get("name", name)),
        base_system=dict(system),
        sweep_var=str(sweep["variable"]),
        sweep_values=tuple(sweep["values"]),
        beamformers=kinds,
        schemes=tuple(dict(s) for s in schemes),
        estimators=tuple(data.get("estimators", ("mc", "bound"))),
        trials=int(data.get("trials", 2_000)),
        seed=int(data.get("seed", 0)),
        output=data.get("output"),
    )


def load_spec(path) -> ExperimentSpec:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    name = os.path.splitext(os.path.basename(str(path)))[0]
    return spec_from_dict(data, name=name)


# --------------------------------------------------------------------------
# Grid-point resolution


def _resolve_system(spec: ExperimentSpec, entry: dict, sweep_value) -> SystemConfig:
    fields = dict(spec.base_system)
    fields.update(entry.get("system", {}))

    if spec.sweep_var == "N":
        fields["n_relay_antennas"] = int(sweep_value)
    elif spec.sweep_var == "K":
        fields["n_pairs"] = int(sweep_value)
    elif spec.sweep_var == "p_P_db":
        fields["pilot_power"] = float(db_to_linear(sweep_value))
        fields.pop("pilot_power_db", None)

    k = int(fields["n_pairs"])
    if entry.get("antenna_ratio") is not None:
        fields["n_relay_antennas"] = int(entry["antenna_ratio"]) * k
    if fields.get("training_symbols") == "2K":
        fields["training_symbols"] = 2 * k
    ls = fields.get("large_scale")
    if ls is not None and len(ls) != 2 * k:
        raise ExperimentError(
            f"large_scale has {len(ls)} entries but the grid point has {2 * k} users"
        )
    if "pilot_power_db" in fields:
        fields["pilot_power"] = float(db_to_linear(fields.pop("pilot_power_db")))

    try:
        cfg = SystemConfig(
            n_relay_antennas=int(fields["n_relay_antennas"]),
            n_pairs=k,
            coherence_symbols=int(fields["coherence_symbols"]),
            training_symbols=int(fields["training_symbols"]),
            noise_variance=float(fields.get("noise_variance", 1.0)),
            pilot_power=float(fields.get("pilot_power", 1.0)),
            large_scale=ls,
        )
        return validate_config(cfg)
    except KeyError as missing:
        raise ExperimentError(f"system section is missing {missing.args[0]!r}") from None
    except ConfigError as err:
        raise ExperimentError(
            f"grid point {spec.sweep_var}={sweep_value} is invalid: {err}"
        ) from err


def _resolve_budget(entry: dict) -> PowerBudget:
    raw = dict(entry.get("budget") or {})
    if not raw:
        raise ExperimentError(
            f"scheme {entry.get('label')!r} needs a budget section"
        )
    fixed = raw.get("fixed_relay")
    if fixed == "half":
        total = raw.get("total")
        if total is None and "total_db" in raw:
            total = float(db_to_linear(raw["total_db"]))
        if total is None:
            raise ExperimentError("budget with fixed_relay 'half' needs a total")
        raw["fixed_relay"] = float(total) / 2.0
    try:
        return budget_from_dict(raw)
    except ConfigError as err:
        raise ExperimentError(f"bad budget in scheme {entry.get('label')!r}: {err}") from err


def _resolve_allocation(
    entry: dict,
    cfg: SystemConfig,
    kind: BeamformerKind,
    spec: ExperimentSpec,
    sweep_value,
) -> tuple[PowerAllocation, dict]:
    """Materialize a scheme entry at one grid point.  Returns (allocation, meta)."""
    mode = entry["mode"]
    meta: dict = {}
    if mode == "direct":
        if entry.get("snr_db") is not None:
            relay = float(db_to_linear(entry["snr_db"]))
            user = relay / cfg.n_users
        else:
            user_db = entry.get("user_power_db")
            if user_db == "sweep":
                if spec.sweep_var != "P_S_db":
                    raise ExperimentError(
                        f"scheme {entry['label']!r} sweeps user power but the "
                        f"sweep variable is {spec.sweep_var}"
                    )
                user = float(db_to_linear(sweep_value))
            elif user_db is None:
                raise ExperimentError(
                    f"direct scheme {entry['label']!r} needs user_power_db or snr_db"
                )
            else:
                user = float(db_to_linear(user_db))
            relay_db = entry.get("relay_power_db", "sum-of-users")
            if relay_db == "sum-of-users":
                relay = cfg.n_users * user
            else:
                relay = float(db_to_linear(relay_db))
        alloc = PowerAllocation(
            user_powers=np.full(cfg.n_users, user), relay_power=relay
        )
        return alloc, meta

    budget = _resolve_budget(entry)
    if mode == "epa":
        return epa(cfg.n_pairs, budget), meta
    if mode == "aopa":
        alloc = (
            aopa_mrc(cfg, budget)
            if kind is BeamformerKind.MRC_MRT
            else aopa_zf(cfg, budget)
        )
        return alloc, meta
    settings = OpaSettings(
        tolerance=float(entry.get("tolerance", 0.01)),
        max_iterations=int(entry.get("max_iterations", 10)),
        trust_ratio=float(entry.get("trust_ratio", 1.1)),
    )
    alloc, trace = opa(cfg, kind, budget, settings)
    meta["iterations"] = trace.n_iterations - 1
    meta["converged"] = trace.converged
    meta["termination"] = trace.termination
    return alloc, meta


# --------------------------------------------------------------------------
# Task execution


@dataclass(frozen=True)
class _Task:
    index: int
    sweep_value: object
    kind: BeamformerKind
    scheme: dict
    seed_entropy: tuple


def _run_task(args):
    spec, task = args
    cfg = _resolve_system(spec, task.scheme, task.sweep_value)
    alloc, meta = _resolve_allocation(
        task.scheme, cfg, task.kind, spec, task.sweep_value
    )
    rows = []
    reports = {}
    if "bound" in spec.estimators:
        reports["bound"] = bound_rates(cfg, task.kind, alloc)
    if "mc" in spec.estimators:
        rng = np.random.default_rng(np.random.SeedSequence(task.seed_entropy))
        reports["mc"] = monte_carlo_rate(
            cfg, task.kind, alloc, n_trials=spec.trials, seed=rng
        )
    for est in spec.estimators:
        rep = reports[est]
        for link in range(cfg.n_users):
            rows.append(
                (
                    spec.name,
                    task.kind.value,
                    task.scheme["label"],
                    spec.sweep_var,
                    task.sweep_value,
                    str(link),
                    est,
                    rep.per_link_rate[link],
                    rep.per_link_stderr[link],
                )
            )
        rows.append(
            (
                spec.name,
                task.kind.value,
                task.scheme["label"],
                spec.sweep_var,
                task.sweep_value,
                "SUM",
                est,
                rep.sum_spectral_efficiency,
                rep.sum_stderr,
            )
        )
    return task.index, rows, meta


def _format_value(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _worker_count() -> int:
    raw = os.environ.get("TWRELAY_WORKERS", "1")
    try:
        count = int(raw)
    except ValueError:
        raise ExperimentError(f"TWRELAY_WORKERS must be an integer, got {raw!r}")
    return max(count, 1)


def run_experiment(spec: ExperimentSpec, output=None, render=True) -> dict:
    """Run every grid task and write CSV, provenance JSON, and a figure.

    Returns a mapping with the written paths.  Deterministic for a fixed
    (spec, seed): task seeds come from spawning the spec seed per task
    index, so neither the worker count nor scheduling order matters.
    """
    out_base = output or spec.output or f"{spec.name}"
    if str(out_base).endswith(".csv"):
        out_base = str(out_base)[:-4]
    out_base = str(out_base)

    # Enumerate tasks in canonical order: sweep x scheme x beamformer.
    # Each task gets its own entropy keyed by (seed, index), so results are
    # independent of how tasks are distributed over workers.
    tasks = []
    for sweep_value in spec.sweep_values:
        for scheme in spec.schemes:
            for kind in spec.beamformers:
                tasks.append((sweep_value, scheme, kind))
    task_objs = [
        _Task(
            index=i,
            sweep_value=sv,
            kind=kind,
            scheme=scheme,
            seed_entropy=(spec.seed, i),
        )
        for i, (sv, scheme, kind) in enumerate(tasks)
    ]

    # Validate every grid point up front so a bad spec fails before any work.
    for task in task_objs:
        _resolve_system(spec, task.scheme, task.sweep_value)

    workers = _worker_count()
    results: dict[int, tuple] = {}
    if workers == 1 or len(task_objs) == 1:
        for task in task_objs:
            idx, rows, meta = _run_task((spec, task))
            results[idx] = (rows, meta)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for idx, rows, meta in pool.map(
                _run_task, [(spec, t) for t in task_objs]
            ):
                results[idx] = (rows, meta)

    all_rows = []
    metas = []
    for task in task_objs:
        rows, meta = results[task.index]
        all_rows.extend(rows)
        if meta:
            metas.append(
                {
                    "sweep_value": task.sweep_value,
                    "scheme": task.scheme["label"],
                    "kind": task.kind.value,
                    **meta,
                }
            )

    csv_path = out_base + ".csv"
    json_path = out_base + ".json"
    png_path = out_base + ".png"
    out_dir = os.path.dirname(os.path.abspath(csv_path))
    os.makedirs(out_dir, exist_ok=True)

    tmp_paths = []
    try:
        fd, tmp_csv = tempfile.mkstemp(dir=out_dir, suffix=".csv")
        tmp_paths.append(tmp_csv)
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in all_rows:
                writer.writerow([_format_value(v) for v in row])

        fd, tmp_json = tempfile.mkstemp(dir=out_dir, suffix=".json")
        tmp_paths.append(tmp_json)
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(_provenance(spec, metas), fh, indent=2, sort_keys=True)
            fh.write("\n")

        tmp_png = None
        if render:
            from .figures import render_experiment

            fd, tmp_png = tempfile.mkstemp(dir=out_dir, suffix=".png")
            os.close(fd)
            tmp_paths.append(tmp_png)
            render_experiment(all_rows, spec, tmp_png)

        os.replace(tmp_csv, csv_path)
        os.replace(tmp_json, json_path)
        written = {"csv": csv_path, "json": json_path}
        if tmp_png is not None:
            os.replace(tmp_png, png_path)
            written["png"] = png_path
        return written
    except BaseException:
        for path in tmp_paths:
            try:
                os.unlink(path)
            except OSError:
                pass
        raise


def _both_units(value_db=None, linear=None) -> dict:
    if value_db is None and linear is None:
        return {}
    if value_db is None:
        value_db = float(linear_to_db(linear))
    if linear is None:
        linear = float(db_to_linear(value_db))
    return {"db": float(value_db), "linear": float(linear)}


def _provenance(spec: ExperimentSpec, metas: list) -> dict:
    sweep: dict = {"variable": spec.sweep_var, "values": list(spec.sweep_values)}
    if spec.sweep_var.endswith("_db"):
        sweep["values_linear"] = [float(db_to_linear(v)) for v in spec.sweep_values]
    schemes = []
    for entry in spec.schemes:
        rec = dict(entry)
        if entry.get("snr_db") is not None:
            # Both aggregate-SNR conventions: relay power, and relay power
            # split across the pairs.
            rec["snr"] = _both_units(value_db=float(entry["snr_db"]))
            rec["snr_per_pair"] = _both_units(
                linear=float(db_to_linear(entry["snr_db"]))
                / (2 * int(spec.base_system.get("n_pairs", 1)))
            )
        schemes.append(rec)
    return {
        "name": spec.name,
        "generator": f"twrelay {__version__}",
        "seed": spec.seed,
        "trials": spec.trials,
        "estimators": list(spec.estimators),
        "beamformers": [k.value for k in spec.beamformers],
        "sweep": sweep,
        "system": dict(spec.base_system),
        "schemes": schemes,
        "scheme_runs": metas,
        "csv_columns": list(CSV_COLUMNS),
    }


# --------------------------------------------------------------------------
# Presets


def _large_scale_profile() -> list:
    """The 20-user slow-fading profile used by the optimization experiments."""
    return [
        0.749, 0.045, 0.246, 0.121, 0.125, 0.142, 0.635, 0.256, 0.021, 0.123,
        0.257, 0.856, 1.000, 0.899, 0.014, 0.759, 0.315, 0.432, 0.195, 0.562,
    ]


def _reciprocal_profile(n_pairs: int) -> list:
    """Pair profile with unit products: one strong and one weak user per pair."""
    first = np.geomspace(0.5, 2.0, n_pairs)
    out = np.empty(2 * n_pairs)
    out[0::2] = first
    out[1::2] = 1.0 / first
    return [float(v) for v in out]


def build_preset(name: str) -> ExperimentSpec:
    """Construct one of the built-in figure presets."""
    base = {
        "n_pairs": 10,
        "coherence_symbols": 200,
        "training_symbols": 20,
        "noise_variance": 1.0,
        "pilot_power_db": 10,
    }
    if name == "fig2":
        return ExperimentSpec(
            name="fig2",
            base_system={**base, "n_relay_antennas": 128},
            sweep_var="P_S_db",
            sweep_values=(-10, -5, 0, 5, 10),
            beamformers=(BeamformerKind.MRC_MRT, BeamformerKind.ZFR_ZFT),
            schemes=(
                {
                    "label": "epa/N64",
                    "mode": "direct",
                    "user_power_db": "sweep",
                    "relay_power_db": "sum-of-users",
                    "system": {"n_relay_antennas": 64},
                },
                {
                    "label": "epa/N128",
                    "mode": "direct",
                    "user_power_db": "sweep",
                    "relay_power_db": "sum-of-users",
                    "system": {"n_relay_antennas": 128},
                },
            ),
            estimators=("mc", "bound"),
            seed=20,
        )
    if name == "fig3":
        return ExperimentSpec(
            name="fig3",
            base_system={
                **base,
                "n_relay_antennas": 128,
                "training_symbols": "2K",
            },
            sweep_var="K",
            sweep_values=(2, 5, 10, 20),
            beamformers=(BeamformerKind.MRC_MRT, BeamformerKind.ZFR_ZFT),
            schemes=tuple(
                {"label": f"epa/snr{snr:+d}dB", "mode": "direct", "snr_db": snr}
                for snr in (-10, 0, 10)
            ),
            estimators=("mc", "bound"),
            seed=30,
        )
    if name == "fig4":
        return ExperimentSpec(
            name="fig4",
            base_system={**base, "n_relay_antennas": 64, "training_symbols": "2K"},
            sweep_var="K",
            sweep_values=(2, 4, 8, 16),
            beamformers=(BeamformerKind.MRC_MRT, BeamformerKind.ZFR_ZFT),
            schemes=(
                {
                    "label": "epa/N16K",
                    "mode": "direct",
                    "snr_db": 0,
                    "antenna_ratio": 16,
                },
                {
                    "label": "epa/N32K",
                    "mode": "direct",
                    "snr_db": 0,
                    "antenna_ratio": 32,
                },
            ),
            estimators=("mc", "bound"),
            seed=40,
        )
    if name == "fig5":
        schemes = []
        for n in (32, 64, 128):
            for mode in ("epa", "opa"):
                schemes.append(
                    {
                        "label": f"{mode}/N{n}",
                        "mode": mode,
                        "system": {"n_relay_antennas": n},
                        "budget": {
                            "total_db": 23,
                            "per_user_limit_db": 10,
                            "relay_limit_db": 23,
                        },
                    }
                )
        return ExperimentSpec(
            name="fig5",
            base_system={
                **base,
                "n_relay_antennas": 64,
                "large_scale": _large_scale_profile(),
            },
            sweep_var="p_P_db",
            sweep_values=(-10, -5, 0, 5, 10),
            beamformers=(BeamformerKind.MRC_MRT, BeamformerKind.ZFR_ZFT),
            schemes=tuple(schemes),
            estimators=("bound",),
            seed=50,
        )
    if name == "fig6":
        budget = {"total": 200.0, "fixed_relay": 100.0}
        return ExperimentSpec(
            name="fig6",
            base_system={
                **base,
                "n_relay_antennas": 128,
                "pilot_power_db": 20,
                "large_scale": _reciprocal_profile(10),
            },
            sweep_var="N",
            sweep_values=(64, 128, 256, 512),
            beamformers=(BeamformerKind.MRC_MRT, BeamformerKind.ZFR_ZFT),
            schemes=(
                {"label": "epa", "mode": "epa", "budget": dict(budget)},
                {"label": "opa", "mode": "opa", "budget": dict(budget)},
                {"label": "aopa", "mode": "aopa", "budget": dict(budget)},
            ),
            estimators=("bound",),
            seed=60,
        )
    if name == "smoke":
        # Tiny fixed-seed sweep exercised by the golden-file test.
        return ExperimentSpec(
            name="smoke",
            base_system={
                "n_pairs": 1,
                "n_relay_antennas": 12,
                "coherence_symbols": 40,
                "training_symbols": 2,
                "pilot_power_db": 10,
            },
            sweep_var="P_S_db",
            sweep_values=(0, 10),
            beamformers=(BeamformerKind.MRC_MRT, BeamformerKind.ZFR_ZFT),
            schemes=(
                {
                    "label": "epa",
                    "mode": "direct",
                    "user_power_db": "sweep",
                    "relay_power_db": "sum-of-users",
                },
            ),
            estimators=("mc", "bound"),
            trials=64,
            seed=7,
        )
    raise ExperimentError(
        f"unknown preset {name!r}; available: {', '.join(preset_names())}"
    )


def preset_names() -> tuple:
    return ("fig2", "fig3", "fig4", "fig5", "fig6", "smoke")
