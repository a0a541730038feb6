"""Scenario configuration and the deterministic statistics derived from it.

Everything downstream (channel draws, beamformers, rate formulas, power
allocation) reads the scenario from one immutable :class:`SystemConfig`.
All powers and variances are linear quantities; decibel conversion is the
command-line layer's job and never happens inside the numerical core.

Users come in pairs. User ``2l`` and user ``2l+1`` (zero-based) exchange
data through the relay, so the partner of an even index is the next odd
index and vice versa.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "ConfigError",
    "SystemConfig",
    "EstimationStats",
    "PowerAllocation",
    "PowerBudget",
    "partner_index",
    "validate_config",
    "estimation_stats",
    "spectral_efficiency_prefactor",
    "db_to_linear",
    "linear_to_db",
    "system_config_from_dict",
    "budget_from_dict",
]


class ConfigError(ValueError):
    """A scenario parameter violates one of the model's preconditions."""


def db_to_linear(value_db):
    """Convert decibels to a linear power ratio."""
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def linear_to_db(value):
    """Convert a linear power ratio to decibels."""
    return 10.0 * np.log10(np.asarray(value, dtype=float))


def partner_index(index):
    """Return the pair partner of a zero-based user index.

    Works elementwise on integer arrays. ``partner_index(partner_index(i))``
    is ``i`` for every index, and no index is its own partner.
    """
    return np.bitwise_xor(index, 1) if isinstance(index, np.ndarray) else index ^ 1


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SystemConfig:
    """Static description of one relaying scenario.

    n_relay_antennas: number of antennas at the relay.
    n_pairs: number of user pairs (so there are ``2 * n_pairs`` users).
    coherence_symbols: symbols per coherence interval.
    training_symbols: symbols spent on pilots each interval.
    noise_variance: additive-noise variance at relay and users (linear).
    pilot_power: training transmit power (linear).
    large_scale: per-user slow-fading variances, length ``2 * n_pairs``.
    """

    n_relay_antennas: int
    n_pairs: int
    coherence_symbols: int
    training_symbols: int
    noise_variance: float = 1.0
    pilot_power: float = 1.0
    large_scale: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.large_scale is None:
            profile = np.ones(2 * self.n_pairs)
        else:
            profile = np.atleast_1d(np.asarray(self.large_scale, dtype=float))
        object.__setattr__(self, "large_scale", _as_readonly(profile))

    @property
    def n_users(self) -> int:
        return 2 * self.n_pairs

    def with_updates(self, **changes) -> "SystemConfig":
        """Return a copy with the given fields replaced."""
        fields = {
            "n_relay_antennas": self.n_relay_antennas,
            "n_pairs": self.n_pairs,
            "coherence_symbols": self.coherence_symbols,
            "training_symbols": self.training_symbols,
            "noise_variance": self.noise_variance,
            "pilot_power": self.pilot_power,
            "large_scale": self.large_scale,
        }
        fields.update(changes)
        return SystemConfig(**fields)


def validate_config(cfg: SystemConfig) -> SystemConfig:
    """Check every scenario invariant, returning ``cfg`` unchanged on success.

    Raises :class:`ConfigError` naming the first violated constraint.
    """
    n, k = cfg.n_relay_antennas, cfg.n_pairs
    t, tau = cfg.coherence_symbols, cfg.training_symbols
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise ConfigError(f"n_relay_antennas must be a positive integer, got {n!r}")
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise ConfigError(f"n_pairs must be a positive integer, got {k!r}")
    if tau < 2 * k:
        raise ConfigError(
            f"τ < 2K: training length {tau} cannot carry {2 * k} orthogonal pilots"
        )
    if t <= tau + 2:
        raise ConfigError(
            f"T ≤ τ+2: coherence interval {t} leaves no payload after "
            f"{tau} training and 2 overhead symbols"
        )
    if n <= 2 * k + 3:
        raise ConfigError(
            f"N ≤ 2K+3: {n} relay antennas cannot support {k} pairs "
            "(second moments of the inverse Gram matrix do not exist)"
        )
    if cfg.large_scale.shape != (2 * k,):
        raise ConfigError(
            f"large_scale must have length 2K={2 * k}, got shape {cfg.large_scale.shape}"
        )
    if np.any(cfg.large_scale <= 0):
        bad = int(np.argmin(cfg.large_scale))
        raise ConfigError(f"large_scale[{bad}] = {cfg.large_scale[bad]} is not positive")
    if cfg.noise_variance <= 0:
        raise ConfigError(f"noise_variance must be positive, got {cfg.noise_variance}")
    if cfg.pilot_power <= 0:
        raise ConfigError(f"pilot_power must be positive, got {cfg.pilot_power}")
    return cfg


@dataclass(frozen=True)
class EstimationStats:
    """Second-order statistics of the trained channel estimate.

    ``est_variance[i]`` is the per-element variance of user ``i``'s estimated
    channel column and ``err_variance[i]`` the variance of the estimation
    error, stored as the exact floating-point complement of the estimate
    variance so the split loses nothing to rounding.
    """

    est_variance: np.ndarray
    err_variance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "est_variance", _as_readonly(self.est_variance))
        object.__setattr__(self, "err_variance", _as_readonly(self.err_variance))


def estimation_stats(cfg: SystemConfig) -> EstimationStats:
    """Variances of the linear-MMSE channel estimate implied by the training.

    With training energy ``tau * pilot_power`` the estimate of a channel
    element with variance ``s`` has variance ``tau*pP*s^2 / (tau*pP*s + nv)``;
    the error variance is the remainder ``s - est``, computed exactly as that
    difference so the decomposition identity holds to machine precision.
    """
    validate_config(cfg)
    energy = cfg.training_symbols * cfg.pilot_power
    s = cfg.large_scale
    est = energy * s**2 / (energy * s + cfg.noise_variance)
    return EstimationStats(est_variance=est, err_variance=s - est)


def spectral_efficiency_prefactor(cfg: SystemConfig) -> float:
    """Fraction of the coherence interval left for payload symbols.

    Training costs ``training_symbols`` and feeding back the effective-channel
    and cancellation coefficients costs 2 more, so the factor is
    ``(T - tau - 2) / T``.
    """
    validate_config(cfg)
    t, tau = cfg.coherence_symbols, cfg.training_symbols
    return (t - tau - 2) / t


@dataclass(frozen=True)
class PowerBudget:
    """Constraint set for power allocation.

    total: cap on the sum of all user powers plus the relay power.
    per_user_limit: optional per-user peak power.
    relay_limit: optional relay peak power.
    fixed_relay: when set, the relay power is pinned to this value and only
        user powers are optimized.
    """

    total: float
    per_user_limit: float | None = None
    relay_limit: float | None = None
    fixed_relay: float | None = None

    def __post_init__(self):
        if self.total <= 0:
            raise ConfigError(f"total power budget must be positive, got {self.total}")
        for name in ("per_user_limit", "relay_limit", "fixed_relay"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive when given, got {v}")
        if self.fixed_relay is not None and self.fixed_relay >= self.total:
            raise ConfigError(
                f"fixed_relay = {self.fixed_relay} leaves no user power within "
                f"total = {self.total}"
            )


@dataclass(frozen=True)
class PowerAllocation:
    """Linear transmit powers: one per user plus the relay's."""

    user_powers: np.ndarray
    relay_power: float

    def __post_init__(self):
        object.__setattr__(self, "user_powers", _as_readonly(self.user_powers))
        if np.any(self.user_powers < 0):
            bad = int(np.argmin(self.user_powers))
            raise ConfigError(
                f"user_powers[{bad}] = {self.user_powers[bad]} is negative"
            )
        if self.relay_power <= 0:
            raise ConfigError(f"relay_power must be positive, got {self.relay_power}")

    @property
    def total_transmit(self) -> float:
        return float(self.user_powers.sum() + self.relay_power)

    def check_budget(self, budget: PowerBudget, rtol: float = 1e-9) -> None:
        """Raise :class:`ConfigError` if this allocation violates ``budget``."""
        slack = 1.0 + rtol
        if self.total_transmit > budget.total * slack:
            raise ConfigError(
                f"total transmit power {self.total_transmit:.6g} exceeds "
                f"budget {budget.total:.6g}"
            )
        if budget.per_user_limit is not None and np.any(
            self.user_powers > budget.per_user_limit * slack
        ):
            bad = int(np.argmax(self.user_powers))
            raise ConfigError(
                f"user_powers[{bad}] = {self.user_powers[bad]:.6g} exceeds "
                f"per-user limit {budget.per_user_limit:.6g}"
            )
        if budget.relay_limit is not None and self.relay_power > budget.relay_limit * slack:
            raise ConfigError(
                f"relay_power {self.relay_power:.6g} exceeds relay limit "
                f"{budget.relay_limit:.6g}"
            )


Number = Union[int, float]


def _linear_entry(section: dict, key: str, default: Number | None = None):
    """Fetch ``key`` from a config section, accepting a ``<key>_db`` variant."""
    has_lin, has_db = key in section, f"{key}_db" in section
    if has_lin and has_db:
        raise ConfigError(f"give either {key} or {key}_db, not both")
    if has_lin:
        return float(section[key])
    if has_db:
        return float(db_to_linear(section[f"{key}_db"]))
    return default


def system_config_from_dict(data: dict) -> SystemConfig:
    """Build a validated :class:`SystemConfig` from a parsed config mapping.

    Power-like keys accept a ``_db`` suffix as an alternative spelling, e.g.
    ``pilot_power_db: 10`` instead of ``pilot_power: 10.0``.
    """
    if not isinstance(data, dict):
        raise ConfigError(f"system section must be a mapping, got {type(data).__name__}")
    known = {
        "n_relay_antennas",
        "n_pairs",
        "coherence_symbols",
        "training_symbols",
        "noise_variance",
        "noise_variance_db",
        "pilot_power",
        "pilot_power_db",
        "large_scale",
    }
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown system keys: {sorted(unknown)}")
    try:
        cfg = SystemConfig(
            n_relay_antennas=int(data["n_relay_antennas"]),
            n_pairs=int(data["n_pairs"]),
            coherence_symbols=int(data["coherence_symbols"]),
            training_symbols=int(data["training_symbols"]),
            noise_variance=_linear_entry(data, "noise_variance", 1.0),
            pilot_power=_linear_entry(data, "pilot_power", 1.0),
            large_scale=data.get("large_scale"),
        )
    except KeyError as missing:
        raise ConfigError(f"system section is missing {missing.args[0]!r}") from None
    return validate_config(cfg)


def budget_from_dict(data: dict) -> PowerBudget:
    """Build a :class:`PowerBudget` from a parsed config mapping."""
    if not isinstance(data, dict):
        raise ConfigError(f"budget section must be a mapping, got {type(data).__name__}")
    known = {
        "total", "total_db",
        "per_user_limit", "per_user_limit_db",
        "relay_limit", "relay_limit_db",
        "fixed_relay", "fixed_relay_db",
    }
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown budget keys: {sorted(unknown)}")
    total = _linear_entry(data, "total")
    if total is None:
        raise ConfigError("budget section needs total or total_db")
    return PowerBudget(
        total=total,
        per_user_limit=_linear_entry(data, "per_user_limit"),
        relay_limit=_linear_entry(data, "relay_limit"),
        fixed_relay=_linear_entry(data, "fixed_relay"),
    )
