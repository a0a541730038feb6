"""Power allocation: equal split, successive-GP optimization, and
closed-form large-array rules.

The optimizer maximizes the closed-form sum spectral efficiency bound over
user powers and (optionally) the relay power, under a total-power budget
and per-node caps.  The bound's SINR is a ratio of posynomials, so the
standard condensation trick applies: lower-bound each ``log2(1 + sinr_k)``
by a monomial that is tight at the current iterate, solve the resulting
geometric program inside a trust region, recenter, repeat.

Two cheap alternatives for very large arrays: an inverse-variance rule for
MRC/MRT (valid when every pair has the same large-scale product) and
water-filling for ZFR/ZFT.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beamforming import BeamformerKind
from .config import (
    ConfigError,
    PowerAllocation,
    PowerBudget,
    SystemConfig,
    validate_config,
)
from .gp import GpProblem, Monomial, Posynomial, constant, solve_gp, variable
from .rates import SinrCoefficients, bound_coefficients, sum_spectral_efficiency

__all__ = [
    "AllocationError",
    "OpaSettings",
    "OpaIteration",
    "OpaTrace",
    "epa",
    "opa",
    "aopa_mrc",
    "aopa_zf",
    "allocation_report",
]


class AllocationError(RuntimeError):
    """Power optimization failed or was asked outside its validity domain."""


def epa(n_pairs: int, budget: PowerBudget) -> PowerAllocation:
    """Equal power allocation: half the budget to the relay, rest split evenly.

    When the budget pins the relay power, the remainder is split instead.
    """
    relay = budget.fixed_relay if budget.fixed_relay is not None else budget.total / 2.0
    per_user = (budget.total - relay) / (2 * n_pairs)
    if per_user <= 0:
        raise AllocationError(
            f"budget {budget.total} with relay power {relay} leaves nothing "
            "for the users"
        )
    return PowerAllocation(
        user_powers=np.full(2 * n_pairs, per_user), relay_power=relay
    )


@dataclass(frozen=True)
class OpaSettings:
    """Knobs of the successive-GP optimizer.

    tolerance: stop when no SINR target moved by more than this relative
        amount between iterations.
    max_iterations: hard cap on condensation rounds.
    trust_ratio: each round keeps SINR targets within [prev/ratio, prev*ratio].
    initial_sinr: optional explicit starting targets; default is the bound
        SINR at equal power allocation.
    """

    tolerance: float = 0.01
    max_iterations: int = 10
    trust_ratio: float = 1.1
    initial_sinr: np.ndarray | None = None

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ConfigError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ConfigError(
                f"max_iterations must be >= 1, got {self.max_iterations}"
            )
        if self.trust_ratio <= 1.0:
            raise ConfigError(
                f"trust_ratio must exceed 1, got {self.trust_ratio}"
            )


@dataclass(frozen=True)
class OpaIteration:
    sinr_targets: np.ndarray
    user_powers: np.ndarray
    relay_power: float
    sum_se: float


@dataclass(frozen=True)
class OpaTrace:
    """Everything the optimizer did, one entry per accepted iteration."""

    iterations: list[OpaIteration] = field(default_factory=list)
    termination: str = ""
    converged: bool = False
    diagnostics: list[str] = field(default_factory=list)

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)


def _combined_power_matrix(coeffs: SinrCoefficients) -> np.ndarray:
    """Per-link coefficients of each user power in the SINR denominator.

    Folds the self-interference excess into the diagonal.  The combined
    diagonal is a variance and must be nonnegative; a materially negative
    entry means the coefficients are unusable as a GP and is reported
    rather than clipped away.
    """
    q = coeffs.interference.copy()
    diag = np.diagonal(q).copy() + coeffs.self_excess
    scale = float(np.abs(q).max()) or 1.0
    bad = np.nonzero(diag < -1e-9 * scale)[0]
    if bad.size:
        k = int(bad[0])
        raise AllocationError(
            "cannot form a geometric program: combined self-interference "
            f"power coefficient for link {k} is negative ({diag[k]:.3e})"
        )
    idx = np.arange(q.shape[0])
    q[idx, idx] = np.maximum(diag, 0.0)
    return q


def _denominator_posynomial(
    coeffs: SinrCoefficients,
    link: int,
    power_vars: list[Monomial],
    relay_var: Monomial | None,
    relay_power: float | None,
) -> Posynomial:
    q = _combined_power_matrix(coeffs)
    terms = []
    for i, pv in enumerate(power_vars):
        if q[link, i] > 0.0:
            terms.append(q[link, i] * pv)
    if coeffs.relay_noise[link] > 0.0:
        terms.append(constant(float(coeffs.relay_noise[link])))
    inv_relay = (
        relay_var**-1 if relay_var is not None else constant(1.0 / relay_power)
    )
    for i, pv in enumerate(power_vars):
        unp = coeffs.user_noise_power[i]
        if unp > 0.0:
            terms.append(unp * pv * inv_relay)
    if coeffs.user_noise_floor > 0.0:
        terms.append(coeffs.user_noise_floor * inv_relay)
    if not terms:
        raise AllocationError(
            f"SINR denominator for link {link} has no positive terms"
        )
    return Posynomial(terms)


def opa(
    cfg: SystemConfig,
    kind: BeamformerKind,
    budget: PowerBudget,
    settings: OpaSettings = OpaSettings(),
) -> tuple[PowerAllocation, OpaTrace]:
    """Optimize the sum-SE bound by successive geometric programming.

    Returns the best accepted allocation and a full trace.  The recorded
    sum-SE is nondecreasing across accepted iterations by construction: a
    round whose reoptimized powers lower the true bound (possible only
    through numerical slack, since each condensation is tight at its center)
    is rejected and recorded as a diagnostic instead.
    """
    validate_config(cfg)
    coeffs = bound_coefficients(cfg, kind)
    m = cfg.n_users
    fixed_relay = budget.fixed_relay
    if fixed_relay is not None and budget.relay_limit is not None:
        if fixed_relay > budget.relay_limit:
            raise AllocationError(
                f"fixed relay power {fixed_relay} exceeds the relay cap "
                f"{budget.relay_limit}"
            )

    start = epa(cfg.n_pairs, budget)
    if budget.per_user_limit is not None and np.any(
        start.user_powers > budget.per_user_limit
    ):
        # Equal split can overshoot a tight per-user cap; start inside it.
        start = PowerAllocation(
            user_powers=np.minimum(start.user_powers, budget.per_user_limit * 0.999),
            relay_power=start.relay_power,
        )
    targets = (
        np.asarray(settings.initial_sinr, dtype=float)
        if settings.initial_sinr is not None
        else coeffs.sinr(start.user_powers, start.relay_power)
    )
    if targets.shape != (m,) or np.any(targets <= 0):
        raise AllocationError("initial SINR targets must be positive, one per link")

    power_vars = [variable(f"p{i}") for i in range(m)]
    relay_var = None if fixed_relay is not None else variable("pr")

    prev_powers = start.user_powers
    prev_relay = fixed_relay if fixed_relay is not None else start.relay_power
    prev_se = sum_spectral_efficiency(
        cfg, np.log2(1.0 + coeffs.sinr(prev_powers, prev_relay))
    )
    trace_iters = [
        OpaIteration(
            sinr_targets=targets,
            user_powers=prev_powers,
            relay_power=prev_relay,
            sum_se=prev_se,
        )
    ]
    diagnostics: list[str] = []
    termination, converged = "iteration-limit", False

    for _ in range(settings.max_iterations):
        exps = targets / (1.0 + targets)
        # Monomial lower bound on prod (1+sinr): tight at the current targets.
        objective = Monomial(
            float(np.prod(targets**exps / (1.0 + targets))),
            {f"s{k}": -float(exps[k]) for k in range(m)},
        )

        constraints = []
        for k in range(m):
            den = _denominator_posynomial(
                coeffs, k, power_vars, relay_var, fixed_relay
            )
            gain = float(coeffs.pair_gain[k])
            constraints.append(
                den * (variable(f"s{k}") * power_vars[k ^ 1] ** -1 / gain)
            )
        user_budget = budget.total - (fixed_relay or 0.0)
        total = sum(power_vars[1:], Posynomial([power_vars[0]]))
        if relay_var is not None:
            total = total + relay_var
            constraints.append(total / budget.total)
        else:
            constraints.append(total / user_budget)
        if budget.per_user_limit is not None:
            constraints.extend(pv / budget.per_user_limit for pv in power_vars)
        if relay_var is not None and budget.relay_limit is not None:
            constraints.append(relay_var / budget.relay_limit)
        ratio = settings.trust_ratio
        for k in range(m):
            constraints.append(variable(f"s{k}") / (ratio * targets[k]))
            constraints.append(targets[k] / ratio * variable(f"s{k}") ** -1)

        problem = GpProblem(objective=objective, constraints=constraints)
        # Pull the warm start well inside every constraint: the previous
        # iterate sits on the budget boundary, and a log barrier started
        # from a hairline slack takes dozens of damped steps to move.
        warm_powers = prev_powers * (1.0 - 1e-3)
        warm = {f"p{i}": float(warm_powers[i]) for i in range(m)}
        if relay_var is not None:
            warm["pr"] = prev_relay * (1.0 - 1e-3)
        warm_sinr = coeffs.sinr(warm_powers, prev_relay if fixed_relay is None else fixed_relay)
        for k in range(m):
            # Strictly inside both the SINR constraint and the trust region;
            # clipping can only lower the value, so the SINR constraint at
            # the warm powers stays strictly satisfied.
            warm[f"s{k}"] = float(
                np.clip(
                    warm_sinr[k] * (1.0 - 1e-3),
                    targets[k] / ratio * (1.0 + 1e-4),
                    targets[k] * ratio * (1.0 - 1e-4),
                )
            )
        solution = solve_gp(problem, tol=1e-8, initial=warm)

        new_powers = np.array([solution.values[f"p{i}"] for i in range(m)])
        new_relay = fixed_relay if fixed_relay is not None else solution.values["pr"]
        new_targets = np.array([solution.values[f"s{k}"] for k in range(m)])
        new_se = sum_spectral_efficiency(
            cfg, np.log2(1.0 + coeffs.sinr(new_powers, new_relay))
        )

        if new_se < prev_se - 1e-9 * max(1.0, abs(prev_se)):
            diagnostics.append(
                f"iteration {len(trace_iters)}: objective fell from "
                f"{prev_se:.9g} to {new_se:.9g}; step rejected"
            )
            termination, converged = "monotone-guard", False
            break

        shift = float(np.max(np.abs(new_targets - targets) / new_targets))
        targets = new_targets
        prev_powers, prev_relay, prev_se = new_powers, new_relay, new_se
        trace_iters.append(
            OpaIteration(
                sinr_targets=new_targets,
                user_powers=new_powers,
                relay_power=new_relay,
                sum_se=new_se,
            )
        )
        if shift < settings.tolerance:
            termination, converged = "sinr-converged", True
            break

    best = PowerAllocation(user_powers=prev_powers, relay_power=prev_relay)
    trace = OpaTrace(
        iterations=trace_iters,
        termination=termination,
        converged=converged,
        diagnostics=diagnostics,
    )
    return best, trace


def aopa_mrc(cfg: SystemConfig, budget: PowerBudget) -> PowerAllocation:
    """Large-array MRC/MRT rule: power inversely proportional to fading.

    Exact maximizer of the limiting sum rate only when every pair has the
    same large-scale product; enforced here because the rule is meaningless
    otherwise.
    """
    validate_config(cfg)
    s = cfg.large_scale
    products = s.reshape(-1, 2).prod(axis=1)
    spread = float(products.max() - products.min())
    if spread > 1e-9 * float(products.max()):
        raise AllocationError(
            "inverse-fading allocation applies only under the fixed link "
            "condition (equal large-scale product in every pair); got "
            f"pair products spanning [{products.min():.6g}, {products.max():.6g}]"
        )
    relay = budget.fixed_relay if budget.fixed_relay is not None else budget.total / 2.0
    user_total = budget.total - relay
    if user_total <= 0:
        raise AllocationError("no user power left after the relay share")
    powers = user_total / (s * np.sum(1.0 / s))
    return PowerAllocation(user_powers=powers, relay_power=relay)


def aopa_zf(cfg: SystemConfig, budget: PowerBudget) -> PowerAllocation:
    """Large-array ZFR/ZFT rule: water-filling against per-user noise floors.

    Each user's effective noise floor is ``nv / ((N - 2K - 1) * s_i)``; the
    water level is chosen so the user powers exactly spend the non-relay
    budget.  Users whose floor reaches the water level (ties included) get
    zero power.
    """
    validate_config(cfg)  # guarantees N > 2K+3, so the floors below are finite
    n, k = cfg.n_relay_antennas, cfg.n_pairs
    relay = budget.fixed_relay if budget.fixed_relay is not None else budget.total / 2.0
    user_total = budget.total - relay
    if user_total <= 0:
        raise AllocationError("no user power left after the relay share")
    floors = cfg.noise_variance / ((n - 2 * k - 1) * cfg.large_scale)

    order = np.argsort(floors)
    active = len(order)
    # Shrink the candidate active set until the implied level clears floors.
    while active > 0:
        chosen = order[:active]
        level = (user_total + floors[chosen].sum()) / active
        if level > floors[chosen].max():
            break
        active -= 1
    if active == 0:
        raise AllocationError("water-filling found no user worth any power")
    powers = np.maximum(level - floors, 0.0)
    powers[order[active:]] = 0.0
    return PowerAllocation(user_powers=powers, relay_power=relay)


def allocation_report(
    scheme: str,
    allocation: PowerAllocation,
    sum_se: float,
    iterations: int = 0,
    converged: bool = True,
) -> dict:
    """JSON-ready summary of an allocation result."""
    return {
        "scheme": scheme,
        "powers": [float(p) for p in allocation.user_powers],
        "relay_power": float(allocation.relay_power),
        "sum_se": float(sum_se),
        "iterations": int(iterations),
        "converged": bool(converged),
    }
