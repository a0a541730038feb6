"""Relay processing matrices and their power normalization.

Both supported beamformers share one algebraic shape,

    F = alpha * conj(U) @ T @ U.conj().T

with T the pair-swap permutation and U either the channel estimate itself
(receive-combine / transmit-match) or its pseudo-inverse transpose
(zero-forcing).  Everything here works with the factored (U, T, alpha)
representation; the dense N x N matrix is materialized only on request and
only for moderate N, since rates and normalization never need it.

``alpha`` can be fixed per channel realization (instantaneous normalization,
used by Monte Carlo rate estimates) or once per scenario from closed-form
channel statistics (used by the analytic rate expressions).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import wishart
from .config import (
    PowerAllocation,
    SystemConfig,
    EstimationStats,
    estimation_stats,
    validate_config,
)

__all__ = [
    "BeamformingError",
    "BeamformerKind",
    "RelayBeamformer",
    "permutation_T",
    "build_unnormalized",
    "normalize_instantaneous",
    "alpha1_statistical",
    "alpha2_statistical",
]

# Above this antenna count the dense F would dominate memory for no benefit.
DENSE_MATRIX_LIMIT = 512

ZF_CONDITION_LIMIT = 1e12


class BeamformingError(RuntimeError):
    """Relay matrix construction failed (ill-conditioned estimate, bad size)."""


class BeamformerKind(enum.Enum):
    """The two relay processing schemes."""

    MRC_MRT = "mrc-mrt"
    ZFR_ZFT = "zfr-zft"

    @classmethod
    def parse(cls, label: str) -> "BeamformerKind":
        key = label.strip().lower().replace("_", "-").replace("/", "-")
        aliases = {
            "mrc": cls.MRC_MRT,
            "mrt": cls.MRC_MRT,
            "mrc-mrt": cls.MRC_MRT,
            "zf": cls.ZFR_ZFT,
            "zfr": cls.ZFR_ZFT,
            "zft": cls.ZFR_ZFT,
            "zfr-zft": cls.ZFR_ZFT,
        }
        try:
            return aliases[key]
        except KeyError:
            raise BeamformingError(
                f"unknown beamformer {label!r}; choose mrc-mrt or zfr-zft"
            ) from None


def permutation_T(n_pairs: int) -> np.ndarray:
    """Block-diagonal pair-swap permutation, K copies of [[0,1],[1,0]].

    Symmetric and involutory; maps user i's unit vector to its partner's.
    """
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    t = np.zeros((2 * n_pairs, 2 * n_pairs))
    idx = np.arange(2 * n_pairs)
    t[idx, idx ^ 1] = 1.0
    return t


def _swap_pairs(values: np.ndarray) -> np.ndarray:
    """Reorder the last axis so each entry moves to its partner's slot."""
    return np.asarray(values)[..., np.arange(values.shape[-1]) ^ 1]


def _swap_rows(mat: np.ndarray) -> np.ndarray:
    """T @ mat for the pair-swap permutation T: rows exchanged pairwise."""
    return mat[np.arange(mat.shape[0]) ^ 1]


@dataclass(frozen=True)
class RelayBeamformer:
    """Relay matrix in factored form ``alpha * conj(basis) @ T @ basis^H``.

    basis: N x 2K factor U (the estimate for MRC/MRT, its pseudo-inverse
        transpose for ZFR/ZFT).
    normalization: the scalar alpha applied to the unnormalized matrix.
    gram_condition: condition number of the estimated Gram matrix, reported
        for diagnostics (meaningful mainly for zero-forcing).
    """

    kind: BeamformerKind
    basis: np.ndarray
    normalization: float = 1.0
    gram_condition: float = float("nan")

    @property
    def n_relay_antennas(self) -> int:
        return self.basis.shape[0]

    @property
    def n_users(self) -> int:
        return self.basis.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        """Dense N x N relay matrix.  Refuses to materialize for huge arrays."""
        n = self.n_relay_antennas
        if n > DENSE_MATRIX_LIMIT:
            raise BeamformingError(
                f"dense relay matrix disabled for N={n} > {DENSE_MATRIX_LIMIT}; "
                "use apply()/bilinear(), which work on the factored form"
            )
        u = self.basis
        t = permutation_T(self.n_users // 2)
        return self.normalization * np.conj(u @ t @ u.T)

    def apply(self, signal: np.ndarray) -> np.ndarray:
        """F @ signal without forming F; signal shape (N,) or (N, m)."""
        u = self.basis
        inner = u.conj().T @ np.atleast_2d(signal.T).T
        out = self.normalization * np.conj(u) @ _swap_rows(inner)
        return out[:, 0] if signal.ndim == 1 else out

    def bilinear(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        """``left.T @ F @ right`` for N-row blocks of column vectors.

        This is the end-to-end effective channel when ``left`` and ``right``
        are true channel columns.
        """
        lu = left.T @ np.conj(self.basis)
        ur = self.basis.conj().T @ right
        return self.normalization * lu @ _swap_rows(ur)

    def scaled(self, factor: float) -> "RelayBeamformer":
        return RelayBeamformer(
            kind=self.kind,
            basis=self.basis,
            normalization=self.normalization * factor,
            gram_condition=self.gram_condition,
        )


def build_unnormalized(kind: BeamformerKind, estimate: np.ndarray) -> RelayBeamformer:
    """Relay matrix for a channel estimate, with normalization fixed to 1.

    MRC/MRT uses the estimate itself as the factor.  Zero-forcing needs
    ``Gbar = Gh @ (Gh^H Gh)^{-1}``, computed through a QR factorization
    (``Gbar = Q @ R^{-H}``) rather than an explicit Gram inverse; the Gram
    condition number is ``cond(R)^2`` and construction is refused when it
    exceeds ``ZF_CONDITION_LIMIT``.
    """
    gh = np.asarray(estimate)
    if gh.ndim != 2 or gh.shape[1] % 2:
        raise BeamformingError(
            f"estimate must be N x 2K, got shape {gh.shape}"
        )
    if kind is BeamformerKind.MRC_MRT:
        return RelayBeamformer(kind=kind, basis=gh)
    q, r = np.linalg.qr(gh)
    cond = float(np.linalg.cond(r)) ** 2
    if not np.isfinite(cond) or cond > ZF_CONDITION_LIMIT:
        raise BeamformingError(
            "zero-forcing requires an invertible estimated Gram matrix: "
            f"condition number {cond:.3e} exceeds {ZF_CONDITION_LIMIT:.0e}"
        )
    # Gbar^H = R^{-1} Q^H, so one small triangular-system solve suffices.
    gbar = np.linalg.solve(r, q.conj().T).conj().T
    return RelayBeamformer(kind=kind, basis=gbar, gram_condition=cond)


def normalize_instantaneous(
    unnormalized: RelayBeamformer,
    true_channel: np.ndarray,
    allocation: PowerAllocation,
    noise_variance: float,
    method: str = "average",
    rng: np.random.Generator | None = None,
) -> RelayBeamformer:
    """Scale a relay matrix so its transmit power meets the relay budget.

    ``method="average"`` (the default) uses the transmit power averaged over
    payload symbols and relay noise, conditioned on the channel realization:

        alpha^2 = P_R / Tr{F0 (G P G^H + nv I) F0^H}

    evaluated in the factored form, so no N x N product is ever built.
    ``method="sample-path"`` instead normalizes against one realized receive
    vector (requires ``rng``); it fluctuates around the average form and
    exists for sensitivity studies.
    """
    if unnormalized.normalization != 1.0:
        raise BeamformingError("normalize_instantaneous expects an unnormalized matrix")
    u = unnormalized.basis
    g = np.asarray(true_channel)
    p = np.asarray(allocation.user_powers, dtype=float)
    if method == "average":
        c = u.conj().T @ u
        ug = u.conj().T @ g
        m = (ug * p[None, :]) @ ug.conj().T + noise_variance * c
        # Tr{F0 A F0^H} = Tr{(T M)(T conj(C))} with M = U^H A U, C = U^H U.
        denom = float(np.real(np.sum(_swap_rows(m) * _swap_rows(np.conj(c)).T)))
    elif method == "sample-path":
        if rng is None:
            raise BeamformingError("sample-path normalization needs an rng")
        n_ant = g.shape[0]
        x = np.sqrt(p / 2.0) * (rng.standard_normal(len(p)) + 1j * rng.standard_normal(len(p)))
        noise = np.sqrt(noise_variance / 2.0) * (
            rng.standard_normal(n_ant) + 1j * rng.standard_normal(n_ant)
        )
        received = g @ x + noise
        v = _swap_pairs(u.conj().T @ received)
        # ||conj(U) v||^2 = v^H conj(U^H U) v
        denom = float(np.real(v.conj() @ np.conj(u.conj().T @ u) @ v))
    else:
        raise BeamformingError(f"unknown normalization method {method!r}")
    if denom <= 0.0:
        raise BeamformingError(
            "relay transmit power is zero for this realization "
            "(all user powers and the noise variance vanish); cannot normalize"
        )
    alpha = float(np.sqrt(allocation.relay_power / denom))
    return unnormalized.scaled(alpha)


def _pair_products(values: np.ndarray) -> np.ndarray:
    """Per-pair products v_{2l} * v_{2l+1} of a length-2K vector."""
    v = np.asarray(values, dtype=float).reshape(-1, 2)
    return v[:, 0] * v[:, 1]


def alpha1_statistical(
    cfg: SystemConfig,
    stats: EstimationStats | None = None,
    allocation: PowerAllocation | None = None,
    *,
    relay_power: float | None = None,
    user_powers: np.ndarray | None = None,
) -> float:
    """Closed-form MRC/MRT normalization from channel statistics.

    The expected relay transmit power of the unnormalized matrix is

        N(N+1) * [ 2(psi_tot + nv) * prod_tot + (N+1) * sum_l wp_l * prod_l ]

    with ``prod_l`` the per-pair product of estimate variances, ``prod_tot``
    their sum, ``psi_tot`` the total received signal power ``sum_i p_i s_i``
    and ``wp_l`` the estimate-weighted pair power ``p_{2l} se_{2l} +
    p_{2l+1} se_{2l+1}``.  alpha1 is ``sqrt(P_R / that)``.
    """
    validate_config(cfg)
    if stats is None:
        stats = estimation_stats(cfg)
    p, pr = _powers_from(allocation, user_powers, relay_power, cfg.n_users)
    n = cfg.n_relay_antennas
    se = stats.est_variance
    prod = _pair_products(se)
    prod_tot = prod.sum()
    psi_tot = float(p @ cfg.large_scale)
    weighted_pair = (p * se).reshape(-1, 2).sum(axis=1)
    denom = n * (n + 1) * (
        2.0 * (psi_tot + cfg.noise_variance) * prod_tot
        + (n + 1) * float(weighted_pair @ prod)
    )
    return float(np.sqrt(pr / denom))


def alpha2_statistical(
    cfg: SystemConfig,
    stats: EstimationStats | None = None,
    allocation: PowerAllocation | None = None,
    *,
    relay_power: float | None = None,
    user_powers: np.ndarray | None = None,
) -> float:
    """Closed-form ZFR/ZFT normalization from channel statistics.

    The expected relay transmit power of the unnormalized matrix is

        sum_i p_i E[Omega_{i'i'}] + E[Tr{T Omega T Omega*}] *
            (sum_j p_j ee_j + nv)

    with Omega the inverse estimated Gram matrix and ``ee`` the estimation
    error variances; both moments come from :mod:`twrelay.wishart`, the same
    helpers the analytic rate expressions use.  Requires N > 2K + 3 for the
    second moment to exist.
    """
    validate_config(cfg)
    if stats is None:
        stats = estimation_stats(cfg)
    p, pr = _powers_from(allocation, user_powers, relay_power, cfg.n_users)
    n, k = cfg.n_relay_antennas, cfg.n_pairs
    omega_diag = wishart.mean_diag(n, k, stats.est_variance)
    eta = wishart.mean_trace_permuted_square(n, k, stats.est_variance)
    denom = float(p @ _swap_pairs(omega_diag)) + eta * (
        float(p @ stats.err_variance) + cfg.noise_variance
    )
    return float(np.sqrt(pr / denom))


def _powers_from(allocation, user_powers, relay_power, n_users):
    if allocation is not None:
        if user_powers is not None or relay_power is not None:
            raise ValueError("give either an allocation or explicit powers, not both")
        return np.asarray(allocation.user_powers, dtype=float), allocation.relay_power
    if relay_power is None:
        raise ValueError("relay power is required")
    if user_powers is None:
        p = np.zeros(n_users)
    else:
        p = np.asarray(user_powers, dtype=float)
        if p.shape != (n_users,):
            raise ValueError(f"user_powers must have length {n_users}, got {p.shape}")
    if np.any(p < 0) or relay_power <= 0:
        raise ValueError("powers must be nonnegative and relay power positive")
    return p, float(relay_power)
