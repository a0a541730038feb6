"""Achievable rates: exact Monte Carlo, closed-form lower bounds, and limits.

Link convention: user ``r`` receives the symbol sent by its pair partner
``t = r ^ 1``.  After self-interference cancellation the end-to-end SINR of
link ``r`` decomposes into

    desired / (residual self-interference + inter-pair interference
               + amplified relay noise + receiver noise)

and the per-link rate is ``log2(1 + SINR)``, counted per payload symbol.
Multiplying the sum rate by the training/feedback prefactor of
:func:`~twrelay.config.spectral_efficiency_prefactor` gives the sum spectral
efficiency per coherence symbol.

Three evaluation routes:

* :func:`monte_carlo_rate` draws channels, builds the relay matrix per
  realization, and averages exact instantaneous rates.
* :func:`bound_rates` evaluates the closed-form lower bound that treats the
  mean effective gain as the decodable signal and every fluctuation as
  Gaussian noise.  Its SINR is a ratio of linear functions of the transmit
  powers, captured by :class:`SinrCoefficients` (also the input to the
  power optimizer).
* :func:`asymptotic_rate` evaluates the limit rates under power scaling
  proportional to 1/N (or the pilot-decay variant).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import wishart
from .beamforming import (
    BeamformerKind,
    RelayBeamformer,
    alpha1_statistical,
    alpha2_statistical,
)
from .channel import ChannelSample, draw_channel_sample_direct
from .config import (
    PowerAllocation,
    SystemConfig,
    EstimationStats,
    estimation_stats,
    spectral_efficiency_prefactor,
    validate_config,
)

__all__ = [
    "RateError",
    "SinrTerms",
    "SinrCoefficients",
    "RateReport",
    "instantaneous_sinr",
    "monte_carlo_rate",
    "mrc_coefficients",
    "zf_coefficients",
    "bound_coefficients",
    "bound_rates",
    "scsi_rate_mrc",
    "scsi_rate_zf",
    "asymptotic_rate",
    "sum_spectral_efficiency",
]


class RateError(RuntimeError):
    """A rate computation was asked for outside its domain of validity."""


@dataclass(frozen=True)
class SinrTerms:
    """Power of each SINR contribution for one link (linear units)."""

    desired: float
    residual_self_interference: float
    inter_pair: float
    relay_noise: float
    user_noise: float

    @property
    def sinr(self) -> float:
        return self.desired / (
            self.residual_self_interference
            + self.inter_pair
            + self.relay_noise
            + self.user_noise
        )

    @property
    def rate(self) -> float:
        """Link rate in bits per payload symbol."""
        return float(np.log2(1.0 + self.sinr))


@dataclass(frozen=True)
class RateReport:
    """Monte Carlo (or bound) rates for every link plus the aggregate.

    per_link_rate is in bits per payload symbol, before the coherence
    prefactor; sum_spectral_efficiency includes it.  Standard errors are in
    the same units as the quantity they accompany; the bound route reports
    zeros there.
    """

    kind: BeamformerKind
    per_link_rate: np.ndarray
    per_link_stderr: np.ndarray
    sum_spectral_efficiency: float
    sum_stderr: float
    n_trials: int
    prefactor: float


def _partner(values: np.ndarray) -> np.ndarray:
    return np.asarray(values)[..., np.arange(np.asarray(values).shape[-1]) ^ 1]


def sum_spectral_efficiency(cfg: SystemConfig, per_link_rates: np.ndarray) -> float:
    """Sum rate scaled by the fraction of symbols carrying payload."""
    rates = np.asarray(per_link_rates, dtype=float)
    if rates.shape != (cfg.n_users,):
        raise RateError(
            f"expected one rate per user ({cfg.n_users}), got shape {rates.shape}"
        )
    return spectral_efficiency_prefactor(cfg) * float(rates.sum())


# --------------------------------------------------------------------------
# Exact per-realization SINR


def instantaneous_sinr(
    sample: ChannelSample,
    beamformer: RelayBeamformer,
    allocation: PowerAllocation,
    noise_variance: float,
    link: int,
) -> SinrTerms:
    """Exact SINR of one link for a given channel realization.

    ``beamformer`` must already be normalized.  Self-interference is
    cancelled using the relay's estimate-based feedback, so the residual is
    the mismatch between the true and estimated loopback gains; for
    zero-forcing that feedback is identically zero and no cancellation is
    applied.
    """
    g = sample.true_channel
    n_users = g.shape[1]
    if not 0 <= link < n_users:
        raise RateError(f"link {link} out of range for {n_users} users")
    p = allocation.user_powers
    t = link ^ 1

    gains = beamformer.bilinear(g, g)  # (i, j): g_i^T F g_j
    loopback = gains[link, link]
    if beamformer.kind is BeamformerKind.MRC_MRT:
        est = sample.estimate
        loopback = loopback - beamformer.bilinear(
            est[:, link : link + 1], est[:, link : link + 1]
        )[0, 0]

    # ||g_link^T F||^2 via the factored form: the row is alpha a^T T U^H
    # with a = U^H g_link, so its norm is a quadratic form in U^H U.
    u = beamformer.basis
    a = u.conj().T @ g[:, link]
    b = a[np.arange(n_users) ^ 1]
    relay_noise_gain = float(
        np.real(b @ (u.conj().T @ u) @ np.conj(b))
    ) * beamformer.normalization**2

    inter = 0.0
    for i in range(n_users):
        if i in (link, t):
            continue
        inter += p[i] * float(np.abs(gains[link, i]) ** 2)
    return SinrTerms(
        desired=float(p[t] * np.abs(gains[link, t]) ** 2),
        residual_self_interference=float(p[link] * np.abs(loopback) ** 2),
        inter_pair=inter,
        relay_noise=noise_variance * relay_noise_gain,
        user_noise=float(noise_variance),
    )


# --------------------------------------------------------------------------
# Monte Carlo over channel realizations

# Draws processed per batch are capped so the three N x 2K complex matrices
# stay within a modest memory envelope at large N.
_CHUNK_BUDGET = 4_000_000


def _chunk_size(n: int, m: int) -> int:
    return int(np.clip(_CHUNK_BUDGET // (n * m), 16, 512))


def monte_carlo_rate(
    cfg: SystemConfig,
    kind: BeamformerKind,
    allocation: PowerAllocation,
    n_trials: int = 10_000,
    seed=None,
    alpha_mode: str = "per-realization",
) -> RateReport:
    """Estimate ergodic per-link rates by averaging over channel draws.

    Each draw builds the relay matrix from that draw's channel estimate,
    normalizes it (per realization by default, or with the closed-form
    statistical alpha when ``alpha_mode="statistical"``), and evaluates the
    exact link SINRs.  Everything runs on 2K x 2K Gram-domain matrices, so
    cost grows only linearly in N.

    Reproducible: a given (cfg, allocation, n_trials, seed) always yields
    bit-identical results.
    """
    validate_config(cfg)
    if n_trials < 1:
        raise RateError(f"n_trials must be >= 1, got {n_trials}")
    if alpha_mode not in ("per-realization", "statistical"):
        raise RateError(f"unknown alpha_mode {alpha_mode!r}")
    p = np.asarray(allocation.user_powers, dtype=float)
    if p.shape != (cfg.n_users,):
        raise RateError(
            f"allocation has {p.shape} user powers, config needs {cfg.n_users}"
        )
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    fixed_alpha_sq = None
    if alpha_mode == "statistical":
        stat_alpha = (
            alpha1_statistical(cfg, allocation=allocation)
            if kind is BeamformerKind.MRC_MRT
            else alpha2_statistical(cfg, allocation=allocation)
        )
        fixed_alpha_sq = stat_alpha**2

    n, m = cfg.n_relay_antennas, cfg.n_users
    chunk = _chunk_size(n, m)
    swap = np.arange(m) ^ 1
    nv = cfg.noise_variance
    pr = allocation.relay_power

    rate_sum = np.zeros(m)
    rate_sq_sum = np.zeros(m)
    trial_sums = np.empty(n_trials)
    done = 0
    while done < n_trials:
        b = min(chunk, n_trials - done)
        sample = draw_channel_sample_direct(cfg, rng, n_draws=b)
        g, gh = sample.true_channel, sample.estimate

        if kind is BeamformerKind.ZFR_ZFT:
            gram = gh.conj().transpose(0, 2, 1) @ gh
            c = np.linalg.inv(gram)
            u = gh @ c
        else:
            u = gh
            c = gh.conj().transpose(0, 2, 1) @ gh

        a = g.transpose(0, 2, 1) @ np.conj(u)  # a[b, r, j] = g_r^T conj(u_j)
        bm = u.conj().transpose(0, 2, 1) @ g
        v = bm[:, swap, :]
        w = a @ v  # effective gains g_r^T F0 g_i

        if kind is BeamformerKind.MRC_MRT:
            fed = np.diagonal(np.conj(c) @ c[:, swap, :], axis1=1, axis2=2)
        else:
            fed = 0.0
        loopback = np.diagonal(w, axis1=1, axis2=2) - fed

        at = a[:, :, swap]
        ac = at @ c
        relay_noise_gain = np.sum(ac * np.conj(at), axis=2).real

        if fixed_alpha_sq is None:
            cv = np.conj(c) @ v
            col_gain = np.sum(np.conj(v) * cv, axis=1).real
            mt = c[:, swap, :]
            fro = np.einsum("bij,bji->b", mt, mt.conj()).real
            alpha_sq = pr / (col_gain @ p + nv * fro)
        else:
            alpha_sq = np.full(b, fixed_alpha_sq)

        pw = np.abs(w) ** 2 * p[None, None, :]
        idx = np.arange(m)
        inter = pw.sum(axis=2) - pw[:, idx, idx] - pw[:, idx, idx ^ 1]
        desired = pw[:, idx, idx ^ 1]
        self_res = np.abs(loopback) ** 2 * p[None, :]
        denom = alpha_sq[:, None] * (inter + self_res + nv * relay_noise_gain) + nv
        sinr = alpha_sq[:, None] * desired / denom
        rates = np.log2(1.0 + sinr)

        rate_sum += rates.sum(axis=0)
        rate_sq_sum += (rates**2).sum(axis=0)
        trial_sums[done : done + b] = rates.sum(axis=1)
        done += b

    per_link = rate_sum / n_trials
    var = np.maximum(rate_sq_sum / n_trials - per_link**2, 0.0)
    per_link_se = np.sqrt(var / n_trials)
    pref = spectral_efficiency_prefactor(cfg)
    sum_se = pref * float(per_link.sum())
    sum_stderr = pref * float(trial_sums.std(ddof=1) / np.sqrt(n_trials)) if n_trials > 1 else 0.0
    return RateReport(
        kind=kind,
        per_link_rate=per_link,
        per_link_stderr=per_link_se,
        sum_spectral_efficiency=sum_se,
        sum_stderr=sum_stderr,
        n_trials=n_trials,
        prefactor=pref,
    )


# --------------------------------------------------------------------------
# Closed-form lower bound


@dataclass(frozen=True)
class SinrCoefficients:
    """Power-dependence of the closed-form SINR lower bound.

    For receiver ``r`` with transmitter ``t = r ^ 1``:

        sinr[r] = pair_gain[r] * p[t] /
                  ( interference[r] @ p + self_excess[r] * p[r]
                    + relay_noise[r]
                    + (user_noise_power @ p + user_noise_floor) / relay_power )

    All entries are nonnegative, which is what makes the denominator a
    posynomial in (p, relay_power) and the power-allocation problem a
    geometric program.  ``moment_scale`` recovers raw effective-channel
    moments from these normalized entries: the gain mean is
    ``sqrt(moment_scale * pair_gain[r])``, its variance is
    ``moment_scale * interference[r, t]``, and so on.  The moment oracle
    leans on that correspondence instead of re-deriving any formula.
    """

    kind: BeamformerKind
    pair_gain: np.ndarray
    interference: np.ndarray
    self_excess: np.ndarray
    user_noise_power: np.ndarray
    relay_noise: np.ndarray
    user_noise_floor: float
    moment_scale: float

    @property
    def n_users(self) -> int:
        return len(self.pair_gain)

    def sinr(self, user_powers: np.ndarray, relay_power: float) -> np.ndarray:
        p = np.asarray(user_powers, dtype=float)
        num = self.pair_gain * _partner(p)
        den = self.denominator(p, relay_power)
        bad = np.nonzero(den <= 0.0)[0]
        if bad.size:
            raise RateError(
                f"bound SINR denominator is not positive for link {bad[0]}"
            )
        return num / den

    def denominator(self, user_powers: np.ndarray, relay_power: float) -> np.ndarray:
        p = np.asarray(user_powers, dtype=float)
        return (
            self.interference @ p
            + self.self_excess * p
            + self.relay_noise
            + (self.user_noise_power @ p + self.user_noise_floor) / relay_power
        )

    def rates(self, allocation: PowerAllocation) -> np.ndarray:
        return np.log2(1.0 + self.sinr(allocation.user_powers, allocation.relay_power))


def _pair_products(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=float).reshape(-1, 2)
    return np.repeat(v[:, 0] * v[:, 1], 2)


def mrc_coefficients(cfg: SystemConfig, stats: EstimationStats | None = None) -> SinrCoefficients:
    """Bound coefficients for MRC/MRT relaying.

    Entries are the exact second-order moments of the unnormalized effective
    channel divided by N(N+1); noise entries fold in the statistical
    normalization, which is how the relay power enters the bound.
    """
    validate_config(cfg)
    if stats is None:
        stats = estimation_stats(cfg)
    n = cfg.n_relay_antennas
    s = cfg.large_scale
    se = stats.est_variance
    nv = cfg.noise_variance
    se_t = _partner(se)

    prod = _pair_products(se)  # per-user copy of its pair's estimate product
    prod_tot = prod[::2].sum()

    gain = n * (n + 1) * prod**2

    # interference[r, i]: second moment of the (r, i) unnormalized effective
    # gain over N(N+1); at i == t it is the gain variance, at i == r it is
    # the loopback part that survives under perfect cancellation.
    inter = (n + 1) * (
        np.outer(se**2 * se_t, s) + np.outer(s, se**2 * se_t)
    ) + 2.0 * prod_tot * np.outer(s, s)

    self_excess = 2.0 * (
        (n + 1) * (s - 2.0 * se) * se_t * se**2
        + (s**2 - 2.0 * se**2) * prod_tot
    )

    user_noise_power = nv * (2.0 * prod_tot * s + (n + 1) * se**2 * se_t)
    relay_noise = nv * ((n + 1) * se_t * se**2 + 2.0 * s * prod_tot)
    user_noise_floor = 2.0 * nv**2 * prod_tot
    return SinrCoefficients(
        kind=BeamformerKind.MRC_MRT,
        pair_gain=gain,
        interference=inter,
        self_excess=self_excess,
        user_noise_power=user_noise_power,
        relay_noise=relay_noise,
        user_noise_floor=user_noise_floor,
        moment_scale=float(n * (n + 1)),
    )


def zf_coefficients(cfg: SystemConfig, stats: EstimationStats | None = None) -> SinrCoefficients:
    """Bound coefficients for ZFR/ZFT relaying.

    Built from inverse-Gram moments (:mod:`twrelay.wishart`); requires
    N > 2K + 3.  The unnormalized effective gain has mean exactly 1, so
    ``pair_gain`` is all ones and ``moment_scale`` is 1.
    """
    validate_config(cfg)
    if stats is None:
        stats = estimation_stats(cfg)
    n, k = cfg.n_relay_antennas, cfg.n_pairs
    err = stats.err_variance
    nv = cfg.noise_variance

    inv_diag = wishart.mean_diag(n, k, stats.est_variance)  # E[Omega_ii]
    eta = wishart.mean_trace_permuted_square(n, k, stats.est_variance)
    inv_diag_t = _partner(inv_diag)

    # interference[r, i]: estimation error of user i leaking through the
    # receiver's pseudo-inverse column and vice versa, plus the cross term.
    inter = (
        np.outer(inv_diag_t, err)
        + np.outer(err, inv_diag_t)
        + eta * np.outer(err, err)
    )

    self_excess = 2.0 * err * inv_diag_t + err**2 * eta
    user_noise_power = nv * (inv_diag_t + err * eta)
    relay_noise = nv * (inv_diag_t + err * eta)
    user_noise_floor = nv**2 * eta
    return SinrCoefficients(
        kind=BeamformerKind.ZFR_ZFT,
        pair_gain=np.ones(cfg.n_users),
        interference=inter,
        self_excess=self_excess,
        user_noise_power=user_noise_power,
        relay_noise=relay_noise,
        user_noise_floor=user_noise_floor,
        moment_scale=1.0,
    )


def bound_coefficients(
    cfg: SystemConfig, kind: BeamformerKind, stats: EstimationStats | None = None
) -> SinrCoefficients:
    if kind is BeamformerKind.MRC_MRT:
        return mrc_coefficients(cfg, stats)
    return zf_coefficients(cfg, stats)


def bound_rates(
    cfg: SystemConfig, kind: BeamformerKind, allocation: PowerAllocation
) -> RateReport:
    """Closed-form lower-bound rates packaged like a Monte Carlo report."""
    coeffs = bound_coefficients(cfg, kind)
    per_link = coeffs.rates(allocation)
    pref = spectral_efficiency_prefactor(cfg)
    return RateReport(
        kind=kind,
        per_link_rate=per_link,
        per_link_stderr=np.zeros_like(per_link),
        sum_spectral_efficiency=pref * float(per_link.sum()),
        sum_stderr=0.0,
        n_trials=0,
        prefactor=pref,
    )


def scsi_rate_mrc(cfg: SystemConfig, allocation: PowerAllocation) -> np.ndarray:
    """Per-link lower-bound rates under MRC/MRT (statistical CSI at users)."""
    return mrc_coefficients(cfg).rates(allocation)


def scsi_rate_zf(cfg: SystemConfig, allocation: PowerAllocation) -> np.ndarray:
    """Per-link lower-bound rates under ZFR/ZFT (statistical CSI at users)."""
    return zf_coefficients(cfg).rates(allocation)


# --------------------------------------------------------------------------
# Large-array limits under power scaling


def asymptotic_rate(
    cfg: SystemConfig,
    kind: BeamformerKind,
    case: int,
    signal_energy: float,
    relay_energy: float,
    pilot_energy: float | None = None,
    pilot_decay: float | None = None,
) -> np.ndarray:
    """Limit per-link rates as the array grows with powers scaled down.

    Case 1 keeps the training power fixed (user powers ~ signal_energy / N,
    relay power ~ relay_energy / N), so the limit depends on the estimate
    variances.  Case 2 additionally lets the training power decay as
    ``pilot_energy / N**pilot_decay`` with ``0 <= pilot_decay < 1`` and the
    data powers decay by the complementary exponent; the limit then involves
    only the true fading variances and is independent of the exact split.
    """
    validate_config(cfg)
    if signal_energy <= 0 or relay_energy <= 0:
        raise RateError("signal_energy and relay_energy must be positive")
    nv = cfg.noise_variance
    s = cfg.large_scale
    s_t = _partner(s)

    if case == 1:
        se = estimation_stats(cfg).est_variance
        se_t = _partner(se)
        prod_tot = _pair_products(se)[::2].sum()
        if kind is BeamformerKind.MRC_MRT:
            num = signal_energy * relay_energy * se_t**2 * se**2
            den = (
                signal_energy * nv * float(np.sum(se**2 * se_t))
                + relay_energy * nv * se_t * se**2
                + 2.0 * prod_tot * nv**2
            )
        else:
            cross = float(np.sum(signal_energy / se + nv / (se * se_t)))
            num = relay_energy * signal_energy * se_t
            den = relay_energy * nv + se_t * nv * cross
        return np.log2(1.0 + num / den)

    if case == 2:
        if pilot_energy is None or pilot_decay is None:
            raise RateError("case 2 needs pilot_energy and pilot_decay")
        if pilot_energy <= 0:
            raise RateError("pilot_energy must be positive")
        if not 0.0 <= pilot_decay < 1.0:
            raise RateError(
                f"pilot_decay must satisfy 0 <= value < 1, got {pilot_decay} "
                "(faster decay starves the channel estimator and no finite "
                "limit rate exists)"
            )
        tp = cfg.training_symbols * pilot_energy
        if kind is BeamformerKind.MRC_MRT:
            pair4 = (s.reshape(-1, 2)[:, 0] * s.reshape(-1, 2)[:, 1]) ** 2
            num = tp**2 * signal_energy * relay_energy * s_t**4 * s**4
            den = tp * nv**2 * (
                signal_energy * float(np.sum(s**4 * s_t**2))
                + relay_energy * s_t**2 * s**4
            ) + 2.0 * nv**4 * float(pair4.sum())
        else:
            cross = float(np.sum(tp * signal_energy / s**2 + nv**2 / (s**2 * s_t**2)))
            num = tp**2 * signal_energy * relay_energy * s_t**2
            den = tp * relay_energy * nv**2 + s_t**2 * nv**2 * cross
        return np.log2(1.0 + num / den)

    raise RateError(f"case must be 1 or 2, got {case!r}")
