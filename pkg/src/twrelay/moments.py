"""Monte Carlo cross-checks for every closed-form moment the bounds rely on.

Each check compares one analytic quantity against a sample estimate and
reports a z-score.  The sampled side is computed by brute force: the relay
combiner is materialized as a dense matrix and every gain is an explicit
quadratic form, so these checks share no algebra with the vectorized
implementations in :mod:`twrelay.rates` and :mod:`twrelay.beamforming`.

A check passes when the analytic value sits within four standard errors of
the estimate.  A miss with fewer than 1000 samples reports "inconclusive"
rather than "fail", since the error bars themselves are then unreliable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import wishart
from .beamforming import (
    alpha1_statistical,
    alpha2_statistical,
    BeamformerKind,
)
from .channel import draw_channel_sample_direct
from .config import SystemConfig, estimation_stats, validate_config
from .rates import bound_coefficients

__all__ = [
    "MomentCheck",
    "OracleReport",
    "check_gaussian_fourth_moments",
    "check_inverse_wishart",
    "check_relay_gain_moments",
    "run_oracle_suite",
]

# Samples below this count cannot distinguish a wrong constant from noise,
# so a miss is reported as inconclusive instead of a failure.
MIN_CONCLUSIVE_SAMPLES = 1_000
Z_GATE = 4.0


@dataclass(frozen=True)
class MomentCheck:
    """One analytic-vs-sampled comparison."""

    name: str
    analytic: float
    estimate: float
    stderr: float
    n_samples: int

    @property
    def z_score(self) -> float:
        gap = self.estimate - self.analytic
        if self.stderr == 0.0:
            return 0.0 if gap == 0.0 else np.inf * np.sign(gap)
        return float(gap / self.stderr)

    @property
    def status(self) -> str:
        if abs(self.estimate - self.analytic) <= Z_GATE * self.stderr:
            return "pass"
        if self.n_samples < MIN_CONCLUSIVE_SAMPLES:
            return "inconclusive"
        return "fail"


@dataclass(frozen=True)
class OracleReport:
    checks: tuple

    @property
    def n_pass(self) -> int:
        return sum(c.status == "pass" for c in self.checks)

    @property
    def n_fail(self) -> int:
        return sum(c.status == "fail" for c in self.checks)

    @property
    def n_inconclusive(self) -> int:
        return sum(c.status == "inconclusive" for c in self.checks)

    @property
    def passed(self) -> bool:
        return self.n_fail == 0

    def failing_names(self) -> list:
        return [c.name for c in self.checks if c.status == "fail"]

    def to_csv_rows(self) -> list:
        rows = [("name", "analytic", "estimate", "stderr", "z_score", "status")]
        for c in self.checks:
            rows.append(
                (
                    c.name,
                    format(c.analytic, ".12g"),
                    format(c.estimate, ".12g"),
                    format(c.stderr, ".12g"),
                    format(c.z_score, ".3f"),
                    c.status,
                )
            )
        return rows

    def format_table(self) -> str:
        width = max(len(c.name) for c in self.checks)
        lines = [
            f"{'check':<{width}}  {'analytic':>14}  {'estimate':>14}  {'z':>7}  status"
        ]
        for c in self.checks:
            lines.append(
                f"{c.name:<{width}}  {c.analytic:>14.6g}  {c.estimate:>14.6g}"
                f"  {c.z_score:>7.2f}  {c.status}"
            )
        lines.append(
            f"{self.n_pass} pass, {self.n_fail} fail, "
            f"{self.n_inconclusive} inconclusive out of {len(self.checks)} checks"
        )
        return "\n".join(lines)


def _mean_check(name, analytic, samples) -> MomentCheck:
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    stderr = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else np.inf
    return MomentCheck(
        name=name,
        analytic=float(analytic),
        estimate=float(samples.mean()),
        stderr=stderr,
        n_samples=n,
    )


def _complex_normal(rng, shape, variance):
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


# --------------------------------------------------------------------------
# Layer 1: fourth moments of complex Gaussian vectors.


def check_gaussian_fourth_moments(
    n_antennas: int,
    variance_a: float,
    variance_b: float,
    n_samples: int,
    rng,
) -> list:
    """Norm and cross-correlation moments of independent CN(0, v I) vectors."""
    n = int(n_antennas)
    a = _complex_normal(rng, (n_samples, n), variance_a)
    b = _complex_normal(rng, (n_samples, n), variance_b)
    norm_sq = np.sum(np.abs(a) ** 2, axis=1)
    cross = np.abs(np.einsum("si,si->s", a.conj(), b)) ** 2
    tag = f"gaussian/N{n}"
    return [
        _mean_check(f"{tag}/norm-square", n * variance_a, norm_sq),
        _mean_check(
            f"{tag}/norm-fourth", n * (n + 1) * variance_a**2, norm_sq**2
        ),
        _mean_check(f"{tag}/cross-square", n * variance_a * variance_b, cross),
        _mean_check(
            f"{tag}/cross-fourth",
            2 * n * (n + 1) * variance_a**2 * variance_b**2,
            cross**2,
        ),
    ]


# --------------------------------------------------------------------------
# Layer 2: inverse-Gram moments used by the zero-forcing analysis.


def check_inverse_wishart(
    n_antennas: int,
    n_pairs: int,
    est_variances,
    n_samples: int,
    rng,
) -> list:
    """Moments of inv(G^H G) for G with independent CN(0, d_i) columns."""
    n = int(n_antennas)
    n_users = 2 * int(n_pairs)
    d = np.asarray(est_variances, dtype=float)
    if d.shape != (n_users,):
        raise ValueError(f"need {n_users} column variances, got shape {d.shape}")
    g = _complex_normal(rng, (n_samples, n, n_users), 1.0) * np.sqrt(d)
    gram = np.einsum("sni,snj->sij", g.conj(), g)
    omega = np.linalg.inv(gram)
    swap = np.arange(n_users) ^ 1
    trace_perm = np.einsum(
        "sij,sji->s", omega[:, swap, :], omega.conj()[:, swap, :]
    ).real
    tag = f"wishart/N{n}K{n_pairs}"
    return [
        _mean_check(
            f"{tag}/diag-mean",
            wishart.mean_diag(n, n_pairs, d)[0],
            omega[:, 0, 0].real,
        ),
        _mean_check(
            f"{tag}/diag-square",
            wishart.mean_sq_diag(n, n_pairs, d)[0],
            np.abs(omega[:, 0, 0]) ** 2,
        ),
        _mean_check(
            f"{tag}/diag-product",
            wishart.mean_diag_product(n, n_pairs, d)[0, 1],
            (omega[:, 0, 0] * omega[:, 1, 1]).real,
        ),
        _mean_check(
            f"{tag}/offdiag-square",
            wishart.mean_abs_offdiag_sq(n, n_pairs, d)[0, 1],
            np.abs(omega[:, 0, 1]) ** 2,
        ),
        _mean_check(
            f"{tag}/trace-permuted",
            wishart.mean_trace_permuted_square(n, n_pairs, d),
            trace_perm,
        ),
    ]


# --------------------------------------------------------------------------
# Layer 3: the effective-gain means and variances behind the rate bounds.


def _dense_gain_samples(cfg: SystemConfig, kind: BeamformerKind, n_samples, rng):
    """Brute-force samples of every combiner statistic, via dense matrices.

    Processed in chunks: the dense N x N combiner per draw is the only big
    array, and per-draw outputs are all small.
    """
    n_users = cfg.n_users
    swap = np.arange(n_users) ^ 1
    chunk = max(int(2e7 / (cfg.n_relay_antennas**2)), 16)

    parts = {key: [] for key in ("w", "fed", "row", "col", "fro")}
    done = 0
    while done < n_samples:
        take = min(chunk, n_samples - done)
        done += take
        sample = draw_channel_sample_direct(cfg, rng, n_draws=take)
        g = sample.true_channel
        gh = sample.estimate

        if kind is BeamformerKind.MRC_MRT:
            u = gh
        else:
            gram = np.einsum("sni,snj->sij", gh.conj(), gh)
            u = np.einsum("sni,sij->snj", gh, np.linalg.inv(gram))

        # Dense unnormalized combiner: conj(U) T U^H, with T folded in as a
        # column swap of conj(U).
        f0 = np.einsum("sni,smi->snm", u.conj()[:, :, swap], u.conj())
        parts["w"].append(np.einsum("sni,snm,smj->sij", g, f0, g, optimize=True))
        parts["fro"].append(np.sum(np.abs(f0) ** 2, axis=(1, 2)))
        row = np.einsum("sni,snm->sim", g, f0)
        parts["row"].append(np.sum(np.abs(row) ** 2, axis=2))
        parts["col"].append(
            np.sum(np.abs(np.einsum("snm,smi->sni", f0, g)) ** 2, axis=1)
        )
        if kind is BeamformerKind.MRC_MRT:
            parts["fed"].append(
                np.einsum("sni,snm,smi->si", gh, f0, gh, optimize=True)
            )
        else:
            parts["fed"].append(np.zeros((take, n_users), dtype=complex))

    return (
        np.concatenate(parts["w"]),
        np.concatenate(parts["fed"]),
        np.concatenate(parts["row"]),
        np.concatenate(parts["col"]),
        np.concatenate(parts["fro"]),
    )


def check_relay_gain_moments(
    cfg: SystemConfig,
    kind: BeamformerKind,
    user_powers,
    relay_power: float,
    n_samples: int,
    rng,
    links=(0, 1),
) -> list:
    """Check the per-link gain moments and the normalization constant.

    For each requested receive link r (with transmit partner t): the mean of
    the desired gain, its variance, the inter-pair leakage power from one
    non-partner user, the residual self-interference power after the known
    feedback term is removed, and the relay-noise amplification.  One extra
    check ties the statistical normalization constant to the sampled
    denominator it models.
    """
    cfg = validate_config(cfg)
    stats = estimation_stats(cfg)
    coeffs = bound_coefficients(cfg, kind, stats)
    scale = coeffs.moment_scale
    p = np.asarray(user_powers, dtype=float)
    w, fed, row_norm, col_norm, fro = _dense_gain_samples(cfg, kind, n_samples, rng)

    n_users = cfg.n_users
    tag = f"{kind.value}/N{cfg.n_relay_antennas}K{cfg.n_pairs}"
    checks = []
    for r in links:
        t = r ^ 1
        mean_analytic = np.sqrt(scale * coeffs.pair_gain[r])
        checks.append(
            _mean_check(f"{tag}/gain-mean-link{r}", mean_analytic, w[:, r, t].real)
        )
        checks.append(
            _mean_check(
                f"{tag}/gain-variance-link{r}",
                scale * coeffs.interference[r, t],
                np.abs(w[:, r, t] - mean_analytic) ** 2,
            )
        )
        others = [i for i in range(n_users) if i not in (r, t)]
        if others:
            i = others[0]
            checks.append(
                _mean_check(
                    f"{tag}/interpair-link{r}-from{i}",
                    scale * coeffs.interference[r, i],
                    np.abs(w[:, r, i]) ** 2,
                )
            )
        checks.append(
            _mean_check(
                f"{tag}/self-residual-link{r}",
                scale * (coeffs.interference[r, r] + coeffs.self_excess[r]),
                np.abs(w[:, r, r] - fed[:, r]) ** 2,
            )
        )
        checks.append(
            _mean_check(
                f"{tag}/relay-noise-link{r}",
                scale * coeffs.relay_noise[r] / cfg.noise_variance,
                row_norm[:, r],
            )
        )

    if kind is BeamformerKind.MRC_MRT:
        alpha = alpha1_statistical(cfg, stats, relay_power=relay_power, user_powers=p)
    else:
        alpha = alpha2_statistical(cfg, stats, relay_power=relay_power, user_powers=p)
    checks.append(
        _mean_check(
            f"{tag}/normalization-denominator",
            relay_power / alpha**2,
            col_norm @ p + cfg.noise_variance * fro,
        )
    )
    return checks


# --------------------------------------------------------------------------
# Suite assembly


def run_oracle_suite(seed: int = 0, n_samples: int = 20_000) -> OracleReport:
    """Run the full grid of moment checks and aggregate the results.

    Deliberately non-uniform variances and powers everywhere: uniform
    profiles would let index mix-ups cancel out and pass silently.
    """
    rng = np.random.default_rng(seed)
    checks = []

    for n in (8, 16, 32):
        checks.extend(
            check_gaussian_fourth_moments(n, 1.3, 0.7, n_samples, rng)
        )

    for n, k in ((8, 1), (16, 2), (32, 2)):
        d = 0.5 + 0.25 * np.arange(2 * k)
        checks.extend(check_inverse_wishart(n, k, d, n_samples, rng))

    for n, k in ((16, 1), (32, 2)):
        cfg = SystemConfig(
            n_relay_antennas=n,
            n_pairs=k,
            coherence_symbols=200,
            training_symbols=2 * k,
            noise_variance=1.0,
            pilot_power=10.0,
            large_scale=0.8 + 0.3 * np.arange(2 * k),
        )
        powers = 0.5 + 0.5 * np.arange(2 * k)
        for kind in (BeamformerKind.MRC_MRT, BeamformerKind.ZFR_ZFT):
            checks.extend(
                check_relay_gain_moments(
                    cfg, kind, powers, relay_power=4.0, n_samples=n_samples, rng=rng
                )
            )
    return OracleReport(checks=tuple(checks))
