"""Achievable-rate machinery: exact per-realization SINRs, the Monte Carlo
estimator, the closed-form lower bound, and the large-array limits."""
import numpy as np
import pytest

from twrelay.beamforming import (
    BeamformerKind,
    build_unnormalized,
    normalize_instantaneous,
)
from twrelay.channel import ChannelSample, draw_channel_sample_direct
from twrelay.config import PowerAllocation, SystemConfig, estimation_stats
from twrelay.rates import (
    RateError,
    asymptotic_rate,
    bound_coefficients,
    bound_rates,
    instantaneous_sinr,
    monte_carlo_rate,
    mrc_coefficients,
    scsi_rate_mrc,
    scsi_rate_zf,
    sum_spectral_efficiency,
    zf_coefficients,
)


def make_cfg(n=32, k=2, **overrides):
    fields = dict(
        n_relay_antennas=n,
        n_pairs=k,
        coherence_symbols=200,
        training_symbols=2 * k,
        noise_variance=1.0,
        pilot_power=10.0,
    )
    fields.update(overrides)
    return SystemConfig(**fields)


def unit_alloc(cfg, relay_power=4.0):
    return PowerAllocation(user_powers=np.ones(cfg.n_users), relay_power=relay_power)


def test_mrc_moment_scale():
    coeffs = mrc_coefficients(make_cfg(n=64))
    assert coeffs.moment_scale == 64 * 65
    assert zf_coefficients(make_cfg(n=64)).moment_scale == 1.0


def test_bound_is_dimensionally_consistent():
    # Scaling every channel variance and the noise by the same factor leaves
    # all SINRs unchanged; the MRC coefficients pick up the factor to the
    # fourth power and the zero-forcing ones are invariant outright.
    base = make_cfg(n=24, k=2)
    scaled = base.with_updates(large_scale=2 * base.large_scale, noise_variance=2.0)
    alloc = unit_alloc(base)
    for kind, power in ((BeamformerKind.MRC_MRT, 16.0), (BeamformerKind.ZFR_ZFT, 1.0)):
        c0 = bound_coefficients(base, kind)
        c1 = bound_coefficients(scaled, kind)
        np.testing.assert_allclose(c1.pair_gain, power * c0.pair_gain, rtol=1e-12)
        np.testing.assert_allclose(c1.interference, power * c0.interference, rtol=1e-12)
        np.testing.assert_allclose(c1.self_excess, power * c0.self_excess, rtol=1e-12)
        np.testing.assert_allclose(c1.relay_noise, power * c0.relay_noise, rtol=1e-12)
        np.testing.assert_allclose(
            c1.user_noise_power, power * c0.user_noise_power, rtol=1e-12
        )
        assert c1.user_noise_floor == pytest.approx(power * c0.user_noise_floor, rel=1e-12)
        np.testing.assert_allclose(c1.rates(alloc), c0.rates(alloc), rtol=1e-12)


def test_bound_report_layout():
    cfg = make_cfg(n=32, k=2, coherence_symbols=50)
    report = bound_rates(cfg, BeamformerKind.MRC_MRT, unit_alloc(cfg))
    assert report.per_link_rate.shape == (4,)
    assert np.all(report.per_link_rate > 0)
    np.testing.assert_array_equal(report.per_link_stderr, np.zeros(4))
    assert report.sum_stderr == 0.0
    assert report.n_trials == 0
    assert report.prefactor == pytest.approx((50 - 4 - 2) / 50)
    assert report.sum_spectral_efficiency == pytest.approx(
        report.prefactor * report.per_link_rate.sum()
    )


def test_scsi_helpers_match_coefficients():
    cfg = make_cfg(n=20, k=2)
    alloc = unit_alloc(cfg)
    np.testing.assert_array_equal(
        scsi_rate_mrc(cfg, alloc),
        bound_coefficients(cfg, BeamformerKind.MRC_MRT).rates(alloc),
    )
    np.testing.assert_array_equal(
        scsi_rate_zf(cfg, alloc),
        bound_coefficients(cfg, BeamformerKind.ZFR_ZFT).rates(alloc),
    )


def test_sum_spectral_efficiency_checks_shape():
    cfg = make_cfg()
    with pytest.raises(RateError):
        sum_spectral_efficiency(cfg, np.ones(3))


def test_instantaneous_terms_decompose_the_sinr():
    cfg = make_cfg(n=24, k=2)
    sample = draw_channel_sample_direct(cfg, np.random.default_rng(0))
    single = ChannelSample(
        true_channel=sample.true_channel[0],
        estimate=sample.estimate[0],
        error=sample.error[0],
    )
    alloc = unit_alloc(cfg)
    bf = normalize_instantaneous(
        build_unnormalized(BeamformerKind.MRC_MRT, single.estimate),
        single.true_channel,
        alloc,
        cfg.noise_variance,
    )
    terms = instantaneous_sinr(single, bf, alloc, cfg.noise_variance, link=0)
    assert terms.desired > 0
    assert terms.inter_pair >= 0
    assert terms.user_noise == cfg.noise_variance
    denom = (
        terms.residual_self_interference
        + terms.inter_pair
        + terms.relay_noise
        + terms.user_noise
    )
    assert terms.sinr == pytest.approx(terms.desired / denom)
    assert terms.rate == pytest.approx(np.log2(1 + terms.sinr))
    with pytest.raises(RateError):
        instantaneous_sinr(single, bf, alloc, cfg.noise_variance, link=7)


def test_zero_forcing_with_exact_estimate_has_no_leakage():
    cfg = make_cfg(n=16, k=2)
    rng = np.random.default_rng(1)
    g = rng.standard_normal((16, 4)) + 1j * rng.standard_normal((16, 4))
    sample = ChannelSample(true_channel=g, estimate=g, error=np.zeros_like(g))
    alloc = unit_alloc(cfg)
    bf = normalize_instantaneous(
        build_unnormalized(BeamformerKind.ZFR_ZFT, g), g, alloc, cfg.noise_variance
    )
    terms = instantaneous_sinr(sample, bf, alloc, cfg.noise_variance, link=0)
    assert terms.inter_pair < 1e-16
    assert terms.residual_self_interference < 1e-16
    assert terms.desired > 0


def test_monte_carlo_is_reproducible():
    cfg = make_cfg(n=16, k=1, training_symbols=2)
    alloc = unit_alloc(cfg)
    a = monte_carlo_rate(cfg, BeamformerKind.MRC_MRT, alloc, n_trials=200, seed=11)
    b = monte_carlo_rate(cfg, BeamformerKind.MRC_MRT, alloc, n_trials=200, seed=11)
    np.testing.assert_array_equal(a.per_link_rate, b.per_link_rate)
    np.testing.assert_array_equal(a.per_link_stderr, b.per_link_stderr)
    assert a.sum_spectral_efficiency == b.sum_spectral_efficiency
    c = monte_carlo_rate(
        cfg,
        BeamformerKind.MRC_MRT,
        alloc,
        n_trials=200,
        seed=np.random.default_rng(11),
    )
    np.testing.assert_array_equal(a.per_link_rate, c.per_link_rate)
    d = monte_carlo_rate(cfg, BeamformerKind.MRC_MRT, alloc, n_trials=200, seed=12)
    assert not np.array_equal(a.per_link_rate, d.per_link_rate)


def test_monte_carlo_validates_inputs():
    cfg = make_cfg(n=16, k=1, training_symbols=2)
    alloc = unit_alloc(cfg)
    with pytest.raises(RateError):
        monte_carlo_rate(cfg, BeamformerKind.MRC_MRT, alloc, n_trials=0)
    with pytest.raises(RateError):
        monte_carlo_rate(
            cfg, BeamformerKind.MRC_MRT, alloc, n_trials=10, alpha_mode="bogus"
        )
    bad = PowerAllocation(user_powers=np.ones(6), relay_power=1.0)
    with pytest.raises(RateError):
        monte_carlo_rate(cfg, BeamformerKind.MRC_MRT, bad, n_trials=10)


def test_bound_sits_below_monte_carlo():
    cfg = make_cfg(n=32, k=2)
    alloc = unit_alloc(cfg)
    for kind in BeamformerKind:
        mc = monte_carlo_rate(cfg, kind, alloc, n_trials=800, seed=2)
        lb = bound_rates(cfg, kind, alloc)
        assert np.all(
            lb.per_link_rate <= mc.per_link_rate + 3 * mc.per_link_stderr
        ), kind


def test_statistical_alpha_agrees_at_large_n():
    # Channel hardening makes the per-realization normalization concentrate
    # around the closed-form one, so the two Monte Carlo modes nearly agree.
    cfg = make_cfg(n=64, k=1, training_symbols=2)
    alloc = unit_alloc(cfg)
    per = monte_carlo_rate(
        cfg, BeamformerKind.MRC_MRT, alloc, n_trials=400, seed=3
    )
    stat = monte_carlo_rate(
        cfg,
        BeamformerKind.MRC_MRT,
        alloc,
        n_trials=400,
        seed=3,
        alpha_mode="statistical",
    )
    assert stat.sum_spectral_efficiency == pytest.approx(
        per.sum_spectral_efficiency, rel=0.05
    )


def asymptotic_cfg():
    return make_cfg(n=16, k=1, training_symbols=2, pilot_power=1e12)


def test_limit_rate_hand_value_fixed_pilot():
    # K = 1 with unit variances: the limit SINR is E_S E_R / (2 E_S + E_R + 2)
    # for both relaying schemes (no inter-pair terms survive at one pair).
    cfg = asymptotic_cfg()
    for kind in BeamformerKind:
        rates = asymptotic_rate(cfg, kind, case=1, signal_energy=4.0, relay_energy=4.0)
        np.testing.assert_allclose(rates, np.log2(1 + 8 / 7), rtol=1e-6)


def test_limit_rate_hand_value_decaying_pilot():
    # Same target with the pilot power also shrinking: pilot_energy = 0.5 and
    # two training symbols give an effective training energy of 1, which
    # reproduces the fixed-pilot numbers at unit variances.
    cfg = make_cfg(n=16, k=1, training_symbols=2, pilot_power=1e12)
    for kind in BeamformerKind:
        rates = asymptotic_rate(
            cfg,
            kind,
            case=2,
            signal_energy=4.0,
            relay_energy=4.0,
            pilot_energy=0.5,
            pilot_decay=0.5,
        )
        np.testing.assert_allclose(rates, np.log2(1 + 8 / 7), rtol=1e-12)


def test_limit_rate_input_validation():
    cfg = asymptotic_cfg()
    with pytest.raises(RateError):
        asymptotic_rate(cfg, BeamformerKind.MRC_MRT, case=3, signal_energy=1, relay_energy=1)
    with pytest.raises(RateError):
        asymptotic_rate(cfg, BeamformerKind.MRC_MRT, case=1, signal_energy=-1, relay_energy=1)
    with pytest.raises(RateError):
        asymptotic_rate(cfg, BeamformerKind.MRC_MRT, case=2, signal_energy=1, relay_energy=1)
    with pytest.raises(RateError, match="pilot_decay"):
        asymptotic_rate(
            cfg,
            BeamformerKind.MRC_MRT,
            case=2,
            signal_energy=1,
            relay_energy=1,
            pilot_energy=1.0,
            pilot_decay=1.0,
        )
