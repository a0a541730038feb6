"""Channel sampling and training-based channel estimation.

The uplink matrix G is N x 2K with independent circularly-symmetric complex
Gaussian entries; column i has per-element variance ``large_scale[i]``.
Channel reciprocity holds within a coherence interval, so the downlink is
``G.T`` and nothing else needs to be drawn.

Two ways to obtain the (estimate, error) pair:

* simulate the pilot phase and run the linear-MMSE estimator
  (:func:`mmse_estimate_via_training`), or
* draw the estimate and the error directly from their exact joint
  distribution (:func:`draw_channel_sample_direct`), which is statistically
  equivalent, orthogonal by construction, and much cheaper.  Monte Carlo
  paths use this one.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig, estimation_stats, validate_config

__all__ = [
    "ChannelSample",
    "PilotMatrix",
    "draw_channel",
    "make_pilot_matrix",
    "mmse_estimate_via_training",
    "draw_channel_sample_direct",
    "save_channel_sample",
    "load_channel_sample",
]

_MAGIC = b"TWCH"


@dataclass(frozen=True)
class ChannelSample:
    """One realization of the channel and its decomposition.

    ``estimate + error == true_channel`` holds exactly: whichever two pieces
    are generated first, the third is computed as the closing difference.
    """

    true_channel: np.ndarray
    estimate: np.ndarray
    error: np.ndarray

    def __post_init__(self):
        g, gh, xi = self.true_channel, self.estimate, self.error
        if not (g.shape == gh.shape == xi.shape):
            raise ValueError(
                f"shape mismatch: channel {g.shape}, estimate {gh.shape}, error {xi.shape}"
            )

    @property
    def n_relay_antennas(self) -> int:
        return self.true_channel.shape[0]

    @property
    def n_users(self) -> int:
        return self.true_channel.shape[1]


@dataclass(frozen=True)
class PilotMatrix:
    """A tau x 2K matrix of mutually orthonormal pilot columns."""

    matrix: np.ndarray

    def __post_init__(self):
        phi = self.matrix
        gram = phi.conj().T @ phi
        if not np.allclose(gram, np.eye(phi.shape[1]), atol=1e-10):
            raise ValueError("pilot columns are not orthonormal to 1e-10")


def make_pilot_matrix(training_symbols: int, n_users: int) -> PilotMatrix:
    """Orthonormal pilots from the first ``n_users`` columns of a DFT matrix.

    Requires ``training_symbols >= n_users``, otherwise orthogonality is
    impossible.
    """
    if training_symbols < n_users:
        raise ValueError(
            f"cannot build {n_users} orthogonal pilots of length {training_symbols}"
        )
    t = np.arange(training_symbols)
    k = np.arange(n_users)
    phi = np.exp(-2j * np.pi * np.outer(t, k) / training_symbols)
    return PilotMatrix(phi / np.sqrt(training_symbols))


def _complex_normal(rng: np.random.Generator, shape, variance) -> np.ndarray:
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return scale * (re + 1j * im)


def draw_channel(cfg: SystemConfig, rng: np.random.Generator, n_draws: int = 1) -> np.ndarray:
    """Draw true channel matrices, shape (n_draws, N, 2K)."""
    validate_config(cfg)
    shape = (n_draws, cfg.n_relay_antennas, cfg.n_users)
    return _complex_normal(rng, shape, cfg.large_scale[None, None, :])


def mmse_estimate_via_training(
    cfg: SystemConfig,
    true_channel: np.ndarray,
    rng: np.random.Generator,
    pilots: PilotMatrix | None = None,
) -> ChannelSample:
    """Simulate the pilot phase and compute the linear-MMSE channel estimate.

    The relay observes ``sqrt(tau * pP) * G @ Phi.T`` plus noise over the
    training window; right-multiplying by ``Phi.conj()`` decouples the users,
    and the per-user MMSE filter is the diagonal shrinkage
    ``tau*pP*s / (tau*pP*s + nv)`` applied to each decoupled column.
    """
    validate_config(cfg)
    if pilots is None:
        pilots = make_pilot_matrix(cfg.training_symbols, cfg.n_users)
    g = np.asarray(true_channel)
    squeeze = g.ndim == 2
    if squeeze:
        g = g[None]
    n_draws, n, _ = g.shape
    amp = np.sqrt(cfg.training_symbols * cfg.pilot_power)
    received = amp * g @ pilots.matrix.T + _complex_normal(
        rng, (n_draws, n, cfg.training_symbols), cfg.noise_variance
    )
    decoupled = received @ pilots.matrix.conj() / amp
    energy = cfg.training_symbols * cfg.pilot_power
    shrink = energy * cfg.large_scale / (energy * cfg.large_scale + cfg.noise_variance)
    estimate = decoupled * shrink[None, None, :]
    error = g - estimate
    if squeeze:
        g, estimate, error = g[0], estimate[0], error[0]
    return ChannelSample(true_channel=g, estimate=estimate, error=error)


def draw_channel_sample_direct(
    cfg: SystemConfig, rng: np.random.Generator, n_draws: int = 1
) -> ChannelSample:
    """Draw (estimate, error) directly from their exact joint law.

    MMSE orthogonality makes the estimate and the error independent complex
    Gaussians with the variances from :func:`~twrelay.config.estimation_stats`;
    the true channel is reconstructed as their sum.  Returns stacked arrays
    of shape (n_draws, N, 2K).
    """
    stats = estimation_stats(cfg)
    shape = (n_draws, cfg.n_relay_antennas, cfg.n_users)
    estimate = _complex_normal(rng, shape, stats.est_variance[None, None, :])
    error = _complex_normal(rng, shape, stats.err_variance[None, None, :])
    return ChannelSample(true_channel=estimate + error, estimate=estimate, error=error)


def save_channel_sample(path, sample: ChannelSample) -> None:
    """Write a sample to ``path`` in the binary dump format.

    Layout: magic ``TWCH``, format version u16, then N and 2K as
    little-endian u32, then the three matrices (true, estimate, error) as
    row-major complex64.  complex64 loses precision relative to the in-memory
    complex128, so a round trip reproduces values only to float32 accuracy.
    """
    g = sample.true_channel
    if g.ndim != 2:
        raise ValueError(f"can only dump a single draw, got shape {g.shape}")
    n, m = g.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HII", 1, n, m))
        for arr in (sample.true_channel, sample.estimate, sample.error):
            fh.write(np.ascontiguousarray(arr, dtype=np.complex64).tobytes())


def load_channel_sample(path) -> ChannelSample:
    """Read a sample written by :func:`save_channel_sample`."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a channel dump: bad magic {magic!r}")
        version, n, m = struct.unpack("<HII", fh.read(10))
        if version != 1:
            raise ValueError(f"unsupported channel dump version {version}")
        count = n * m
        mats = []
        for _ in range(3):
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise ValueError("truncated channel dump")
            mats.append(np.frombuffer(raw, dtype=np.complex64).reshape(n, m))
    g = mats[0].astype(np.complex128)
    gh = mats[1].astype(np.complex128)
    # Recompute the error so the closing identity survives the lossy
    # complex64 round trip exactly; the stored error matrix is redundant.
    return ChannelSample(true_channel=g, estimate=gh, error=g - gh)
