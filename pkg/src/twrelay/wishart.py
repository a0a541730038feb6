"""Moments of the inverse Gram matrix of the estimated channel.

With ``Gh`` an N x 2K complex Gaussian matrix whose columns have per-element
variances ``est_variance``, the Gram matrix ``Gh^H Gh`` is complex Wishart
and ``Omega = (Gh^H Gh)^{-1}`` is inverse-Wishart.  Zero-forcing rate
analysis needs the first two moments of Omega's entries; they exist only
for ``N > 2K + 1`` and ``N > 2K + 3`` respectively, which is why the model
requires ``N > 2K + 3`` globally.

All formulas here are for the complex case with degrees-of-freedom excess
``p = N - 2K``:

    E[Omega_ii]        = 1 / (p * s_i)
    E[Omega_ii^2]      = 1 / (p * (p - 1) * s_i^2)
    E[Omega_ii Omega_jj] = 1 / ((p^2 - 1) * s_i * s_j)        (i != j)
    E[|Omega_ij|^2]    = 1 / (p * (p^2 - 1) * s_i * s_j)      (i != j)

where ``s_i = est_variance[i]``.  Each was confirmed against direct
simulation to Monte Carlo accuracy before being frozen here; the analogous
real-valued constants (which differ by one in several places) do not match
the complex case and must not be substituted.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "dof_excess",
    "mean_diag",
    "mean_sq_diag",
    "mean_diag_product",
    "mean_abs_offdiag_sq",
    "mean_trace_permuted_square",
    "pairwise_inverse_sum",
]


def dof_excess(n_relay_antennas: int, n_pairs: int) -> int:
    """Degrees-of-freedom excess ``p = N - 2K``, checked for moment existence."""
    p = n_relay_antennas - 2 * n_pairs
    if p <= 3:
        raise ValueError(
            f"N - 2K = {p}: second inverse-Gram moments need N > 2K + 3"
        )
    return p


def mean_diag(n: int, k: int, est_variance: np.ndarray) -> np.ndarray:
    """E[Omega_ii] for every user i."""
    p = dof_excess(n, k)
    return 1.0 / (p * np.asarray(est_variance, dtype=float))


def mean_sq_diag(n: int, k: int, est_variance: np.ndarray) -> np.ndarray:
    """E[Omega_ii^2] for every user i."""
    p = dof_excess(n, k)
    s = np.asarray(est_variance, dtype=float)
    return 1.0 / (p * (p - 1) * s**2)


def mean_diag_product(n: int, k: int, est_variance: np.ndarray) -> np.ndarray:
    """Matrix of E[Omega_ii Omega_jj]; diagonal holds E[Omega_ii^2]."""
    p = dof_excess(n, k)
    s = np.asarray(est_variance, dtype=float)
    out = 1.0 / ((p**2 - 1) * np.outer(s, s))
    np.fill_diagonal(out, mean_sq_diag(n, k, s))
    return out


def mean_abs_offdiag_sq(n: int, k: int, est_variance: np.ndarray) -> np.ndarray:
    """Matrix of E[|Omega_ij|^2] for i != j; diagonal holds E[Omega_ii^2]."""
    p = dof_excess(n, k)
    s = np.asarray(est_variance, dtype=float)
    out = 1.0 / (p * (p**2 - 1) * np.outer(s, s))
    np.fill_diagonal(out, mean_sq_diag(n, k, s))
    return out


def pairwise_inverse_sum(est_variance: np.ndarray) -> float:
    """``sum_i 1 / (s_i * s_partner(i))`` over all users i."""
    s = np.asarray(est_variance, dtype=float)
    swapped = s.reshape(-1, 2)[:, ::-1].reshape(-1)
    return float(np.sum(1.0 / (s * swapped)))


def mean_trace_permuted_square(n: int, k: int, est_variance: np.ndarray) -> float:
    """E[Tr{T Omega T Omega*}] with T the pair-swap permutation.

    The trace expands to ``sum_{i,k} Omega_{i'k} Omega_{ik'}`` (``i'`` the
    partner of ``i``); the general second-moment contraction leaves one
    diagonal-product and one squared-off-diagonal contribution per user,
    which combine to

        E = sum_i 1 / (p (p-1) s_i s_i').
    """
    p = dof_excess(n, k)
    return pairwise_inverse_sum(est_variance) / (p * (p - 1))
