"""Link-level simulator and power-allocation optimizer for multi-pair
two-way amplify-and-forward relaying with large relay antenna arrays.

The package is organized bottom-up:

* :mod:`twrelay.config`       system geometry, estimation statistics, budgets
* :mod:`twrelay.channel`      channel draws, pilot-based MMSE estimation, file dumps
* :mod:`twrelay.wishart`      inverse-Gram moments for the zero-forcing analysis
* :mod:`twrelay.beamforming`  relay combiners and normalization constants
* :mod:`twrelay.rates`        instantaneous/Monte Carlo/closed-form/asymptotic rates
* :mod:`twrelay.gp`           a small geometric-program interior-point solver
* :mod:`twrelay.allocation`   equal, optimized, and asymptotically optimal powers
* :mod:`twrelay.moments`      brute-force oracle checks for every closed form
* :mod:`twrelay.experiments`  sweep runner, presets, CSV/JSON emission
* :mod:`twrelay.figures`      PNG rendering of experiment results
* :mod:`twrelay.cli`          the ``twrelay`` command
"""

__version__ = "0.1.0"

from .allocation import (
    AllocationError,
    allocation_report,
    aopa_mrc,
    aopa_zf,
    epa,
    opa,
    OpaSettings,
    OpaTrace,
)
from .beamforming import (
    alpha1_statistical,
    alpha2_statistical,
    BeamformerKind,
    BeamformingError,
    build_unnormalized,
    normalize_instantaneous,
    permutation_T,
    RelayBeamformer,
)
from .channel import (
    ChannelSample,
    draw_channel,
    draw_channel_sample_direct,
    load_channel_sample,
    make_pilot_matrix,
    mmse_estimate_via_training,
    PilotMatrix,
    save_channel_sample,
)
from .config import (
    ConfigError,
    db_to_linear,
    estimation_stats,
    EstimationStats,
    linear_to_db,
    partner_index,
    PowerAllocation,
    PowerBudget,
    spectral_efficiency_prefactor,
    SystemConfig,
    validate_config,
)
from .experiments import (
    build_preset,
    ExperimentError,
    ExperimentSpec,
    load_spec,
    preset_names,
    run_experiment,
    spec_from_dict,
)
from .gp import (
    GpError,
    GpInfeasibleError,
    GpProblem,
    GpSolution,
    GpUnboundedError,
    Monomial,
    Posynomial,
    solve_gp,
    variable,
)
from .moments import (
    MomentCheck,
    OracleReport,
    run_oracle_suite,
)
from .rates import (
    asymptotic_rate,
    bound_coefficients,
    bound_rates,
    instantaneous_sinr,
    monte_carlo_rate,
    RateError,
    RateReport,
    scsi_rate_mrc,
    scsi_rate_zf,
    SinrCoefficients,
    sum_spectral_efficiency,
)

__all__ = [
    "__version__",
    "AllocationError",
    "allocation_report",
    "aopa_mrc",
    "aopa_zf",
    "epa",
    "opa",
    "OpaSettings",
    "OpaTrace",
    "alpha1_statistical",
    "alpha2_statistical",
    "BeamformerKind",
    "BeamformingError",
    "build_unnormalized",
    "normalize_instantaneous",
    "permutation_T",
    "RelayBeamformer",
    "ChannelSample",
    "draw_channel",
    "draw_channel_sample_direct",
    "load_channel_sample",
    "make_pilot_matrix",
    "mmse_estimate_via_training",
    "PilotMatrix",
    "save_channel_sample",
    "ConfigError",
    "db_to_linear",
    "estimation_stats",
    "EstimationStats",
    "linear_to_db",
    "partner_index",
    "PowerAllocation",
    "PowerBudget",
    "spectral_efficiency_prefactor",
    "SystemConfig",
    "validate_config",
    "build_preset",
    "ExperimentError",
    "ExperimentSpec",
    "load_spec",
    "preset_names",
    "run_experiment",
    "spec_from_dict",
    "GpError",
    "GpInfeasibleError",
    "GpProblem",
    "GpSolution",
    "GpUnboundedError",
    "Monomial",
    "Posynomial",
    "solve_gp",
    "variable",
    "MomentCheck",
    "OracleReport",
    "run_oracle_suite",
    "asymptotic_rate",
    "bound_coefficients",
    "bound_rates",
    "instantaneous_sinr",
    "monte_carlo_rate",
    "RateError",
    "RateReport",
    "scsi_rate_mrc",
    "scsi_rate_zf",
    "SinrCoefficients",
    "sum_spectral_efficiency",
]
