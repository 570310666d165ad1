"""Reduced-dimension GP emulation and Bayesian calibration of simulators
combining a continuous time-series channel with a binary spatial-field
channel, plus a synthetic forward model for end-to-end verification."""

from .calibration import (
    CalibrationData,
    ChainState,
    PosteriorChain,
    PriorConfig,
    ProposalConfig,
    ReducedObservation,
    batch_means_mcse,
    binary_log_likelihood,
    conditional_nu1_moments,
    half_chain_stability,
    initial_state,
    log_posterior,
    reduce_observation,
    run_mcmc,
    series_log_likelihood,
)
from .discrepancy import (
    BinaryDiscrepancyBasis,
    SeriesDiscrepancyBasis,
    build_binary_basis,
    build_kernel_basis,
    common_binary_discrepancy,
    simulate_series_discrepancy,
)
from .emulator import (
    EmulatorBank,
    GpComponentModel,
    GpHyperParams,
    bank_predict,
    central_holdout,
    component_from_hyper,
    fit_bank,
    fit_component,
    leave_out_experiment,
    neg_log_likelihood,
    predict,
)
from .ensembles import (
    BinaryEnsemble,
    BinaryObservation,
    Design,
    GridSpec,
    ParameterPoint,
    SeriesEnsemble,
    SeriesObservation,
    exclude_unrealistic_runs,
    load_matrix,
    save_matrix,
)
from .projection import (
    Envelope,
    PredictiveSample,
    ScalarResponseSet,
    TrajectoryResponseSet,
    chain_to_predictive,
    fit_projection_emulator,
    fit_trajectory_emulator,
    predict_scalar,
    prior_predictive,
    trajectory_envelope,
)
from .reduction import (
    LogisticPcaModel,
    PcaModel,
    ScoreSet,
    fit_logistic_pca,
    fit_pca,
    project_series,
    reconstruct,
)
from .synthetic import (
    SyntheticConfig,
    factorial_design,
    forward_binary,
    forward_series,
    forward_volume,
    generate_ensemble,
    make_simulated_observations,
    volume_change_at,
)

__version__ = "0.1.0"
