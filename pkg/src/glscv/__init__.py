"""Closed-form leave-M-out cross-validation and deletion diagnostics for GLS."""

from .covariance import (
    CorrelationMatrix,
    CorrelationModel,
    PartialCorrelation,
    PrecisionMatrix,
    build_correlation,
    deleted_precision,
    inverse_correlation,
    partial_correlation,
)
from .crossval import (
    FoldSet,
    OracleReport,
    SimulationSummary,
    compare_folds,
    make_folds,
    refit_actual,
    simulate_kfold,
)
from .dataset import (
    LongDataset,
    ModelSpec,
    RegressionProblem,
    build_design,
    load_design_csv,
    load_long_csv,
    write_long_csv,
)
from .diagnostics import DeletionStats, deletion_stats, loo_all, loo_arrays, srd_via_partial
from .errors import (
    ConditioningError,
    DataError,
    DeletionSingularError,
    GlsError,
    NumericalError,
    ParameterDomainError,
    RankDeficiencyError,
)
from .estimator import GLSRegressor
from .glsfit import GlsFit, fit_gls, restricted_loglik, tilde_block, transformed_residuals

__version__ = "0.1.0"
