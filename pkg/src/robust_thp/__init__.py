"""Robust THP transceiver designs for the multiuser MIMO downlink."""

from .model import (
    DEFAULT_MODULO_BASE,
    Channel,
    ModuloConfig,
    MseReport,
    NbeModel,
    SeModel,
    SystemConfig,
    Transceiver,
    averaged_smse,
    identity_transceiver,
    modulo,
    mse_report,
    per_user_mse,
    smse,
    thp_encode,
    vectorized_residual,
)
from .nbe_design import (
    FeasibilityReport,
    NbeDesignParams,
    mse_balancing_design,
    mse_constrained_design,
    nbe_smse_design,
    nbe_smse_design_per_antenna,
)
from .oracle import mc_expected_smse, worst_case_smse, worst_case_user_mse
from .sampling import sample_channel, sample_nbe_error, sample_se_error
from .se_design import DesignTrace, SeDesignParams, SolverFailure, se_design

__version__ = "0.1.0"
