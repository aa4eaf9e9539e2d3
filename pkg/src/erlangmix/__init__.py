"""Finite Erlang-mixture approximation of densities on the positive orthant."""

from .kernels import (
    ErlangParams,
    erlang_cdf,
    erlang_log_pdf,
    erlang_lp_norm_bound,
    erlang_lp_norm_exact,
    erlang_pdf,
    erlang_sf,
    erlang_sup_norm_bound,
    erlang_sup_norm_exact,
    product_kernel_pdf,
)
from .densities import Cell, DensitySpec, HolderInfo, cell_mass, zoo_density
from .operator import (
    CellMassTable,
    ErlangMixture,
    SupportPolicy,
    ThresholdPolicy,
    build_mixture,
    displacement_moments,
    mc_oracle,
    mixture_pdf,
    operator_eval,
)
from .truncation import ComponentSchedule, TruncationPlan, truncate
from .metrics import ErrorReport, NormSpec, error_norm
from .ratelab import RateStudyConfig, fit_loglog, run_component_sweep, run_scale_sweep
from .estimators import (
    ComponentBudgetApproximator,
    ErlangMixtureApproximator,
    TruncatedErlangMixture,
)

__version__ = "0.1.0"
