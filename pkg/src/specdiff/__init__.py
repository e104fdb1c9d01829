"""Numerical toolkit for the joint fluctuations of linear spectral statistics
of a sample covariance matrix and its row/column-deleted companions: matrix
ensembles, difference statistics, the limiting spectral law, the limiting
covariance kernels, and Monte Carlo verification drivers.
"""

from .ensembles import (
    CovModel,
    EntryLaw,
    SpectralMeasure,
    audit_entry_law,
    ladder_values,
    law_moments,
    make_entry_law,
    make_population,
    sample_matrix,
)
from .spectral import (
    DiffSample,
    ProcessSample,
    SingularCovarianceError,
    TestFunction,
    companion_covariance,
    delete_rowcol,
    deleted_spectral_measure,
    diff_statistic,
    eigenvalues,
    full_lss_statistic,
    lss,
    sample_covariance,
    stieltjes_diff_process,
    stieltjes_esd,
)
from .mp_law import (
    Contour,
    ContourError,
    MPModel,
    MPSolverError,
    QuadratureError,
    StieltjesValue,
    atom_mass,
    build_contour,
    centering_difference,
    contour_nodes,
    mp_density,
    mp_integral,
    null_companion_stieltjes,
    null_mp_moment,
    outer_contour,
    solve_companion_stieltjes,
    stieltjes_sweep,
    support_interval,
)
from .kernels import (
    KernelError,
    KernelEval,
    LssCovResult,
    NullCaseParams,
    ResolventPair,
    UnitCircleResult,
    a_kernel,
    bracket_product,
    g_functional,
    h_functional,
    kernel_eval,
    lss_cov,
    null_limit_constants,
    null_lss_cov_unitcircle,
    null_residue_cov_poly,
    null_sigma2,
    null_stieltjes_derivative,
    null_tau2,
    pre_kernel_sigma,
    process_cov,
    resolvents,
    sigma2,
    tau2,
    trace_product_delta,
)
from .montecarlo import (
    ExperimentConfig,
    ExperimentResult,
    compare_theory,
    independence_check,
    normality_diagnostics,
    process_cov_empirical,
    read_samples_csv,
    run_experiment,
    summarize,
    write_samples_csv,
    write_summary_json,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # ensembles
    "CovModel", "EntryLaw", "SpectralMeasure", "audit_entry_law",
    "ladder_values", "law_moments", "make_entry_law", "make_population",
    "sample_matrix",
    # spectral
    "DiffSample", "ProcessSample", "SingularCovarianceError", "TestFunction",
    "companion_covariance", "delete_rowcol", "deleted_spectral_measure",
    "diff_statistic", "eigenvalues", "full_lss_statistic", "lss",
    "sample_covariance", "stieltjes_diff_process", "stieltjes_esd",
    # mp_law
    "Contour", "ContourError", "MPModel", "MPSolverError", "QuadratureError",
    "StieltjesValue", "atom_mass", "build_contour", "centering_difference",
    "contour_nodes", "mp_density", "mp_integral", "null_companion_stieltjes",
    "null_mp_moment", "outer_contour", "solve_companion_stieltjes",
    "stieltjes_sweep", "support_interval",
    # kernels
    "KernelError", "KernelEval", "LssCovResult", "NullCaseParams",
    "ResolventPair", "UnitCircleResult", "a_kernel", "bracket_product",
    "g_functional", "h_functional", "kernel_eval", "lss_cov",
    "null_limit_constants", "null_lss_cov_unitcircle", "null_residue_cov_poly",
    "null_sigma2", "null_stieltjes_derivative", "null_tau2",
    "pre_kernel_sigma", "process_cov", "resolvents", "sigma2", "tau2",
    "trace_product_delta",
    # montecarlo
    "ExperimentConfig", "ExperimentResult", "compare_theory",
    "independence_check", "normality_diagnostics", "process_cov_empirical",
    "read_samples_csv", "run_experiment", "summarize", "write_samples_csv",
    "write_summary_json",
]
