"""Reduced-rank activity-index source localization.

A library and benchmark for minimum-variance source localization with
rank-constrained activity indices: core S/G/T quadratic forms, LCMV and
reduced-rank spatial filters, six index families, a greedy sequential
localizer with data-driven rank selection, and a reproducible Monte-Carlo
harness comparing the families across SNR levels.
"""

from .matcore import (
    ContractViolation,
    SpectralProjector,
    SymEig,
    eigvals_product,
    loewner_geq,
    psd_inv,
    psd_inv_sqrt,
    psd_sqrt,
    sym_eig,
    top_r_projector,
)
from .forward import (
    CovariancePair,
    LeadfieldSet,
    SourceModel,
    assemble_covariances,
    closest_cluster,
    closest_triplet,
    correlated_source_cov,
    generate_leadfields,
    load_leadfields,
    random_noise_cov,
    random_source_model,
    save_leadfields,
    select_leadfield,
    sphere_dipole_leadfields,
    whitened_leadfield,
)
from .signals import (
    MvarModel,
    Recording,
    companion_radius,
    estimate_cov,
    load_recording,
    random_stable_mvar,
    regularize_pd,
    sample_mvar,
    save_recording,
    simulate_recording,
)
from .filters import CoreMatrices, SpatialFilter, core_matrices, lcmv, lcmv_noise, mvpure
from .indices import (
    IndexFamily,
    IndexSpec,
    IndexValue,
    clamp_rank,
    iterative_index,
    mai,
    mai_ext,
    mai_rr,
    mpz,
    mpz_ext,
    mpz_rr,
    nai_single,
    pseudo_z_single,
)
from .localizer import (
    LocalizationConfig,
    LocalizationResult,
    ScanContext,
    SourceCountEstimate,
    chebyshev_error,
    estimate_source_count,
    localize,
    rank_from_eigenmass,
    select_rank,
)
from .stats import RankSumResult, rank_sum_test
from .harness import (
    ExperimentConfig,
    RunRecord,
    aggregate_errors,
    build_leadfields,
    pairwise_pvalues,
    pooled_errors,
    rank_histogram,
    run_experiment,
    run_single,
    write_all_csv,
    write_errors_csv,
    write_pvalues_csv,
    write_ranks_csv,
)
from .config import ConfigError, default_config_text, load_config, parse_config
from .report import render_report
from .selftest import run_selftest

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
