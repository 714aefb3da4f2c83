"""Product-form discrete sojourn-time distributions, their estimation and semi-Markov use."""
from .core import (
    MomentReport,
    RhoSequence,
    SojournPmf,
    TailClass,
    Verdict,
    cdf,
    classify_tail,
    geometric_rho,
    mgf_eval,
    moments,
    pgf_eval,
    pmf_from_rho,
    rho_from_pmf,
    shift_pmf,
    survival,
)
from .diagnostics import DiagnosticsBundle, DurationDataset, diagnose, ingest, load_task
from .errors import *  # noqa: F401,F403
from .estimation import (
    FisherInfo,
    FitResult,
    dlogldT_reference,
    fisher_linear,
    fisher_poly,
    loglik_linear,
    loglik_poly,
    mle_grid_T,
    mle_linear,
    mle_poly,
    score_linear,
    score_poly,
)
from .families import (
    Interval,
    LinearParams,
    PolyParams,
    convert_ab,
    linear_bounds,
    linear_rho,
    poly_bounds,
    poly_rho,
    rho_for,
)
from .sampling import SampleBatch, sample_inverse_cdf, sample_sequential
from .smm import (
    SmmSpec,
    StationaryResult,
    build_blocks,
    matrix_polynomial_det,
    q_matrices,
    sojourn_pmf_of_state,
    stationary,
)
from .study import StudyConfig, StudyResult, expected_loglik_curve, l1_pmf_distance, run_study

__version__ = "0.1.0"
