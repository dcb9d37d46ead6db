"""Multivariate log-gamma distributions and a conjugate Gibbs sampler for
Poisson spatio-temporal count models."""
from __future__ import annotations

__version__ = "0.1.0"

from .gibbs_engine import (
    ChainResult,
    PosteriorSummary,
    SamplerConfig,
    batch_means_mcse,
    gelman_rubin,
    run_chain,
    run_chains,
    summarize,
)
from .mi_structures import AdjacencyStructure, k_star, mi_basis, mi_operator, mi_propagator
from .mlg_conditional import (
    CMLGParams,
    conditional_params,
    poisson_conjugate_params,
    project_mmlg,
    sample_mmlg,
    update_mmlg,
)
from .mlg_core import (
    ALPHA_STAR,
    KAPPA_STAR,
    LGParams,
    MLGParams,
    make_nmlg,
    make_smlg,
    mlg_logpdf,
    mlg_mean_cov,
    mlg_sample,
    sample_lg,
    solve_alpha_star,
    trigamma,
)
from .pmstm import (
    ChainState,
    CountDataset,
    ModelSpec,
    build_model_spec,
    compute_dic,
    fc_beta,
    fc_eta,
    fc_sigma_K,
    fc_sigma_xi,
    fc_xi,
    log_likelihood,
)
from .simulation import (
    average_absolute_error,
    run_study,
    sign_test,
    simulate_from_model,
    simulate_pseudo_data,
    synthetic_truth,
)
