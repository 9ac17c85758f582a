"""Bayesian Bradley-Terry ratings, posterior predictive probabilities,
season simulation and Bayes-factor model evaluation."""

__version__ = "0.1.0"

from .league_data import (  # noqa: E402
    DataError,
    GameRecord,
    Outcome,
    WinMatrix,
    build_win_matrix,
    check_mle_exists,
    ingest_csv,
)
from .ratings import (  # noqa: E402
    LogStrengths,
    Prior,
    fit_map,
    fit_mle,
    game_prob,
    gauge_fix,
    log_likelihood,
    log_posterior,
    log_prior,
)
from .laplace import (  # noqa: E402
    GaussianApprox,
    WeightedSamples,
    cross_section,
    decompose,
    gaussian_approx,
    hessian,
    importance_weights,
    normalized_distance,
    sample,
)
from .predict import (  # noqa: E402
    OutcomeFunction,
    pairwise_theta_distribution,
    predict_gaussian_mc,
    predict_importance,
    predict_map,
    series_prob,
)
