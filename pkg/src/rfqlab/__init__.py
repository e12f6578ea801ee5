"""rfqlab: synthetic RFQ market simulation, explainable fill-probability
models, and utility-maximizing quote selection for market makers."""

from .market_sim import (
    RfqRecord,
    SimConfig,
    StatusCoeffs,
    gen_competitor_quotes,
    gen_price_paths,
    gen_quote_price,
    gen_rfq_dataset,
    gen_ring_dataset,
    gen_status,
)
from .features import (
    FeatureTable,
    FillRateCurve,
    StandardizationStats,
    compute_features,
    fill_rate_curve,
    standardize,
)
from .bnt import BntHyperparams, BntModel, fit as fit_bnt
from .linear_models import (
    LassoLogisticModel,
    NextMidModel,
    fit_lasso_logistic,
    fit_next_mid,
    predict_logistic,
    qq_data,
)
from .ensemble import EnsembleModel, majority_vote, soft_vote
from .pricing import (
    AuctionOutcome,
    ExceedCurve,
    QuoteDecision,
    auction_utility,
    exceed_curve,
    expected_payoff,
    optimal_quote,
)
from .evaluation import (
    EvalReport,
    FoldSpec,
    classification_report,
    grid_search_cv,
    time_series_folds,
)

__version__ = "0.1.0"
