"""Feature selection for pairwise learning to rank with sparse squared-hinge SVMs."""

__version__ = "0.1.0"

from .data import (
    Dataset,
    FoldSpec,
    LetorFormatError,
    PreferencePairs,
    Sample,
    build_preference_pairs,
    discover_folds,
    normalize_query_minmax,
    pair_difference,
    parse_letor_file,
    write_letor_file,
    xtilde_apply,
    xtilde_apply_transpose,
)
from .penalties import PenaltySpec, penalty_value, prox_weighted_l1, reweight
from .solver import (
    FitResult,
    SolverConfig,
    SolverError,
    fista_solve,
    fit,
    lipschitz_constant,
    load_model,
    objective,
    predict_scores,
    reweighted_solve,
    save_model,
    squared_hinge_gradient,
    squared_hinge_loss,
)
from .metrics import (
    EvalReport,
    average_precision,
    evaluate,
    mean_average_precision,
    ndcg_at_k,
    paired_one_sided_t_test,
    precision_at_k,
    sparsity_ratio,
)
from .experiment import ExperimentConfig, ExperimentSummary, compare_methods, run_experiment, run_fold
