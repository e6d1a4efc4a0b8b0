"""Corpus abnormality scoring and pruning.

Featurizes every context of a question-answering corpus as positional
n-gram densities, scores each example's squared Mahalanobis distance from
the corpus feature distribution, selects reduced training sets from the
low tail, high tail, and mean-proximal region of the score distribution,
and emits distribution reports (histogram, kurtosis, length-score
correlation).
"""

from .analyze import DistributionStats, Histogram, emit_report, histogram, moments_stats, pearson
from .corpus import (
    Corpus,
    Example,
    JsonlFields,
    ingest_file,
    ingest_jsonl,
    ingest_squad,
    make_synthetic_corpus,
    write_subset,
)
from .errors import (
    AbnormalityError,
    CapacityError,
    FitError,
    ParseError,
    SchemaError,
    SingularityError,
    StaleScoresError,
    StatError,
)
from .featurize import (
    DensityTable,
    FeatureMatrix,
    TokenizerConfig,
    build_matrix,
    featurize_example,
    fit_density,
    ngrams,
    tokenize,
)
from .mahalanobis import (
    EpsilonPolicy,
    MomentModel,
    ScoreVector,
    fit_moments,
    regularized_factorize,
    score,
    score_all,
)
from .sampler import Selection, SelectionSpec, label_all, select_bucketed, select_global

__version__ = "0.1.0"

__all__ = [
    "AbnormalityError",
    "CapacityError",
    "Corpus",
    "DensityTable",
    "DistributionStats",
    "EpsilonPolicy",
    "Example",
    "FeatureMatrix",
    "FitError",
    "Histogram",
    "JsonlFields",
    "MomentModel",
    "ParseError",
    "SchemaError",
    "ScoreVector",
    "Selection",
    "SelectionSpec",
    "SingularityError",
    "StaleScoresError",
    "StatError",
    "TokenizerConfig",
    "build_matrix",
    "emit_report",
    "featurize_example",
    "fit_density",
    "fit_moments",
    "histogram",
    "ingest_file",
    "ingest_jsonl",
    "ingest_squad",
    "label_all",
    "make_synthetic_corpus",
    "moments_stats",
    "ngrams",
    "pearson",
    "regularized_factorize",
    "score",
    "score_all",
    "select_bucketed",
    "select_global",
    "tokenize",
    "write_subset",
]
