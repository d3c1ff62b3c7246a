"""Intrinsic dimension from nearest-neighbor distance ratios: TWO-NN, Cride and Gride."""

from .distributions import GrideParams, PosteriorParams
from .errors import (
    DatasetTooSmallError,
    DegenerateDistanceError,
    DegenerateRatioError,
    DomainError,
    EstimationFailedError,
    IdRatioError,
    MomentUndefinedError,
    ParseError,
)
from .estimators import (
    BayesResult,
    GridPosterior,
    IdEstimate,
    cride_bayes,
    cride_mle,
    erlang_diagnostic,
    gride_mle,
    gride_posterior,
    twonn_bayes,
    twonn_ls,
    twonn_mle,
)
from .geometry import (
    ConsecutiveRatios,
    NeighborTable,
    PointCloud,
    RatioSample,
    consecutive_ratios,
    decimate,
    generic_ratios,
    knn_table,
    load_point_cloud,
)
from .scale import SweepTable, gride_sweep, repeated_estimate_summary, twonn_decimation_sweep

__version__ = "0.1.0"
