"""Benchmark metrics, statistical tests, and drug-likeness aggregation."""

from gatewright.benchstat.metrics import (
    BenchmarkItem,
    DockingTruth,
    KindMismatch,
    LengthMismatch,
    MetricReport,
    OptimizationTruth,
    PointsOutOfRange,
    WeightSumInvalid,
    evaluate_benchmark,
    load_predictions_csv,
    load_truth_csv,
    rubric_score,
)
from gatewright.benchstat.qed import (
    NonpositiveComponent,
    QedWeights,
    UnknownLabel,
    default_weights,
    qed_ceiling,
    qed_score,
)
from gatewright.benchstat.stats import (
    EmptySample,
    InvalidCounts,
    MissingCell,
    OutOfRange,
    StatResult,
    TooFewMethods,
    adjust_pvalues,
    chi2_sf,
    cohens_h,
    fisher_exact,
    friedman,
    mann_whitney,
    normal_quantile,
    wilson_ci,
)

__all__ = [
    "BenchmarkItem", "DockingTruth", "KindMismatch", "LengthMismatch",
    "MetricReport", "OptimizationTruth", "PointsOutOfRange", "WeightSumInvalid",
    "evaluate_benchmark", "load_predictions_csv", "load_truth_csv", "rubric_score",
    "NonpositiveComponent", "QedWeights", "UnknownLabel", "default_weights",
    "qed_ceiling", "qed_score",
    "EmptySample", "InvalidCounts", "MissingCell", "OutOfRange", "StatResult",
    "TooFewMethods", "adjust_pvalues", "chi2_sf", "cohens_h", "fisher_exact",
    "friedman", "mann_whitney", "normal_quantile", "wilson_ci",
]
