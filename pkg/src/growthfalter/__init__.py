"""Growth-velocity estimation and faltering classification.

Estimates per-child growth velocity from longitudinal z-scores via linear
and piecewise-linear mixed models, classifies children into faltering and
non-faltering groups with a two-component Gaussian mixture or a quantile
threshold, and ships a reproducible simulation benchmark comparing the
metric/classifier combinations.
"""

from .classify import (
    AgreementStats,
    Classification,
    MixtureFit,
    agreement,
    fit_gmm2,
    mm_classify,
    threshold_classify,
)
from .data import (
    AnalysisWindow,
    ChildSeries,
    GrowthDataset,
    IngestReport,
    Measurement,
    baseline,
    followup,
    ingest,
)
from .kernels import BACKEND
from .lmm import MixedModelFit, ModelSpec, VarianceParams, fit, predict, reml_deviance
from .metrics import (
    METRICS,
    MetricConfig,
    SegmentSlopes,
    VelocityEngine,
    VelocityTable,
    ars,
    compute,
    crs,
    csds,
    mrs,
    rs,
    sds,
    segment_slopes,
)
from .simulate import (
    ReplicationResult,
    ScenarioConfig,
    ScenarioReport,
    TrueLabels,
    aggregate,
    generate_population,
    run_replication,
    run_scenario,
)
from .splines import KnotVector, basis_row, default_knots, design_matrix

__version__ = "0.1.0"

__all__ = [
    "AgreementStats",
    "AnalysisWindow",
    "BACKEND",
    "ChildSeries",
    "Classification",
    "GrowthDataset",
    "IngestReport",
    "KnotVector",
    "METRICS",
    "Measurement",
    "MetricConfig",
    "MixedModelFit",
    "MixtureFit",
    "ModelSpec",
    "ReplicationResult",
    "ScenarioConfig",
    "ScenarioReport",
    "SegmentSlopes",
    "TrueLabels",
    "VarianceParams",
    "VelocityEngine",
    "VelocityTable",
    "aggregate",
    "agreement",
    "ars",
    "baseline",
    "basis_row",
    "compute",
    "crs",
    "csds",
    "default_knots",
    "design_matrix",
    "fit",
    "fit_gmm2",
    "followup",
    "generate_population",
    "ingest",
    "mm_classify",
    "mrs",
    "predict",
    "reml_deviance",
    "rs",
    "run_replication",
    "run_scenario",
    "sds",
    "segment_slopes",
    "threshold_classify",
    "__version__",
]
