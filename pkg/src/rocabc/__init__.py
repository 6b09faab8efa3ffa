"""ROC-based approximate Bayesian computation for pattern evidence."""

from .errors import NumericalError, PreconditionError
from .features import (
    Configuration,
    Minutia,
    MinutiaType,
    SummaryVector,
    centroid,
    centroid_angles,
    cross_distances,
    dir_marker_cross_distances,
    direction_markers,
    rigid_transform,
    summarize,
)
from .generative import (
    DistortionParams,
    DistortionPriors,
    Finger,
    Population,
    best_matching_subconfig,
    distort,
    generate_m1,
    generate_m2,
    sample_distortion_params,
    synth_finger,
    synth_population,
)
from .kernel import (
    DEFAULT_WEIGHTS,
    KernelWeights,
    auc,
    delta,
    delta1,
    delta2,
    delta3,
    delta4,
    delta5,
    optimize_weights,
)
from .roc import (
    DualBetaParams,
    RocPoint,
    ScoreSample,
    bounded_bf,
    empirical_bf,
    empirical_cdf,
    empirical_roc,
    fit_mle,
    limit_slope,
    ncbeta_cdf,
    ncbeta_pdf,
    ncbeta_quantile,
    refine_l2,
    roc_model_eval,
)
from .engine import Method, ModelPrior, RunConfig, RunResult, generic_run, run
from .baseline import epanechnikov_weights, fit_weighted_logistic, logistic_bf
from .oracle import (
    run_oracle,
    true_bf_composite_gaussian,
    true_bf_simple_gaussian,
)

__version__ = "0.1.0"
