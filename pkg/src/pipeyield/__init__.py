"""Statistical timing, yield estimation and yield-constrained sizing of pipelines."""

from .gaussian import (
    ClarkPairResult,
    ConsistencyWarning,
    GaussianMoments,
    clark_corr_propagate,
    clark_max_pair,
    max_reduce,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_quantile,
)
from .variation import (
    GateInstance,
    PipelineModel,
    StageModel,
    VariationSpec,
    gate_delay_moments,
    inverter_chain_relation,
    stage_correlation_matrix,
    stage_distribution,
    uniform_pipeline,
)
from .yield_analysis import (
    YieldQuery,
    design_space_region,
    mean_lower_bound,
    pipeline_distribution,
    relaxed_stage_bound,
    stage_mean_upper_bound,
    stringent_stage_bound,
    yield_gaussian,
    yield_independent,
)
from .montecarlo import McConfig, McReport, empirical_max_stats, model_error_report, sample_stage_delays
from .optimizer import (
    SizingSolution,
    balanced_baseline,
    global_optimize,
    size_stage,
    stage_sensitivity,
    unbalance_explore,
)
from .estimators import MonteCarloPipelineEstimator, PipelineDelayEstimator, PipelineSizer
from .io import PipelineFileError, dump_pipeline, dumps_pipeline, load_pipeline, parse_pipeline
from ._validation import DomainError, ModelError

__version__ = "0.1.0"
