"""Machine-learned surrogate pipeline for agent-based policy simulations.

Trains a from-scratch bagged decision-tree classifier on a corpus of
simulation runs labeled optimal/non-optimal at pooled indicator
quantiles, samples millions of new configurations from the corpus
moments, and aggregates the emulated outcomes into per-region,
per-policy result tables.
"""

from .analysis import (
    BaselineDeltaTable,
    GroupShareTable,
    ParamScoreTable,
    PolicyRanking,
    ReportTables,
    WelchResult,
    build_report_tables,
    diff_to_baseline,
    emit_report,
    mean_std_bands,
    optimal_share_by_group,
    rank_policies_per_mr,
    standardized_param_score,
    std_delta_table,
    welch_t_test,
)
from .errors import (
    AnalysisError,
    ArtifactFileError,
    ConfigError,
    ForestError,
    IngestError,
    LabelingError,
    PipelineError,
    PolicyForestError,
    SamplerError,
    SchemaError,
)
from .figures import render_figures
from .forest import (
    ClassificationMetrics,
    ConfusionMatrix,
    EvaluationReport,
    Forest,
    ForestHyperparams,
    best_split,
    encode_features,
    evaluate,
    fit_forest,
    gini_impurity,
    load_forest,
    metrics_from_confusion,
    predict,
    save_forest,
)
from .labeling import (
    LabelSpec,
    LabelThresholds,
    LabeledDataset,
    compute_label_thresholds,
    compute_quantile,
    label_dataset,
    split_train_test,
)
from .pipeline import (
    PipelineManifest,
    RunConfig,
    emulate,
    load_labeled_dataset,
    run_all,
    run_stage,
    save_labeled_dataset,
)
from .sampler import (
    EmpiricalMoments,
    fit_moments,
    generate_configs,
    iter_config_batches,
    sample_continuous,
    sample_discrete,
)
from .schema import (
    ContinuousParamSpec,
    DiscreteParamSpec,
    ParameterSchema,
    RunRecord,
    default_schema,
    ingest_runs,
    load_schema,
    parse_schema,
    save_schema,
    serialize_schema,
    validate_record,
)
from .toyabm import ToyWorldSpec, default_world, generate_corpus, simulate_run

__version__ = "0.1.0"
