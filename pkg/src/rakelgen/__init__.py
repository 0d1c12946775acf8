"""Feedback content selection from weekly student data.

The package turns per-student time-series over nine learning factors into
short feedback summaries: multi-label classifiers select which of the
registered feedback templates apply, and a small realizer fills the chosen
templates' slots from the student's numbers.
"""

from .domain import (
    Dataset,
    FactorId,
    LabelVector,
    ReferenceType,
    StudentRecord,
    Template,
    TemplateRegistry,
    default_registry,
    load_dataset,
    load_registry,
    save_dataset,
    save_registry,
)
from .errors import LabelCoverageWarning, ValidationError
from .evaluation import (
    EvalOptions,
    comparison_report,
    compute_metrics,
    cross_validate,
    paired_t_test,
    render_table,
    report_to_json,
)
from .features import extract_features, feature_schema, ols_slope, trend_word
from .mlc import (
    RakelConfig,
    TrainedModel,
    predict,
    predict_record,
    predict_votes,
    train_binary_relevance,
    train_chain,
    train_lp,
    train_majority,
    train_rakel,
)
from .model_io import load_model, save_model
from .nlg import feedback_for_record, render_summary, render_text, select_templates
from .synth import SynthConfig, default_synth_config, generate_dataset, load_synth_config
from .tree import DecisionTree, TreeConfig, predict_tree, train_tree

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DecisionTree",
    "EvalOptions",
    "FactorId",
    "LabelCoverageWarning",
    "LabelVector",
    "RakelConfig",
    "ReferenceType",
    "StudentRecord",
    "SynthConfig",
    "Template",
    "TemplateRegistry",
    "TrainedModel",
    "TreeConfig",
    "ValidationError",
    "comparison_report",
    "compute_metrics",
    "cross_validate",
    "default_registry",
    "default_synth_config",
    "extract_features",
    "feature_schema",
    "feedback_for_record",
    "generate_dataset",
    "load_dataset",
    "load_model",
    "load_registry",
    "load_synth_config",
    "ols_slope",
    "paired_t_test",
    "predict",
    "predict_record",
    "predict_tree",
    "predict_votes",
    "render_summary",
    "render_table",
    "render_text",
    "report_to_json",
    "save_dataset",
    "save_model",
    "save_registry",
    "select_templates",
    "train_binary_relevance",
    "train_chain",
    "train_lp",
    "train_majority",
    "train_rakel",
    "train_tree",
    "trend_word",
    "__version__",
]
