"""EEG microstate toolkit: segmentation, features, prompt datasets, and
synthetic-data / prediction scoring."""

__version__ = "0.1.0"

from .errors import DegenerateInputError, MstoolError, SchemaError, ValidationError
from .io import EegRecording, SubjectMeta, load_recording, save_recording
from .preprocess import FilterSpec, bandpass, rereference
from .microstate import (
    GfpSeries,
    MicrostateModel,
    TopographicMap,
    find_gfp_peaks,
    gfp,
    mod_kmeans,
    order_maps,
    spatial_correlation,
)
from .backfit import GevReport, LabelSequence, backfit, gev, smooth_labels
from .features import FeatureTable, StateFeatures, extract_features
from .promptgen import PromptRecord, render_prompt, write_dataset
from .synthquality import (
    QualityReport,
    Table,
    baseline_synthesize,
    composite_score,
    deep_structure_stability,
    field_correlation_stability,
    field_distribution_stability,
    js_distance,
    score_tables,
)
from .evalmetrics import ConfusionCounts, MetricsReport, compare_reports, confusion, metrics

__all__ = [
    "__version__",
    "MstoolError", "ValidationError", "DegenerateInputError", "SchemaError",
    "SubjectMeta", "EegRecording", "load_recording", "save_recording",
    "FilterSpec", "rereference", "bandpass",
    "GfpSeries", "TopographicMap", "MicrostateModel",
    "gfp", "find_gfp_peaks", "spatial_correlation", "mod_kmeans", "order_maps",
    "LabelSequence", "GevReport", "backfit", "smooth_labels", "gev",
    "StateFeatures", "FeatureTable", "extract_features",
    "PromptRecord", "render_prompt", "write_dataset",
    "Table", "QualityReport", "js_distance",
    "field_distribution_stability", "field_correlation_stability",
    "deep_structure_stability", "composite_score", "score_tables",
    "baseline_synthesize",
    "ConfusionCounts", "MetricsReport", "confusion", "metrics", "compare_reports",
]
