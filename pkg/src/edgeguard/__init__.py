"""Hybrid autoencoder + isolation-forest intrusion detection for edge IoT traffic."""

from .errors import EdgeGuardError
from .features import FEATURES, FlowRecord, parse_flow_csv, read_flow_csv, records_to_matrix
from .pipeline import Detection, Pipeline, PipelineConfig, calibrate, fit_pipeline, load_pipeline, train_pipeline
from .preprocess import NormalizationMode

__all__ = [
    "EdgeGuardError", "FEATURES", "FlowRecord", "parse_flow_csv", "read_flow_csv", "records_to_matrix",
    "Detection", "Pipeline", "PipelineConfig", "calibrate", "fit_pipeline", "load_pipeline", "train_pipeline",
    "NormalizationMode",
]
__version__ = "0.1.0"
