"""Irregularly sampled time series on frozen sequence encoders."""
from .data_model import ISTSSample, Observation, ValidationError
from .dataset_io import DatasetManifest, SyntheticSpec, generate_synthetic, load_dataset, save_dataset
from .pipelines import ISTSModel, PipelineConfig

__version__ = "0.1.0"

__all__ = [
    "DatasetManifest", "ISTSModel", "ISTSSample", "Observation", "PipelineConfig",
    "SyntheticSpec", "ValidationError", "generate_synthetic", "load_dataset", "save_dataset",
]
