"""Composite-index construction with autoencoders and classical aggregators."""

from autosynth.data import (
    DatasetError,
    IndexResult,
    IndicatorDataset,
    IndicatorMeta,
    Method,
    Polarity,
    load_dataset,
    save_dataset,
    validate_weights,
)
from autosynth.normalize import Goalposts, NormalizedMatrix, align_polarity, normalize
from autosynth.baselines import PcaModel, ampi_index, hierarchical_index, mean_index, pca_index
from autosynth.autoencoder import (
    AutoencoderModel,
    AutoSynthError,
    AutoSynthResult,
    TrainConfig,
    autosynth_index,
    forward,
    indicator_relevance,
    loss,
    train,
)
from autosynth.evaluation import StressReport, compare_methods, rank_stress, spearman, stress
from autosynth.simulation import DgpKind, DgpSpec, SimulationReport, generate, run_study

__version__ = "0.1.0"

__all__ = [
    "AutoSynthError",
    "AutoSynthResult",
    "AutoencoderModel",
    "DatasetError",
    "DgpKind",
    "DgpSpec",
    "Goalposts",
    "IndexResult",
    "IndicatorDataset",
    "IndicatorMeta",
    "Method",
    "NormalizedMatrix",
    "PcaModel",
    "Polarity",
    "SimulationReport",
    "StressReport",
    "TrainConfig",
    "align_polarity",
    "ampi_index",
    "autosynth_index",
    "compare_methods",
    "forward",
    "generate",
    "hierarchical_index",
    "indicator_relevance",
    "load_dataset",
    "loss",
    "mean_index",
    "normalize",
    "pca_index",
    "rank_stress",
    "run_study",
    "save_dataset",
    "spearman",
    "stress",
    "train",
    "validate_weights",
]
