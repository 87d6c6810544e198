"""Records, preprocessing, synthetic ECG and the split protocol."""

from .filters import butterworth_filter, preprocess, savgol_detrend
from .io import load_dataset, save_dataset
from .split import split_dataset
from .synth import NoiseConfig, SynthConfig, default_config, make_dataset, synth_ecg
from .types import CNN_TEST, LR_HALF, Dataset, TimeSeriesInstance, fold_tag

__all__ = [
    "CNN_TEST",
    "LR_HALF",
    "Dataset",
    "NoiseConfig",
    "SynthConfig",
    "TimeSeriesInstance",
    "butterworth_filter",
    "default_config",
    "fold_tag",
    "load_dataset",
    "make_dataset",
    "preprocess",
    "save_dataset",
    "savgol_detrend",
    "split_dataset",
    "synth_ecg",
]
