"""Fingerprinting classifier over flush-delay spectrogram datasets."""

from .dataset import DatasetError, LoadedDataset, load_dataset, load_manifest
from .metrics import confusion_matrix, macro_scores
from .model import SmallCnn, make_model
from .train import CvReport, InsufficientSamplesError, stratified_folds, train_and_eval

__version__ = "0.1.0"
