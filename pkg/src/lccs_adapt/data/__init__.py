"""Synthetic domains, support sampling, evaluation streams and dataset storage."""

from .datasets import LabeledDataset, SupportSet
from .sampling import StreamBatch, make_longtail, make_stream, sample_support
from .storage import load_dataset, save_dataset
from .synthetic import domain_pair, gen_dataset

__all__ = [
    "LabeledDataset",
    "StreamBatch",
    "SupportSet",
    "domain_pair",
    "gen_dataset",
    "load_dataset",
    "make_longtail",
    "make_stream",
    "sample_support",
    "save_dataset",
]
