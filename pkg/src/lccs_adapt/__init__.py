"""
LCCS Adapt

Few-shot adaptation of batch-normalized networks by re-estimating their
normalization statistics as linear combinations of source and support
statistics, with the baselines and evaluation harness to compare it.
"""

__version__ = "1.0.0"
