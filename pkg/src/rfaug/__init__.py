"""Training-data pipeline for automatic modulation classification.

Synthesis, capture-surrogate generation, and augmentation of IQ datasets
under a (SNR, frequency offset, sample-rate mismatch) impairment model, a
numpy CLDNN with its training routine, and quantity/quality trend analysis.
"""

__version__ = "0.1.0"
