"""Antimicrobial-peptide classification: sequence encodings, WGAN-GP
class balancing, base classifiers with a stacking ensemble, and MCC scoring
under stratified Monte-Carlo cross-validation."""

__version__ = "0.1.0"
