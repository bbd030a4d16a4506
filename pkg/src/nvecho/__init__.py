"""Hahn-echo decoherence of NV-center ensembles under Ornstein-Uhlenbeck noise."""

__version__ = "0.1.0"
