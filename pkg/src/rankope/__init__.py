"""Off-policy estimators for ranking policies with categorical action embeddings."""

__version__ = "0.1.0"
