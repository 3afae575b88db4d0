"""Verifiable, privacy-preserving federated matrix factorization."""

__version__ = "0.1.0"
