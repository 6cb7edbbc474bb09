"""Belief-base engine with verifiable justifications and an append-only ledger."""

__version__ = "0.1.0"
