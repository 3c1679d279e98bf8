"""Data-free extraction of sequential recommenders and transfer attacks."""

__version__ = "0.1.0"
