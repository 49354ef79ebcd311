"""Top-level package for ergolab."""

__version__ = "0.1.0"

from . import config, dynamics, ids, multiscale, operators, storage, summarizer, transfer

__all__ = ["__version__", "config", "dynamics", "ids", "multiscale", "operators", "storage", "summarizer", "transfer"]
