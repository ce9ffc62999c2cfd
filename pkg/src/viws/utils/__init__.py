"""Utility functions and helpers."""

from .cache import SynthesisCache, clean_test_db, close_db, init_db, init_test_db
from .seeding import derive_seed, seed_everything

__all__ = [
    "SynthesisCache",
    "init_db",
    "close_db",
    "init_test_db",
    "clean_test_db",
    "derive_seed",
    "seed_everything",
]
