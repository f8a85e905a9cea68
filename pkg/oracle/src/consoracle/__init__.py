"""CAS cross-validation harness for conservation-law result bundles."""

from .checks import Report, run_all
from .mutations import mutate

__all__ = ["Report", "run_all", "mutate"]
