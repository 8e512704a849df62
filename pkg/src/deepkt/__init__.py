"""Knowledge-tracing toolkit: DKVMN, Deep-IRT, and DKT on a small dense-matrix
autodiff engine, with classical baselines (1PL IRT, LFA, PFA, item analysis)
and a reproducible train/evaluate protocol."""

from . import autodiff, baselines, datasets, harness, metrics, models

__all__ = ["autodiff", "baselines", "datasets", "harness", "metrics", "models"]
__version__ = "0.1.0"
