"""Finsler metric changes L -> f(e^sigma L, beta), computed two ways.

Truncated Taylor jets (:mod:`finslerlab.jets`) give exact derivatives of any
fundamental function, so every transformed tensor can be computed directly
from the new metric and compared with its closed-form transformation law.
"""

from . import catalog, change, classify, expr, finsler, jets, projective, sampling, tensor
from .change import ChangeSpec, transformed_metric
from .errors import FinslerLabError
from .finsler import MetricSpec, euclidean, fundamental, quartic_minkowski, riemannian_diag

__version__ = "0.1.0"

__all__ = [
    "ChangeSpec",
    "FinslerLabError",
    "MetricSpec",
    "catalog",
    "change",
    "classify",
    "euclidean",
    "expr",
    "finsler",
    "fundamental",
    "jets",
    "projective",
    "quartic_minkowski",
    "riemannian_diag",
    "sampling",
    "tensor",
    "transformed_metric",
]
