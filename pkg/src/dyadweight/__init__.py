"""Weighted dyadic analysis near the constant weight.

Haar transforms, the weighted Martingale transform, Carleson embeddings,
discrete Poisson/heat extensions and Hilbert transforms, and a depth-limited
Bellman function, with sweeps that measure how operator norms grow with the
A_2 characteristic.
"""

from .lattice import DyadicInterval, LatticeConfig
from .weights import Characteristic, Weight, a2d_characteristic, heat_characteristic, make_family, poisson_characteristic
from .haar import analyze, disbalanced_table, synthesize
from .martingale import SigmaPattern, four_sum_decomposition, weighted_norm, worst_sigma

__version__ = "0.1.0"

__all__ = [
    "Characteristic",
    "DyadicInterval",
    "LatticeConfig",
    "SigmaPattern",
    "Weight",
    "a2d_characteristic",
    "analyze",
    "disbalanced_table",
    "four_sum_decomposition",
    "heat_characteristic",
    "make_family",
    "poisson_characteristic",
    "synthesize",
    "weighted_norm",
    "worst_sigma",
]
