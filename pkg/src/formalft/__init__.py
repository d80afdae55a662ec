"""Exact engine for formal meromorphic connections over Laurent-series
fields: slopes and irregularity, good lattice pairs, the three local
Fourier transforms, and the rigidity index of global modules on P^1.
"""

from .coeff import CoeffField, FieldElement, Precision, RamifiedSeries, RATIONALS, series

__all__ = [
    "CoeffField",
    "FieldElement",
    "Precision",
    "RamifiedSeries",
    "RATIONALS",
    "series",
]

__version__ = "0.1.0"
