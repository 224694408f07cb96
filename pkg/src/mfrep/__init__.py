"""Finite-dimensional almost representations of finitely presented groups.

Builds the doubling-permutation chain representations and the block-shift
assembly for the Baumslag group, and certifies relator defects and word
separations in operator norm.
"""

from .matkernel import (
    BlockMatrix,
    BlockUnitary,
    CircleSpectrum,
    UnitaryMatrix,
    circular_matching_distance,
    conjugator_from_eigendata,
    op_norm,
    spectral_diameter,
)
from .words import GeneratorAssignment, Presentation, Word, chain_presentation, evaluate, parse_word

__version__ = "0.1.0"

__all__ = [
    "BlockMatrix",
    "BlockUnitary",
    "CircleSpectrum",
    "GeneratorAssignment",
    "Presentation",
    "UnitaryMatrix",
    "Word",
    "chain_presentation",
    "circular_matching_distance",
    "conjugator_from_eigendata",
    "evaluate",
    "op_norm",
    "parse_word",
    "spectral_diameter",
]
