"""Phase-space densities of a signal against a probe state, and their
measurement with a symmetric three-port (triple coupler) homodyne detector.

Modules: :mod:`~triport.fock` (truncated single-mode states and operators),
:mod:`~triport.phasespace` (s-ordered quasi-probabilities and the
signal-probe kernel), :mod:`~triport.tritter` (the coupler and its action on
three-mode states), :mod:`~triport.detection` (photocount statistics,
sampling and comparison) and :mod:`~triport.cli`.
"""

from .errors import AccuracyError, AccuracyWarning, ConstructionError, InvalidArgument, UnsupportedParameter

__version__ = "0.1.0"

__all__ = [
    "AccuracyError",
    "AccuracyWarning",
    "ConstructionError",
    "InvalidArgument",
    "UnsupportedParameter",
]
