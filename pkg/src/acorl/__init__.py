"""Alliance learning (ACoRL) on a small numpy autodiff engine.

The pieces, bottom up: :mod:`acorl.autodiff` (tape-based reverse mode),
:mod:`acorl.nn` (MLPs and optimizers), :mod:`acorl.losses`,
:mod:`acorl.training` (plain and alliance training), :mod:`acorl.fusion`,
:mod:`acorl.metrics` (accuracy, EER, integrated gradients),
:mod:`acorl.data` (the complementary-cue generator and file formats) and
:mod:`acorl.cli`.
"""

from .errors import AcorlError, ConfigurationError, ContractViolation, DataError, DomainError, IntegrityError, ParseError

__version__ = "0.1.0"

__all__ = [
    "AcorlError",
    "ConfigurationError",
    "ContractViolation",
    "DataError",
    "DomainError",
    "IntegrityError",
    "ParseError",
]
