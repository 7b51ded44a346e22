"""Exception hierarchy shared by every subpackage."""


class SpgcError(Exception):
    """Base class for all errors raised by :mod:`spgc`."""


class MalformedGraphError(SpgcError, ValueError):
    """A graph violates the representation invariants (self-loops, asymmetry, ...)."""


class SchemaError(SpgcError, ValueError):
    """A graph or evidence does not fit the dataset schema bounds."""


class ConfigurationError(SpgcError, ValueError):
    """Invalid structural or optimizer hyperparameters."""


class ZeroLikelihoodError(SpgcError, ArithmeticError):
    """The requested evidence has probability zero under the model."""


class ZeroMassError(ZeroLikelihoodError):
    """A restricted categorical has no probability mass left."""


class UnsatisfiableError(SpgcError, ValueError):
    """A sampled cardinality cannot be realised by a simple graph."""


class NumericalError(SpgcError, ArithmeticError):
    """Training produced a non-finite loss or gradient."""


class ParseError(SpgcError, ValueError):
    """SMILES parse failure annotated with the offending position."""

    def __init__(self, message, position, text=None):
        self.message = message
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")
