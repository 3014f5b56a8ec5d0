"""Exception hierarchy for graphseg.

All exceptions raised by this library are subclasses of ``GraphSegError``
so callers can catch the entire family with a single ``except`` clause when
need be.

Hierarchy::

    GraphSegError
    ├── DimensionError       – shape, channel or pyramid-level mismatch
    ├── SizeError            – image, window or pyramid level too small
    ├── ContractError        – violated pre/post-condition (missing grad, ...)
    ├── SynthesisError       – pattern placement failed after bounded retries
    ├── ConfigError          – invalid configuration; message names the field
    ├── StorageError         – checkpoint, dataset or report I/O failure
    └── NumericalCheckError  – analytic and numerical gradients disagree
"""


class GraphSegError(Exception):
    """Base exception for all graphseg errors."""


class DimensionError(GraphSegError, ValueError):
    """Raised when tensor shapes, channel counts or pyramid levels disagree."""


class SizeError(GraphSegError, ValueError):
    """Raised when an image, window or pyramid level is below the minimum size."""


class ContractError(GraphSegError, RuntimeError):
    """Raised when a caller breaks an operation's contract.

    Examples: ``adam_step`` receiving a parameter without a gradient, or a
    frozen cascade level accumulating a non-zero gradient during stage
    training.
    """


class SynthesisError(GraphSegError):
    """Raised when a sample cannot be synthesized within the retry budget."""


class ConfigError(GraphSegError, ValueError):
    """Raised when a configuration file or object is invalid.

    The message always starts with the dotted path of the offending field so
    operators can fix the file without reading a traceback.
    """


class StorageError(GraphSegError):
    """Raised when reading or writing a checkpoint, dataset or report fails.

    Wraps ``sqlite3.Error``, ``OSError`` and JSON decoding errors so callers
    receive a single typed exception regardless of the underlying failure.
    """


class NumericalCheckError(GraphSegError):
    """Raised when a finite-difference gradient check exceeds its tolerance."""
