"""Exception taxonomy shared across the package.

The command line maps these onto exit codes, so library code should raise
the most specific class that applies rather than bare ValueError whenever
the failure is about configuration, data, or numerical fitting.
"""

from __future__ import annotations


class RadaptError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(RadaptError):
    """Invalid or inconsistent run configuration."""


class DataError(RadaptError):
    """Dataset, manifest, or checkpoint content is unusable."""


class SplitError(DataError):
    """A train/val/test split cannot be formed as requested."""


class FitError(RadaptError):
    """A numerical fit or statistic is undefined for the given input."""


class ShapeError(RadaptError):
    """Tensor shape is incompatible with the requested operation."""


class MissingDomainError(RadaptError):
    """A named domain branch does not exist on the model."""


class DomainExistsError(RadaptError):
    """Attempt to register a domain branch that is already present."""


class UninitializedStatisticsError(RadaptError):
    """Eval-mode normalisation requested before any statistics update."""


class TraceMismatchError(RadaptError):
    """Backward pass called with a trace that no longer matches the model."""


class OptimStateError(RadaptError):
    """Optimizer state does not cover the requested parameter set."""
