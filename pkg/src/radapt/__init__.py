"""Source-free domain adaptation for blind quality prediction.

The package models image quality as a distribution over discrete rating
levels. A small convolutional network with domain-separated normalisation
layers is trained on a labelled source domain; unlabelled target domains
are then adapted by re-estimating normalisation statistics and tuning only
the target branch's affine parameters against unsupervised losses.
"""

from radapt.distmath import (
    DEFAULT_SIGMA_FLOOR,
    QualityLabel,
    RatingScale,
    discretize,
    discretize_batch,
    dist_mean,
    dist_var,
    make_levels,
    pseudo_distribution,
    truncated_gaussian_density,
)
from radapt.errors import (
    ConfigError,
    DataError,
    DomainExistsError,
    FitError,
    MissingDomainError,
    OptimStateError,
    RadaptError,
    ShapeError,
    SplitError,
    TraceMismatchError,
    UninitializedStatisticsError,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_SIGMA_FLOOR",
    "QualityLabel",
    "RatingScale",
    "discretize",
    "discretize_batch",
    "dist_mean",
    "dist_var",
    "make_levels",
    "pseudo_distribution",
    "truncated_gaussian_density",
    "RadaptError",
    "ConfigError",
    "DataError",
    "SplitError",
    "FitError",
    "ShapeError",
    "MissingDomainError",
    "DomainExistsError",
    "OptimStateError",
    "TraceMismatchError",
    "UninitializedStatisticsError",
    "__version__",
]
