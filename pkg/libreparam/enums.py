"""
This module contains all enums which are used in the library.
"""

from enum import Enum


class Families(Enum):
    """
    An enumeration which defines the variational families a latent block may be bound to.
    """

    GAMMA = "gamma"
    """
    Gamma distribution with shape and rate. Support is the positive reals.
    """
    BETA = "beta"
    """
    Beta distribution with two shape parameters. Support is the open unit interval.
    """
    LOGNORMAL = "lognormal"
    """
    Log-normal distribution with location and scale. Support is the positive reals.
    """
    DIRICHLET = "dirichlet"
    """
    Dirichlet distribution over the last axis of a block.
    """


class Supports(Enum):
    """
    An enumeration which defines the supports a latent block can live on.
    """

    POSITIVE = "positive"
    UNIT_INTERVAL = "unit-interval"
    SIMPLEX = "simplex"


class TransformKinds(Enum):
    """
    An enumeration which defines the standardization transformations. The values are the strings accepted in a run
    configuration.
    """

    GAMMA_STD = "gamma-std"
    """
    Standardizes ``log(z)`` of a gamma variable to zero mean and unit variance.
    """
    LOGNORMAL_STD = "lognormal-std"
    """
    Standardizes ``log(z)`` of a log-normal variable. The transformed variable is standard normal.
    """
    BETA_LOGIT_STDDEV = "beta-logit-stddev"
    """
    Standardizes ``logit(z)`` of a beta variable by its mean and standard deviation.
    """
    BETA_LOGIT_ADAPTIVE = "beta-logit-adaptive"
    """
    Standardizes ``logit(z)`` of a beta variable and picks the scale derivatives so that the correction term vanishes
    for the drawn sample. This introduces some bias.
    """
    DIRICHLET_FULLCOV = "dirichlet-fullcov"
    """
    Whitens ``log(z)`` of a Dirichlet variable with the full covariance matrix.
    """
    IDENTITY = "identity"
    """
    ``z = eps``. Valid for every family and recovers the score function gradient.
    """


class EstimatorKinds(Enum):
    """
    An enumeration which defines the Monte Carlo gradient estimators.
    """

    GREP = "grep"
    SCORE_FUNCTION = "score"
    SCORE_FUNCTION_CV = "score-cv"


class ModelKinds(Enum):
    """
    An enumeration which defines the probabilistic models the library ships.
    """

    GAMMA_POISSON_TOY = "gamma-poisson-toy"
    BETA_BERNOULLI_TOY = "beta-bernoulli-toy"
    SPARSE_GAMMA_DEF = "sparse-gamma-def"
    BETA_GAMMA_MF = "beta-gamma-mf"


class DataTypes(Enum):
    """
    An enumeration which defines the value types a dataset may hold.
    """

    COUNT = "count"
    BINARY = "binary"
    REAL = "real"


class DataFormats(Enum):
    """
    An enumeration which defines the on-disk dataset formats.
    """

    DENSE = "dense"
    """
    Comma separated values without a header. One row per observation.
    """
    TRIPLETS = "triplets"
    """
    Comma separated ``row,col,value`` triplets with a header and a sidecar JSON file holding the shape.
    """


class ImportTypes(Enum):
    """
    An enumeration which defines the possible sources for importing a run configuration.
    """

    FILE = 0
    """
    This value shall be given when the configuration shall be imported from a file on a file system which is locally
    accessible.
    """
    STRING = 1
    """
    This value shall be given when the configuration shall be imported from a string.
    """


class ExportTypes(Enum):
    """
    An enumeration which defines the possible export targets for a run configuration.
    """

    FILE = 0
    """
    This value shall be given when the configuration shall be exported to a file.
    """
    STRING = 1
    """
    This value shall be given when the configuration shall be exported to a string which is handed back to the caller.
    """
