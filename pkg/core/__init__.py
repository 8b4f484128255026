# Core module
from .types import (
    DartError,
    ConfigError,
    SolverError,
    DataError,
    SingularCovarianceError,
    EnumerationLimitError,
    ArtifactExistsError,
)
