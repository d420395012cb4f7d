"""Engine-wide exception types."""


class SpecverseError(Exception):
    """Base class for all engine errors."""


class SpaceValidationError(SpecverseError):
    """Raised by validate_space with the full list of violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ConfigurationError(SpecverseError):
    """A requested operation is not applicable to the given inputs."""


class SampleSizeError(SpecverseError):
    """Requested sample size exceeds the population."""


class SingularDesignError(SpecverseError):
    """Design matrix is rank deficient."""


class DataDomainError(SpecverseError):
    """Input data violates a domain precondition (e.g. non-integer counts)."""


class MixingError(SpecverseError):
    """MCMC chain rejected every proposal over the stuck-detection window."""


class StoreConflictError(SpecverseError):
    """An outcome file already exists with different content."""


class ConsistencyError(SpecverseError):
    """Cross-referenced artifacts disagree (e.g. outcomes not from this space)."""
