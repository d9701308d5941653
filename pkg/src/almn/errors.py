"""Exception hierarchy shared across the toolkit."""


class AlmnError(Exception):
    """Base class for all toolkit errors."""


class DegenerateVector(AlmnError):
    """A vector with norm below the numerical guard where a direction is required."""


class DegenerateGeometry(AlmnError):
    """Sample coincides with its class center; the offset direction is undefined."""


class EmptyNegativeSet(AlmnError):
    """Nearest-negative search received no candidates."""


class NonFiniteResult(AlmnError):
    """An intermediate overflowed or produced NaN."""


class DimensionMismatch(AlmnError):
    """Vector dimensions do not agree."""


class UninitializedCenter(AlmnError):
    """A class center was requested before it was initialized."""


class BatchLayoutError(AlmnError):
    """Batch does not follow the classes-by-samples layout."""


class OddGroupSize(AlmnError):
    """Pairwise anchor/positive pairing needs an even number of samples per class."""


class SingleClassBatch(AlmnError):
    """Loss evaluation needs at least one negative class in the batch."""


class NonFiniteGradient(AlmnError):
    """A gradient component is NaN or infinite."""


class InsufficientClasses(AlmnError):
    """Dataset has fewer classes than the batch asks for."""


class InsufficientSamplesInClass(AlmnError):
    """A selected class has fewer items than the per-class batch size."""


class MalformedFile(AlmnError):
    """Unparseable dataset file; message carries the line or byte offset."""


class LabelFeatureCountMismatch(AlmnError):
    """Label and feature record counts disagree."""


class KTooLarge(AlmnError):
    """Retrieval K is not smaller than the number of items."""


class TooFewItems(AlmnError):
    """Clustering needs at least as many items as clusters."""


class DivergenceDetected(AlmnError):
    """Training loss became non-finite."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite loss at iteration {iteration}")


class ConfigError(AlmnError):
    """Run configuration file is invalid (unknown key, bad value, missing section)."""
