"""Exception taxonomy.

Input-validation failures subclass ValueError so callers that do not care
about the fine-grained kind can catch the builtin. Failures that occur while
a computation is running subclass RuntimeError. The CLI maps the first group
to exit code 1 and the second to exit code 2.
"""


class ParameterError(ValueError):
    """A scalar argument or config field is out of its documented range."""


class ShapeError(ValueError):
    """An array argument has the wrong shape, dtype, or layout."""


class FormatError(ValueError):
    """A file on disk does not parse as the format it claims to be."""


class TrainingError(RuntimeError):
    """Training diverged or failed to reach its required floor."""


class SamplingError(RuntimeError):
    """A sampling loop produced non-finite values."""


class OptimizationError(RuntimeError):
    """A direct-optimization loop produced non-finite values."""


class NumericError(RuntimeError):
    """A numerical routine left its domain of validity."""
