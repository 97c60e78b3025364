"""Exception hierarchy shared by every module."""


class FlambeLabError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(FlambeLabError, ValueError):
    """An input lies outside the domain an operation is defined on."""


class ModelIntegrityError(FlambeLabError):
    """A transition model produced an invalid density."""


class ConfigurationError(FlambeLabError, ValueError):
    """Inconsistent configuration, e.g. a quadrature grid that does not refine a policy grid."""


class ConstructionError(FlambeLabError):
    """An environment or hypothesis class could not be built as requested."""


class DataModelMismatchError(FlambeLabError):
    """Every hypothesis assigns zero likelihood to some observed transition."""


class IterationBoundError(FlambeLabError):
    """The elliptical planner ran past its potential-based iteration bound."""


class InvariantViolation(FlambeLabError, AssertionError):
    """A checked mathematical invariant failed on concrete inputs."""
