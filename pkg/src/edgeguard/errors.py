"""Exception hierarchy shared across the package."""


class EdgeGuardError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(EdgeGuardError):
    pass


class ParseError(EdgeGuardError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(EdgeGuardError, ValueError):
    pass


class DimensionError(EdgeGuardError, ValueError):
    pass


class ParameterError(EdgeGuardError, ValueError):
    pass


class LabelError(EdgeGuardError, ValueError):
    pass


class DegenerateInputError(EdgeGuardError, ValueError):
    pass


class TrainingDivergedError(EdgeGuardError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")


class PipelineConsistencyError(EdgeGuardError):
    pass


class ManifestError(EdgeGuardError):
    pass


class ValidityError(EdgeGuardError, ValueError):
    pass


class NonUniqueEquilibriumError(EdgeGuardError):
    pass


class SampleSizeError(EdgeGuardError, ValueError):
    pass


class ModelFormatError(EdgeGuardError):
    pass
