class CtxRecError(Exception):
    """Base class for all toolkit errors."""


class InputError(CtxRecError):
    """Bad user input; the CLI maps these to exit code 2."""


class IngestError(InputError):
    pass


class RegistryError(InputError):
    pass


class EncodingError(InputError):
    pass


class ThresholdError(CtxRecError):
    pass


class SplitError(CtxRecError):
    pass


class EvaluationError(CtxRecError):
    pass


class ResourceLimitError(CtxRecError):
    """A configured resource cap was hit (CLI exit code 3)."""


class ItemsetLimitError(ResourceLimitError):
    pass
