class NclabError(Exception):
    """Base class for every error raised by the lab."""


class ShapeError(NclabError, ValueError):
    pass


class ArgumentError(NclabError, ValueError):
    pass


class DataFormatError(NclabError):
    """A data or log file could not be parsed.

    ``line`` is the 1-based line number for text formats, when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")


class MetricError(NclabError):
    pass


class DivergenceError(NclabError):
    """Raised when a loss or gradient stops being finite."""


class ManifestError(NclabError):
    pass


class CheckpointError(NclabError):
    pass


class EmptySummaryError(NclabError):
    pass
