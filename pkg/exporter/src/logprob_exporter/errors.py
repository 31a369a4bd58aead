class ExportError(Exception):
    """Base class for exporter failures."""


class DatasetRecordError(ExportError):
    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class TokenizerMismatchError(ExportError):
    """Policy and reference checkpoints do not share a tokenizer."""


EXIT_OK = 0
EXIT_INPUT = 3
EXIT_SCORING = 4
