# utils/errors.py
from typing import Optional


class CardioPrecError(Exception):
    """Base class for every error raised by the cardioprec services"""


class InputValidationError(CardioPrecError, ValueError):
    """Bad user input: the CLI maps this family to exit code 2"""


class VolumeFormatError(InputValidationError):
    def __init__(self, message: str, field: Optional[str] = None, path: Optional[str] = None):
        self.field = field
        self.path = path
        prefix = f"{path}: " if path else ""
        suffix = f" (field '{field}')" if field else ""
        super().__init__(f"{prefix}{message}{suffix}")


class MalformedHeaderError(VolumeFormatError):
    pass


class DimensionMismatchError(VolumeFormatError):
    pass


class InvalidSpacingError(VolumeFormatError):
    pass


class UnsupportedDataTypeError(VolumeFormatError):
    pass


class ManifestError(InputValidationError):
    def __init__(self, message: str, subject_id: Optional[str] = None):
        self.subject_id = subject_id
        if subject_id is not None:
            message = f"subject '{subject_id}': {message}"
        super().__init__(message)


class MissingFileError(InputValidationError):
    pass


class LabelMapError(InputValidationError):
    pass


class InsufficientSamplesError(InputValidationError):
    pass


class DegenerateVolumeError(InputValidationError):
    """Empty blood pool at ED or a similar volume that makes a biomarker undefined"""

    def __init__(self, message: str, context: Optional[dict] = None):
        self.context = dict(context or {})
        if self.context:
            where = ", ".join(f"{k}={v}" for k, v in self.context.items())
            message = f"{message} [{where}]"
        super().__init__(message)

    def with_context(self, **context) -> "DegenerateVolumeError":
        merged = {**context, **self.context}
        base = str(self.args[0]).split(" [", 1)[0]
        return DegenerateVolumeError(base, merged)


class PhantomError(InputValidationError):
    pass


class ReportInputError(InputValidationError):
    pass
