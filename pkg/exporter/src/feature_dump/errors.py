class ExportError(Exception):
    """Base error for the export pipeline."""


class UnknownModelError(ExportError):
    """Requested architecture is not in the registry."""
