class ExporterError(Exception):
    """Base class for exporter errors."""


class DecodeError(ExporterError):
    """Video file unreadable or yields no frames."""


class ModelLoadError(ExporterError):
    """Embedding model could not be loaded."""
