"""vidfuse-exporter: frame extraction, CLIP-family embedding, cache export."""

from .backends import ClipBackend, HashBackend, get_backend
from .cachefile import write_cache
from .cli import export_video
from .errors import DecodeError, ExporterError, ModelLoadError
from .video import extract_frames, probe, sample_times

__version__ = "0.1.0"
