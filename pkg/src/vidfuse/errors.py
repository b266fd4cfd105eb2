"""Exception types shared across the package.

Grouped here so modules can raise each other's error types without
circular imports.
"""


class VidfuseError(Exception):
    """Base class for all package errors."""


# --- vector math ---

class ZeroVector(VidfuseError):
    """Vector has (near-)zero norm where a direction is required."""


class DimensionMismatch(VidfuseError):
    """Two vectors or a vector and a track disagree on dimensionality."""


class NonFiniteValues(VidfuseError):
    """Embedding contains NaN or Inf."""


# --- ensemble ---

class MissingEmbedding(VidfuseError):
    """Summary has no embedding attached but one is required."""


class TooFewSummaries(VidfuseError):
    """Outlier filtering needs at least 3 summaries."""


class UnknownTemplate(VidfuseError):
    """No prompt template registered under the requested id."""


class TemplateTooSmall(VidfuseError):
    """Template has fewer summary slots than summaries to render."""


class EmptyResponse(VidfuseError):
    """LLM returned empty or whitespace-only text."""


# --- retrieval ---

class EmptyTrack(VidfuseError):
    """Frame embedding track contains no frames."""


class NonPositiveDuration(VidfuseError):
    """Duration or interval must be > 0."""


class KOutOfRange(VidfuseError):
    """Requested k outside [1, n_frames]."""


class IndexOutOfRange(VidfuseError):
    """Frame index not valid for the track."""


class EmptySpanSet(VidfuseError):
    """Operation needs at least one span."""


# --- metrics ---

class NoResults(VidfuseError):
    """Metric aggregation called with no evaluable query results."""


class UnknownFormat(VidfuseError):
    """Unrecognized report format name."""


# --- providers ---

class ProviderUnavailable(VidfuseError):
    """Service unreachable or kept failing after the retry policy."""


# The ensemble layer surfaces fusion-LLM outages under this name.
LlmUnavailable = ProviderUnavailable


class MalformedResponse(VidfuseError):
    """Provider responded but the payload violates the wire contract."""


class AuthMissing(VidfuseError):
    """Configured API-key environment variable is not set."""


class UnparseableVerdict(VidfuseError):
    """Judge response did not yield a valid seven-dimension score map."""


# --- embedding cache ---

class CacheError(VidfuseError):
    """Base for cache file problems."""


class SchemaMismatch(CacheError):
    """File is not a cache file or carries an unsupported schema version."""


class CorruptFile(CacheError):
    """Cache file truncated, checksum-invalid, or internally inconsistent."""


# --- datasets ---

class UnknownAdapter(VidfuseError):
    """No annotation adapter registered under that name."""


class TooManyMalformed(VidfuseError):
    """Malformed line fraction exceeded the configured cap."""


class DuplicateExpert(VidfuseError):
    """Same expert_id appears twice for one video."""


class NoUsableEntries(VidfuseError):
    """Expert summary source yielded nothing usable."""


# --- cli / config ---

class ConfigError(VidfuseError):
    """Pipeline configuration invalid or incomplete."""


class UnmatchedQueries(VidfuseError):
    """Predictions reference query ids missing from the annotations."""
