"""Exception types shared across the package.

Every error raised by mapsearch derives from MapSearchError so callers can
catch the whole family with one except clause. Subclasses also inherit the
closest stdlib exception where one exists (ValueError, OSError) so code that
does not know about mapsearch still behaves sensibly.
"""


class MapSearchError(Exception):
    """Base class for all mapsearch errors."""

    code = "error"


class InvalidQueryError(MapSearchError, ValueError):
    """Query text is empty or otherwise unusable."""

    code = "invalid-query"


class AlphaRangeError(MapSearchError, ValueError):
    """Text/image blend factor outside [-1, 1]."""

    code = "alpha-range"


class DimensionMismatchError(MapSearchError, ValueError):
    """Vectors or index columns disagree on embedding dimension."""

    code = "dimension-mismatch"


class DegenerateVectorError(MapSearchError, ValueError):
    """Zero vector where a direction is required."""

    code = "degenerate-vector"


class ImageDecodeError(MapSearchError, ValueError):
    """Bytes could not be decoded as a raster image."""

    code = "image-decode"


class CatalogSchemaError(MapSearchError, ValueError):
    """Catalog CSV is missing required columns."""

    code = "catalog-schema"


class FetchFailedError(MapSearchError, OSError):
    """Image fetch failed after retries."""

    code = "fetch-failed"


class FetchTimeoutError(FetchFailedError):
    """Image fetch timed out."""

    code = "fetch-timeout"


class PipelineConfigError(MapSearchError, ValueError):
    """Ingestion run cannot start (e.g. unwritable output directory)."""

    code = "pipeline-config"


class EmptyInputError(MapSearchError, ValueError):
    """An operation that needs at least one item received none."""

    code = "empty-input"


class DuplicateUrlError(MapSearchError, ValueError):
    """Two records claim the same IIIF URL."""

    code = "duplicate-url"


class IndexFormatError(MapSearchError, ValueError):
    """Index file does not start with valid magic bytes / version."""

    code = "index-format"


class IndexCorruptionError(MapSearchError, ValueError):
    """Index file is truncated or fails its checksum."""

    code = "index-corruption"


class EmptyIndexError(MapSearchError, ValueError):
    """Search attempted against an index with no columns."""

    code = "empty-index"


class MissingTitleError(MapSearchError, ValueError):
    """Caption generation requires a non-empty title."""

    code = "missing-title"
