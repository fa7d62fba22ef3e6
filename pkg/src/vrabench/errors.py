"""Exception types shared across the toolkit."""


class VraError(Exception):
    """Base class for all toolkit errors."""


class ManifestError(VraError):
    """Malformed manifest row (wrong columns, bad rating, unknown subset)."""


class DuplicateVideoError(VraError):
    """A video_id appears more than once in a manifest."""


class FeatureFormatError(VraError):
    """Feature file violates the CSV contract (width, non-finite, header)."""


class BoxFormatError(VraError):
    """Bounding-box JSON is malformed or fails validation."""


class MediaError(VraError):
    """Video/image decoding or encoding failed."""


class SchemaError(VraError):
    """Feature-name or shape mismatch between joined artifacts."""


class DegenerateSampleError(VraError):
    """Distribution fit requested on degenerate (all-identical) samples."""


class KernelError(VraError):
    """Operation incompatible with the model's kernel, or bad kernel spec."""


class ConvergenceError(VraError):
    """Iterative solver exhausted its budget before reaching tolerance."""


class UndefinedMetricError(VraError):
    """Metric is undefined for the given inputs (e.g. constant vector)."""


class SplitError(VraError):
    """Protocol split cannot be formed (too few groups, wrong subset mix)."""


class ConfigError(VraError):
    """Bad CLI flag or config-file value."""
