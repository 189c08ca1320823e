"""Exception types shared across the package."""


class FreqSketchError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(FreqSketchError, ValueError):
    """A sketch or engine configuration violates its invariants."""


class IncompatibleSketchError(FreqSketchError, ValueError):
    """Two sketches cannot be combined; the message names the differing field."""


class CannotFoldError(FreqSketchError):
    """Folding was requested on a sketch already at minimum width."""


class EpochRangeError(FreqSketchError, ValueError):
    """An epoch argument lies outside the completed range."""


class AlignmentError(FreqSketchError, ValueError):
    """Pyramids to be merged are not synchronized to the same epoch."""


class ClockSkewError(FreqSketchError):
    """The pyramids backing a combined query disagree on the epoch counter."""


class SnapshotFormatError(FreqSketchError, ValueError):
    """A serialized snapshot could not be parsed."""


class BadMagicError(SnapshotFormatError):
    """Snapshot does not start with the expected magic bytes."""


class VersionMismatchError(SnapshotFormatError):
    """Snapshot was written with an unsupported format version."""


class TruncatedSnapshotError(SnapshotFormatError):
    """Snapshot ends before all declared payload bytes."""


class TemplateError(FreqSketchError, ValueError):
    """A factor template is not a valid junction-tree decomposition."""


class ArityError(FreqSketchError, ValueError):
    """A tuple's length does not match its template's arity."""


class InconsistentCountsError(FreqSketchError):
    """A separator count of zero met nonzero clique counts with smoothing off."""


class EmptyKeySetError(FreqSketchError, ValueError):
    """A deviation report was requested over an empty key set."""
