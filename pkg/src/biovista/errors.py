"""Exception hierarchy shared by all biovista modules.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented exit codes: 1 = validation failure, 2 = missing input,
3 = data error.
"""


class BioVistaError(Exception):
    """Base class for all named errors raised by this package."""

    exit_code = 1

    @property
    def name(self) -> str:
        return type(self).__name__


class ValidationError(BioVistaError):
    """Invariant or configuration violation (exit code 1)."""

    exit_code = 1


class MissingInputError(BioVistaError):
    """A required input file, tile or record is absent (exit code 2)."""

    exit_code = 2


class DataError(BioVistaError):
    """A present input could not be decoded or is inconsistent (exit code 3)."""

    exit_code = 3


# --- LAS ---------------------------------------------------------------

class BadMagic(DataError):
    pass


class UnsupportedVersion(DataError):
    pass


class UnsupportedPointFormat(DataError):
    pass


class TruncatedFile(DataError):
    pass


class ScaleOverflow(DataError):
    pass


class MissingTile(MissingInputError):
    def __init__(self, cells):
        self.cells = list(cells)
        super().__init__(f"no tile for grid cell(s): {', '.join(map(str, self.cells))}")


class EmptyCloud(DataError):
    pass


# --- raster ------------------------------------------------------------

class UnsupportedCompression(DataError):
    pass


class MissingGeoTags(DataError):
    pass


class CorruptIFD(DataError):
    pass


class OutOfBounds(DataError):
    pass


class PatchResolutionMismatch(ValidationError):
    pass


class NoData(DataError):
    pass


class IoError(DataError):
    pass


# --- dataset -----------------------------------------------------------

class DegenerateSplit(ValidationError):
    pass


# --- embedding store ---------------------------------------------------

class VersionUnsupported(DataError):
    pass


class DuplicateKey(DataError):
    pass


class DimMismatch(ValidationError):
    pass


class MissingModality(MissingInputError):
    def __init__(self, pairs):
        self.pairs = list(pairs)
        shown = ", ".join(f"({s}, {m})" for s, m in self.pairs[:8])
        more = "" if len(self.pairs) <= 8 else f" and {len(self.pairs) - 8} more"
        super().__init__(f"missing embeddings for: {shown}{more}")


class NoProbs(DataError):
    pass


# --- fusion ------------------------------------------------------------

class EmptyValidation(ValidationError):
    pass


class NonFiniteInput(DataError):
    pass


class ShapeMismatch(ValidationError):
    pass


# --- metrics -----------------------------------------------------------

class EmptyEval(DataError):
    pass


class MissingClass(DataError):
    pass


class MissingAttribute(DataError):
    pass


class TooFewRuns(ValidationError):
    pass


# --- CLI / config ------------------------------------------------------

class ConfigError(ValidationError):
    pass


class MissingInput(MissingInputError):
    """A configured path does not exist; message names the path."""

    def __init__(self, path, what="input"):
        self.path = path
        super().__init__(f"missing {what}: {path}")
