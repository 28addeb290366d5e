"""Exception types shared across the package."""


class RpfError(Exception):
    """Base class for all errors raised by this package."""


class EmptyInput(RpfError):
    """An operation that needs at least one element got none."""


class NonRotationMatrix(RpfError):
    """A 3x3 block is not orthonormal with determinant +1 within tolerance."""


class DegenerateRays(RpfError):
    """Two rays are too close to parallel to triangulate reliably."""


class ZeroVector(RpfError):
    """A vector that must be normalizable has (near-)zero norm."""


class MalformedPoseFile(RpfError):
    """A pose file is missing, has the wrong token count, or non-finite values."""


class MissingSplit(RpfError):
    """A dataset directory or split list is absent."""


class SingletonScene(RpfError):
    """A scene's train split has no usable partner images for pairing."""


class DuplicateKey(RpfError):
    """The same identifier or (query, db) key appears twice."""


class DimMismatch(RpfError):
    """Feature vector dimensionality differs from the store's."""


class NTooLarge(RpfError):
    """More neighbors requested than candidates available."""


class CountMismatch(RpfError):
    """Feature matrix row count does not match the id list length."""


class MalformedHeader(RpfError):
    """A feature matrix file has a bad magic, truncated header, or body."""


class CoincidentCenters(RpfError):
    """Two camera centers coincide; the translation direction is undefined."""


class MalformedLine(RpfError):
    """A prediction file line is not valid JSON with the expected fields."""


class MissingPrediction(RpfError):
    """A required (query, db) pair is absent from the prediction set."""


class MissingFeature(RpfError):
    """An image id has no row in the feature store."""


class NoValidHypothesis(RpfError):
    """Every candidate pair was rejected; no translation hypothesis survives."""


class TooFewNeighbors(RpfError):
    """Localization needs at least two neighbor observations."""


class InsufficientRanking(RpfError):
    """The ranked list is too short for the requested viewpoint sets."""
