"""Exception hierarchy.

Every error carries a ``stage`` tag naming the processing stage that raised
it.  The pipeline re-tags errors with the scan they came from, so a message
reads e.g. ``[data/range-image] EmptyProjection: ...``.
"""


class CurvRegError(Exception):
    stage = "curvreg"

    def __init__(self, message="", stage=None):
        super().__init__(message)
        self.message = message
        if stage is not None:
            self.stage = stage

    def __str__(self):
        return f"[{self.stage}] {type(self).__name__}: {self.message}"


# geometry
class DegenerateCorrespondences(CurvRegError):
    stage = "geometry"


# range imaging
class EmptyProjection(CurvRegError):
    stage = "range-image"


class ConstantImage(CurvRegError):
    stage = "range-image"


class NoValidRange(CurvRegError):
    stage = "range-image"


# curvelets
class ImageTooSmall(CurvRegError):
    stage = "curvelet"


class GeometryMismatch(CurvRegError):
    stage = "curvelet"


class ScaleOutOfRange(CurvRegError):
    stage = "curvelet"


# features
class TooFewScales(CurvRegError):
    stage = "features"


class ZeroGradient(CurvRegError):
    stage = "features"


# matching
class NoFeatures(CurvRegError):
    stage = "matching"


class InsufficientMatches(CurvRegError):
    stage = "ransac"


class ConsensusFailure(CurvRegError):
    stage = "ransac"


# evaluation
class EmptySamples(CurvRegError):
    stage = "evaluation"


class LengthMismatch(CurvRegError):
    stage = "evaluation"


class SensorBelowTerrain(CurvRegError):
    stage = "synth"


# io
class UnknownFormat(CurvRegError):
    stage = "io"


class ParseError(CurvRegError):
    stage = "io"


class EmptyCloud(CurvRegError):
    stage = "io"


class IoError(CurvRegError):
    stage = "io"


class ConfigError(CurvRegError):
    stage = "config"
