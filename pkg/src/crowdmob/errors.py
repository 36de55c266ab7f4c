"""Exception types raised across the package."""


class CrowdMobError(Exception):
    """Base class for all package errors."""


class DeploymentError(CrowdMobError, ValueError):
    """Deployment description is inconsistent or malformed."""


class ZeroLengthVector(CrowdMobError, ValueError):
    pass


class KeyLengthError(CrowdMobError, ValueError):
    pass


class MalformedMac(CrowdMobError, ValueError):
    pass


class RandomnessUnavailable(CrowdMobError, RuntimeError):
    pass


class ParseError(CrowdMobError, ValueError):
    pass


class RangeError(CrowdMobError, ValueError):
    pass


class UnknownSensor(CrowdMobError, KeyError):
    pass


class EmptyHour(CrowdMobError, ValueError):
    pass


class ZeroWifiCount(CrowdMobError, ZeroDivisionError):
    pass


class InsufficientData(CrowdMobError, ValueError):
    pass


class NoRatioAvailable(CrowdMobError, LookupError):
    pass


class NoSightings(CrowdMobError, ValueError):
    pass


class UnknownArea(CrowdMobError, KeyError):
    pass


class SchemaError(CrowdMobError, ValueError):
    """Observation document does not match the schema.

    ``path`` is the dotted location of the offending field.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ConfigError(CrowdMobError, ValueError):
    pass


class UnknownPreset(CrowdMobError, KeyError):
    pass


class StageError(CrowdMobError, RuntimeError):
    """A pipeline stage failed; carries the stage name and original cause."""

    def __init__(self, stage: str, cause: BaseException, cluster_id: str | None = None):
        where = f"{cluster_id}/{stage}" if cluster_id else stage
        super().__init__(f"stage {where} failed: {cause!r}")
        self.stage = stage
        self.cause = cause
        self.cluster_id = cluster_id
