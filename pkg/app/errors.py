"""
Exception hierarchy and process exit codes.

Every failure the toolkit reports has its own class so callers can tell
tracking problems (recoverable per frame) from data problems (bad input
files) and configuration problems (bad flags or config files).
"""

from typing import Optional


# CLI exit codes
EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_DATA_ERROR = 3
EXIT_TRACKING_LOSS = 4


class ToolkitError(Exception):
    """Base class for all toolkit errors"""


class ConfigError(ToolkitError):
    """Invalid configuration file, flag combination or parameter"""


class UnknownScene(ConfigError, KeyError):
    """No scene of that name in the scenes library"""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


# -----------------------------
# Tracking errors
# -----------------------------

class TrackingError(ToolkitError):
    """A registration step could not produce an estimate"""


class DegenerateRotation(TrackingError):
    """Rotation block is singular or a reflection"""


class NoCorrespondences(TrackingError):
    """Normal shooting found no valid pairs"""


class AllPairsRejected(TrackingError):
    """Median filtering removed every pair"""


class DegenerateSystem(TrackingError):
    """Normal equations carry no usable constraint"""


class EmptyHistogram(ToolkitError):
    """Median requested from a histogram with no samples"""


class BadIntrinsics(ToolkitError):
    """Focal lengths must be strictly positive"""


# -----------------------------
# Data errors
# -----------------------------

class DataError(ToolkitError):
    """Input files or trajectories are unusable"""


class MalformedSequence(DataError):
    """Dataset directory is missing required files"""


class ParseError(DataError):
    """A text file line could not be parsed"""

    def __init__(self, message: str, line_number: Optional[int] = None, path: Optional[str] = None):
        self.line_number = line_number
        self.path = path
        location = ""
        if path is not None:
            location += f"{path}"
        if line_number is not None:
            location += f":{line_number}"
        super().__init__(f"{location}: {message}" if location else message)


class EmptyFrame(DataError):
    """A rendered view contains no scene geometry"""


class InsufficientOverlap(DataError):
    """Too few matched poses to evaluate a trajectory"""


class DegenerateAlignment(DataError):
    """Positions are collinear or only a reflection would align them"""
