"""Exception types shared across the toolkit."""


class MatchForgeError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(MatchForgeError):
    """A configuration value violates its contract."""


# --- geometry / estimation ---------------------------------------------------

class GeometryError(MatchForgeError):
    """A geometric precondition was violated."""


class DegenerateTranslation(GeometryError):
    """Translation vector too short to define a direction."""


class InvalidDepth(GeometryError):
    """Depth must be strictly positive."""


class PointAtInfinity(GeometryError):
    """Projective depth vanished while applying a homography."""


class RankDeficient(GeometryError):
    """Matrix does not have the rank its role requires."""


class NoValidCandidate(GeometryError):
    """No pose candidate places any point in front of both cameras."""


class DegenerateConfiguration(GeometryError):
    """Point configuration cannot constrain the requested model."""


class InsufficientMatches(GeometryError):
    """Fewer matches than the minimal sample size."""


class NoModelFound(GeometryError):
    """No sample ever reached minimal inlier support."""


# --- correspondence containers ------------------------------------------------

class PairingError(MatchForgeError):
    """Correspondence sets do not refer to compatible frames."""


class MismatchedPair(PairingError):
    """Sets to be fused/merged cover different frame pairs."""


class ChainMismatch(PairingError):
    """Composition requires a shared middle frame."""


class CorrespondenceParseError(MatchForgeError):
    """Interchange text is malformed; carries the offending line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


# --- matchers ------------------------------------------------------------------

class MatcherError(MatchForgeError):
    """A matcher failed to produce usable output."""


class EmptyImage(MatcherError):
    """Matcher invoked without pixel data."""


class MatcherProcessError(MatcherError):
    """External matcher process exited abnormally or left no output."""


class MatcherTimeout(MatcherError):
    """External matcher exceeded its time budget."""


# --- pipeline / benchmark -------------------------------------------------------

class AugmentationRejected(MatchForgeError):
    """Could not sample an acceptable perspective warp."""


class NoValidDepth(MatchForgeError):
    """A frame has no valid depth pixels."""


class EmptyErrors(MatchForgeError):
    """Cannot integrate a recall curve over an empty error list."""


class IncompleteGrid(MatchForgeError):
    """Ranking requires a fully populated method-by-dataset grid."""
