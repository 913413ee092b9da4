"""Exception hierarchy shared by all spheresfm modules.

Every error carries a stable ``category`` string (the class name) so the
CLI and the HTTP API can report machine-readable failure categories.
"""


class SphereSfmError(Exception):
    """Base class for all spheresfm errors."""

    @property
    def category(self) -> str:
        return type(self).__name__


# -- camera model ------------------------------------------------------------

class DegeneratePoint(SphereSfmError):
    """Point coincides with the camera center; no viewing direction exists."""


# -- two-view geometry -------------------------------------------------------

class InsufficientPairs(SphereSfmError):
    """Fewer correspondences than the estimator's minimum."""


class DegenerateConfiguration(SphereSfmError):
    """Correspondences do not determine a unique solution (nullity > 1)."""


class NoConsensus(SphereSfmError):
    """RANSAC found no model supported by the required number of inliers."""


class RankDeficient(SphereSfmError):
    """Matrix has rank below 2; epipoles are not uniquely defined."""


class AmbiguousCheirality(SphereSfmError):
    """Sample pairs cannot distinguish the epipole sign candidates."""


class ParallelRays(SphereSfmError):
    """Viewing rays are parallel; the point is at infinity."""


class DegenerateCurve(SphereSfmError):
    """Query bearing is the epipole; every bearing satisfies the constraint."""


# -- multiview registration --------------------------------------------------

class DisconnectedGraph(SphereSfmError):
    """Pairwise estimates do not connect all cameras."""


class CollinearCamera(SphereSfmError):
    """Camera lies on the triangulation baseline; rays are near-parallel."""


class DegenerateTrack(SphereSfmError):
    """All observation rays of a track are parallel."""


# -- correspondence management -----------------------------------------------

class ParseError(SphereSfmError):
    """Matches file record is malformed."""


class UnknownImageId(SphereSfmError):
    """Record references an image id absent from the project."""


# -- rectification and dense reconstruction -----------------------------------

class FrameDegenerate(SphereSfmError):
    """No stable rectification frame could be constructed."""


class DegenerateDisparity(SphereSfmError):
    """Disparity does not correspond to a finite point in front of the pair."""


# -- project / export ----------------------------------------------------------

class EmptyCloud(SphereSfmError):
    """Point set to export is empty."""


class ProjectError(SphereSfmError):
    """Project state on disk is missing or inconsistent."""


class PrerequisiteMissing(SphereSfmError):
    """A pipeline step was requested before the step it depends on."""
