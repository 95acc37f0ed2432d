"""Exception types shared across the package."""


class QuadGaitError(Exception):
    """Base class for all package errors."""


class Unreachable(QuadGaitError):
    """IK target lies outside the leg workspace."""

    def __init__(self, target, max_radius):
        self.target = target
        self.max_radius = max_radius
        super().__init__(f"foot target {target} outside workspace (max radius {max_radius:.4f} m)")


class RankDeficient(QuadGaitError):
    """Requested stance wrench is unachievable beyond tolerance."""


class Diverged(QuadGaitError):
    """Simulation state became non-finite or left the sane region."""

    def __init__(self, time):
        self.time = time
        super().__init__(f"simulation diverged at t={time:.4f} s")


class EmptyDataset(QuadGaitError):
    """Operation requires at least one (or two) records."""


class UnknownTask(QuadGaitError):
    """Task id or gait name not covered by the network/config."""


class DegenerateTruth(QuadGaitError):
    """R^2 undefined: ground truth has (near-)zero variance."""


class NonFiniteLoss(QuadGaitError):
    """Training loss became NaN or infinite."""

    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"non-finite loss at epoch {epoch}")


class ConfigError(QuadGaitError):
    """Malformed config file, unknown key, or invalid value."""


class FileFormatError(QuadGaitError):
    """Base class for binary file format errors."""


class BadMagic(FileFormatError):
    pass


class VersionMismatch(FileFormatError):
    pass


class TruncatedFile(FileFormatError):
    pass


class ChecksumMismatch(FileFormatError):
    pass


class ShapeMismatch(FileFormatError):
    pass
