"""Error taxonomy shared by the library and the CLI.

Each family maps to a distinct process exit code so that scripted callers
can tell a bad config from a bad ensemble.
"""


class KpzLabError(Exception):
    """Base class for all kpzlab errors."""

    exit_code = 1


class ConfigError(KpzLabError):
    """Invalid or unparseable run configuration."""

    exit_code = 2


class DomainError(KpzLabError):
    """Arguments outside an operation's domain (bad grids, bounds, sizes)."""

    exit_code = 3


class StatisticsError(KpzLabError):
    """Not enough data (batches, samples) to produce an estimate."""

    exit_code = 4


class DependencyError(KpzLabError):
    """A prerequisite artifact (store, curve file) is missing."""

    exit_code = 5


class OutputError(KpzLabError):
    """Failure writing or reading run artifacts."""

    exit_code = 6


class CalibrationError(StatisticsError):
    """Calibration ensemble too small or degenerate."""


class AccuracyError(DomainError):
    """Requested accuracy unattainable at the given quadrature orders."""


class SampleInvalidError(KpzLabError):
    """A single replica is unusable (censored argmax); discard and count it."""

    exit_code = 4
