"""Exception types shared across the package.

The split matters for the command line tool: configuration problems and
data problems map to different exit codes.
"""


class ConfigError(Exception):
    """Invalid configuration: unknown keys, bad value ranges, unusable flag combos."""


class DataError(Exception):
    """Invalid or inconsistent data: malformed files, schema violations, impossible requests."""
