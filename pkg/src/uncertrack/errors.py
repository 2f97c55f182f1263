"""Error taxonomy: configuration/precondition problems vs numerical failures.

The CLI maps ``ConfigError`` to exit code 1 and ``NumericsError`` (from the
numerics package) to exit code 2.
"""

from __future__ import annotations

__all__ = ["ConfigError"]


class ConfigError(Exception):
    """Bad configuration, violated precondition, or malformed input file."""
