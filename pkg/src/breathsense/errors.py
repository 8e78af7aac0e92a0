"""Shared exception base so the CLI can map failures to exit codes."""


class BreathSenseError(Exception):
    """Base for all data/validation errors raised by this package."""
