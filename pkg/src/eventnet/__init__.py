"""Event-driven network programs: compile, simulate and verify."""

__version__ = "0.1.0"
