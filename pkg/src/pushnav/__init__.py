"""Mobile-manipulator navigation among movable obstacles with a learned pushing skill."""

__version__ = "0.1.0"
