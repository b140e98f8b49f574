"""Graph generation from spherical features, with exact ERGM tools for small graphs."""

__version__ = "0.1.0"
