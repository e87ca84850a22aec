"""Contact process with rapid stirring on Z^d."""

__version__ = "0.1.0"
