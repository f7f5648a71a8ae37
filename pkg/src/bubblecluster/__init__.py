"""Construction, verification, evolution and classification of bubble clusters."""

__version__ = "0.1.0"
