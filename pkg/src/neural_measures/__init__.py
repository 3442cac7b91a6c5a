"""Neural pushforward measures for random ODEs and PDEs."""

__version__ = "0.1.0"
