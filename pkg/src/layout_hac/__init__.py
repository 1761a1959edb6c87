"""Two-furniture layout simulator and hierarchical actor-critic trainer."""

__version__ = "0.1.0"
