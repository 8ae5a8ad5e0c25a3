"""Global orderings of items from many partial temporal sequences."""

__version__ = "0.1.0"
