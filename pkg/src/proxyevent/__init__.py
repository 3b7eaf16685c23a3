"""Document-level multi-event extraction with learned proxy nodes and set matching."""

__version__ = "0.1.0"
