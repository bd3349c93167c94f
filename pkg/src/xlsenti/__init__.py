"""Cross-lingual multi-task sentiment classification toolkit."""

__version__ = "0.1.0"
