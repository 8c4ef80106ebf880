"""Two-stage relation integration: align open-IE relations to a target KG."""

__version__ = "0.1.0"
