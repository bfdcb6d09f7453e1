"""Online learning and resource management under long-term constraints."""

__version__ = "0.1.0"
