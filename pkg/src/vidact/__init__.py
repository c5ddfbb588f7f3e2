"""Multi-person action detection, tracking, recognition, and timeline
summarization for fixed-camera video."""

__version__ = "0.1.0"
