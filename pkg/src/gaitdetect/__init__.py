"""Abnormal-gait detection from smartphone accelerometer and gyroscope windows."""

__version__ = "0.1.0"

from .ingest import Dataset, GaitLabel, Recording  # noqa: E402

__all__ = ["Dataset", "GaitLabel", "Recording", "__version__"]
