"""Batch SIFT extraction into descriptor files consumable by xdloc."""

from .extract import ExtractionConfig, ExtractionResult, extract
from .xdsc import read_descriptor_file, write_descriptor_file

__all__ = [
    "ExtractionConfig",
    "ExtractionResult",
    "extract",
    "read_descriptor_file",
    "write_descriptor_file",
]
