"""Reader/writer for the descriptor-file binary format shared with xdloc.

Layout (little-endian, 24-byte header):
  magic "XDSC" | version u32 | dim u32 | flags u32 (reserved, 0) | count u64
followed by `count` records of (x f32, y f32, scale f32, orientation f32,
desc f32 * dim).  This module is intentionally self-contained so the
extractor depends on the primary engine only through the on-disk format.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"XDSC"
VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")


class DescriptorFileError(ValueError):
    """Malformed or truncated descriptor file."""


def write_descriptor_file(
    path,
    positions: np.ndarray,
    descriptors: np.ndarray,
    scales: np.ndarray | None = None,
    orientations: np.ndarray | None = None,
) -> None:
    positions = np.asarray(positions, dtype=np.float32).reshape(-1, 2)
    descriptors = np.asarray(descriptors, dtype=np.float32)
    if descriptors.ndim != 2:
        descriptors = descriptors.reshape(len(positions), -1)
    count, dim = descriptors.shape
    if count != len(positions):
        raise DescriptorFileError(
            f"{count} descriptors but {len(positions)} positions"
        )
    if scales is None:
        scales = np.zeros(count, dtype=np.float32)
    if orientations is None:
        orientations = np.zeros(count, dtype=np.float32)
    rows = np.concatenate(
        [
            positions,
            np.asarray(scales, dtype=np.float32).reshape(-1, 1),
            np.asarray(orientations, dtype=np.float32).reshape(-1, 1),
            descriptors,
        ],
        axis=1,
    ).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dim, 0, count))
        fh.write(rows.tobytes())


def read_descriptor_file(path) -> dict:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise DescriptorFileError(f"{path}: truncated header")
        magic, version, dim, _flags, count = _HEADER.unpack(head)
        if magic != MAGIC:
            raise DescriptorFileError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise DescriptorFileError(f"{path}: unsupported version {version}")
        body = fh.read()
    record_bytes = 4 * (4 + dim)
    if len(body) != count * record_bytes:
        raise DescriptorFileError(
            f"{path}: expected {count * record_bytes} record bytes, "
            f"found {len(body)}"
        )
    rows = np.frombuffer(body, dtype="<f4").reshape(count, 4 + dim)
    return {
        "positions": rows[:, :2].astype(np.float64),
        "scales": rows[:, 2].astype(np.float64),
        "orientations": rows[:, 3].astype(np.float64),
        "descriptors": rows[:, 4:].astype(np.float64),
    }
