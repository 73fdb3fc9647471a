"""Binary descriptor files and the JSON dataset manifest.

Descriptor file layout (little-endian, 24-byte header):
  magic "XDSC" | version u32 | dim u32 | flags u32 (reserved, 0) | count u64
followed by `count` records of (x f32, y f32, scale f32, orientation f32,
desc f32 * dim).
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import FormatError
from .model import DomainLabel, ImageRecord, Season

MAGIC = b"XDSC"
VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")


def write_descriptor_file(
    path,
    positions: np.ndarray,
    descriptors: np.ndarray,
    scales: Optional[np.ndarray] = None,
    orientations: Optional[np.ndarray] = None,
) -> None:
    positions = np.asarray(positions, dtype=np.float32).reshape(-1, 2)
    descriptors = np.asarray(descriptors, dtype=np.float32)
    if descriptors.ndim != 2:
        descriptors = descriptors.reshape(len(positions), -1)
    count, dim = descriptors.shape
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
    """Validated fragment: positions, scales, orientations, descriptors."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise FormatError(f"{path}: truncated header ({len(head)} bytes)")
        magic, version, dim, flags, count = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        record_bytes = 4 * (4 + dim)
        body = fh.read()
    if len(body) != count * record_bytes:
        raise FormatError(
            f"{path}: expected {count} records ({count * record_bytes} bytes) "
            f"after byte {_HEADER.size}, found {len(body)} bytes"
        )
    rows = np.frombuffer(body, dtype="<f4").reshape(count, 4 + dim)
    positions = rows[:, :2].astype(np.float64)
    for axis, name in ((0, "x"), (1, "y")):
        bad = np.flatnonzero(
            (positions[:, axis] < 0.0) | (positions[:, axis] > 1.0)
        )
        if len(bad):
            raise FormatError(
                f"{path}: record {int(bad[0])}: {name} coordinate "
                f"{positions[bad[0], axis]} outside [0, 1]"
            )
    return {
        "positions": positions,
        "scales": rows[:, 2].astype(np.float64),
        "orientations": rows[:, 3].astype(np.float64),
        "descriptors": rows[:, 4:].astype(np.float64),
    }


@dataclass
class Manifest:
    """Loaded dataset: library / database / query image collections plus
    optional relevance judgements and per-query database subsets."""

    library: list[ImageRecord]
    database: list[ImageRecord]
    query: list[ImageRecord]
    relevance: dict[int, set[int]] = field(default_factory=dict)
    per_query_database: dict[int, list[int]] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)


def _parse_domain(entry: dict, path, collection: str) -> DomainLabel:
    try:
        season = Season(entry["season"])
    except (KeyError, ValueError):
        raise FormatError(
            f"{path}: {collection} entry {entry.get('image_id')}: "
            f"unknown season token {entry.get('season')!r}"
        ) from None
    return DomainLabel(season, int(entry.get("route", 0)))


def _load_collection(doc: dict, name: str, path, base_dir) -> list[ImageRecord]:
    records = []
    seen: set[int] = set()
    for entry in doc.get(name, []):
        image_id = int(entry["image_id"])
        if image_id in seen:
            raise FormatError(f"{path}: duplicate image_id {image_id} in {name}")
        seen.add(image_id)
        fpath = os.path.join(base_dir, entry["path"])
        if not os.path.isfile(fpath):
            raise FormatError(f"{path}: {name} entry {image_id}: missing file {fpath}")
        frag = read_descriptor_file(fpath)
        records.append(
            ImageRecord(
                image_id=image_id,
                positions=frag["positions"],
                descriptors=frag["descriptors"],
                domain=_parse_domain(entry, path, name),
                place_id=entry.get("place_id"),
                scales=frag["scales"],
                orientations=frag["orientations"],
            )
        )
    return records


def load_manifest(path) -> Manifest:
    """Parse a manifest JSON document and load every referenced file."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}") from None
    base_dir = os.path.dirname(os.path.abspath(path))
    m = Manifest(
        library=_load_collection(doc, "library", path, base_dir),
        database=_load_collection(doc, "database", path, base_dir),
        query=_load_collection(doc, "query", path, base_dir),
        notes=list(doc.get("notes", [])),
    )
    for qid, rel in doc.get("relevance", {}).items():
        m.relevance[int(qid)] = {int(r) for r in rel}
    for qid, subset in doc.get("per_query_database", {}).items():
        m.per_query_database[int(qid)] = [int(i) for i in subset]
    db_ids = {im.image_id for im in m.database}
    for qid, rel in m.relevance.items():
        missing = rel - db_ids
        if missing:
            raise FormatError(
                f"{path}: relevance for query {qid} names unknown database "
                f"ids {sorted(missing)}"
            )
    return m


def save_manifest(path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
