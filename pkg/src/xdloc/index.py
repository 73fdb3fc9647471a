"""Immutable inverted file over database scene descriptors.

Postings map library-feature ID -> (database image, finest pyramid cell,
feature ordinal) and are stored CSR-style: one offsets array of length V+1
plus three parallel columns sorted by (library_id, image_id, finest_cell,
feature_ordinal).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .descriptor import Role, SceneDescriptor
from .errors import FingerprintMismatchError, FormatError, XdlocError
from .library import ExperienceLibrary
from .model import DomainLabel, MinerConfig, PyramidConfig, Season

MAGIC = b"XDIX"
VERSION = 1


@dataclass(frozen=True)
class Posting:
    image_id: int
    finest_cell: int
    feature_ordinal: int


@dataclass(frozen=True)
class ImageEntry:
    num_features: int
    place_id: Optional[int]
    domain: DomainLabel


@dataclass
class InvertedIndex:
    library_size: int
    dim: int
    pyramid: PyramidConfig
    miner: MinerConfig
    library_fingerprint: int
    offsets: np.ndarray  # (V+1,) int64 into the posting columns
    post_image_ids: np.ndarray
    post_cells: np.ndarray
    post_ordinals: np.ndarray
    images: dict[int, ImageEntry]

    @property
    def num_postings(self) -> int:
        return len(self.post_image_ids)

    @property
    def image_ids(self) -> list[int]:
        return sorted(self.images)

    def postings(self, library_id: int) -> list[Posting]:
        lo, hi = self.offsets[library_id - 1], self.offsets[library_id]
        return [
            Posting(int(i), int(c), int(o))
            for i, c, o in zip(
                self.post_image_ids[lo:hi],
                self.post_cells[lo:hi],
                self.post_ordinals[lo:hi],
            )
        ]

    def posting_slice(self, library_id: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        lo, hi = self.offsets[library_id - 1], self.offsets[library_id]
        return (
            self.post_image_ids[lo:hi],
            self.post_cells[lo:hi],
            self.post_ordinals[lo:hi],
        )


def build_index(
    databases: Sequence[SceneDescriptor],
    library_size: int,
    dim: int,
) -> InvertedIndex:
    """Merge database descriptors into one immutable inverted file.

    All inputs must share the pyramid config, miner config, and library
    fingerprint they were built with.
    """
    if not databases:
        raise XdlocError("no database descriptors supplied")
    first = databases[0]
    for sd in databases:
        if sd.role is not Role.DATABASE:
            raise XdlocError(f"image {sd.image_id} is not a database descriptor")
        if (
            sd.pyramid != first.pyramid
            or sd.miner != first.miner
            or sd.library_fingerprint != first.library_fingerprint
        ):
            raise FingerprintMismatchError(
                f"descriptor of image {sd.image_id} was built with a different "
                "library or configuration"
            )

    lids, imgs, cells, ords = [], [], [], []
    images: dict[int, ImageEntry] = {}
    for sd in databases:
        if sd.image_id in images:
            raise XdlocError(f"duplicate database image id {sd.image_id}")
        images[sd.image_id] = ImageEntry(
            num_features=sd.num_features,
            place_id=sd.place_id,
            domain=sd.domain or DomainLabel(Season.OTHER, 0),
        )
        for ordinal, rec in enumerate(sd.records):
            for lid, _ in rec.entries:
                lids.append(lid)
                imgs.append(sd.image_id)
                cells.append(rec.finest_cell)
                ords.append(ordinal)

    lids = np.asarray(lids, dtype=np.int64)
    imgs = np.asarray(imgs, dtype=np.int64)
    cells = np.asarray(cells, dtype=np.int64)
    ords = np.asarray(ords, dtype=np.int64)
    order = np.lexsort((ords, cells, imgs, lids))
    lids, imgs, cells, ords = lids[order], imgs[order], cells[order], ords[order]
    offsets = np.zeros(library_size + 1, dtype=np.int64)
    np.add.at(offsets, lids, 1)
    offsets = np.cumsum(offsets)

    return InvertedIndex(
        library_size=library_size,
        dim=dim,
        pyramid=first.pyramid,
        miner=first.miner,
        library_fingerprint=first.library_fingerprint,
        offsets=offsets,
        post_image_ids=imgs,
        post_cells=cells,
        post_ordinals=ords,
        images=images,
    )


_HEADER = struct.Struct("<4sIQBIQB")  # magic, version, V, L, d, fingerprint, flags


def save_index(index: InvertedIndex, path) -> None:
    """Write the little-endian binary index file."""
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                MAGIC,
                VERSION,
                index.library_size,
                index.pyramid.levels,
                index.dim,
                index.library_fingerprint,
                0,  # flags: bit 0 would mark delta-encoded image ids (unused)
            )
        )
        fh.write(struct.pack("<IIdB", index.miner.k, index.miner.k_prime,
                             index.miner.d0, int(index.miner.exclude_same_source)))
        fh.write(struct.pack("<I", len(index.images)))
        for image_id in sorted(index.images):
            e = index.images[image_id]
            place = -1 if e.place_id is None else e.place_id
            season = e.domain.season.value.encode("ascii")
            fh.write(
                struct.pack(
                    "<qIq5sI",
                    image_id,
                    e.num_features,
                    place,
                    season.ljust(5, b"\0"),
                    e.domain.route,
                )
            )
        fh.write(struct.pack("<Q", index.num_postings))
        for arr in (index.offsets, index.post_image_ids, index.post_cells,
                    index.post_ordinals):
            fh.write(np.ascontiguousarray(arr, dtype="<i8").tobytes())


def _read_exactly(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(
            f"truncated index file while reading {what} at byte {fh.tell() - len(buf)}"
        )
    return buf


def load_index(path, library: Optional[ExperienceLibrary] = None) -> InvertedIndex:
    """Read an index file; optionally verify it matches a given library."""
    with open(path, "rb") as fh:
        magic, version, v, levels, dim, fp, flags = _HEADER.unpack(
            _read_exactly(fh, _HEADER.size, "header")
        )
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"unsupported index version {version}")
        if flags != 0:
            raise FormatError(f"unknown header flags {flags:#x}")
        k, k_prime, d0, excl = struct.unpack("<IIdB", _read_exactly(fh, 17, "miner"))
        (n_images,) = struct.unpack("<I", _read_exactly(fh, 4, "image count"))
        images: dict[int, ImageEntry] = {}
        rec = struct.Struct("<qIq5sI")
        for _ in range(n_images):
            image_id, n, place, season, route = rec.unpack(
                _read_exactly(fh, rec.size, "image table")
            )
            images[image_id] = ImageEntry(
                num_features=n,
                place_id=None if place < 0 else place,
                domain=DomainLabel(
                    Season(season.rstrip(b"\0").decode("ascii")), route
                ),
            )
        (n_post,) = struct.unpack("<Q", _read_exactly(fh, 8, "posting count"))
        offsets = np.frombuffer(
            _read_exactly(fh, 8 * (v + 1), "offsets"), dtype="<i8"
        ).astype(np.int64)
        cols = [
            np.frombuffer(
                _read_exactly(fh, 8 * n_post, name), dtype="<i8"
            ).astype(np.int64)
            for name in ("image ids", "cells", "ordinals")
        ]
    index = InvertedIndex(
        library_size=v,
        dim=dim,
        pyramid=PyramidConfig(levels),
        miner=MinerConfig(k, k_prime, d0, bool(excl)),
        library_fingerprint=fp,
        offsets=offsets,
        post_image_ids=cols[0],
        post_cells=cols[1],
        post_ordinals=cols[2],
        images=images,
    )
    if library is not None and library.fingerprint() != fp:
        raise FingerprintMismatchError(
            "index was built against a different library "
            f"(index {fp:#x} != library {library.fingerprint():#x})"
        )
    return index
