"""Sparse nearest-neighbor scene descriptors for query and database images."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatchError
from .library import ExperienceLibrary
from .miner import mine_batch, truncated_similarity
from .model import (
    DomainLabel,
    ImageRecord,
    MinerConfig,
    PyramidConfig,
    cells_of,
)


class Role(enum.Enum):
    QUERY = "query"
    DATABASE = "database"


@dataclass(frozen=True)
class FeatureRecord:
    """One feature's sparse explanation: position, finest-grid cell, and
    (library_id, weight) entries sorted by descending weight then ascending id.

    Query weights are truncated similarities; database weights are all 1.
    """

    pos: tuple[float, float]
    finest_cell: int
    entries: tuple[tuple[int, float], ...]


@dataclass
class SceneDescriptor:
    """Per-image collection of feature records plus build provenance."""

    image_id: int
    role: Role
    records: list[FeatureRecord]
    pyramid: PyramidConfig
    miner: MinerConfig
    library_fingerprint: int
    domain: Optional[DomainLabel] = None
    place_id: Optional[int] = None

    @property
    def num_features(self) -> int:
        return len(self.records)


def _sorted_entries(pairs: list[tuple[int, float]]) -> tuple[tuple[int, float], ...]:
    return tuple(sorted(pairs, key=lambda e: (-e[1], e[0])))


def _describe(
    image: ImageRecord,
    library: ExperienceLibrary,
    cfg: MinerConfig,
    pyr: PyramidConfig,
    role: Role,
    threads: int = 1,
) -> SceneDescriptor:
    if image.num_features and image.dim != library.dim:
        raise DimensionMismatchError(
            f"image {image.image_id} dim {image.dim} != library dim {library.dim}"
        )
    records: list[FeatureRecord] = []
    if image.num_features:
        exclude = {image.image_id} if cfg.exclude_same_source else None
        k = cfg.k if role is Role.QUERY else cfg.k_prime
        mined = mine_batch(image.descriptors, library, k, exclude, threads=threads)
        cells = cells_of(image.positions, pyr.levels)
        for i, expl in enumerate(mined):
            if role is Role.QUERY:
                pairs = [
                    (lid, truncated_similarity(sqd, cfg.d0))
                    for lid, sqd in expl.entries
                ]
            else:
                pairs = [(lid, 1.0) for lid, _ in expl.entries]
            records.append(
                FeatureRecord(
                    pos=tuple(image.positions[i]),
                    finest_cell=int(cells[i]),
                    entries=_sorted_entries(pairs),
                )
            )
    return SceneDescriptor(
        image_id=image.image_id,
        role=role,
        records=records,
        pyramid=pyr,
        miner=cfg,
        library_fingerprint=library.fingerprint(),
        domain=image.domain,
        place_id=image.place_id,
    )


def describe_query(
    image: ImageRecord,
    library: ExperienceLibrary,
    cfg: MinerConfig,
    pyr: PyramidConfig,
    threads: int = 1,
) -> SceneDescriptor:
    """K-NN explanation of every query feature with truncated-similarity weights."""
    return _describe(image, library, cfg, pyr, Role.QUERY, threads)


def describe_database(
    image: ImageRecord,
    library: ExperienceLibrary,
    cfg: MinerConfig,
    pyr: PyramidConfig,
    threads: int = 1,
) -> SceneDescriptor:
    """K'-NN explanation of every database feature; only IDs carry meaning."""
    return _describe(image, library, cfg, pyr, Role.DATABASE, threads)
