"""Experience library: the flat pool of raw library descriptors z[1..V]."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatchError, EmptyLibraryError
from .model import DomainLabel, ImageRecord, Season, check_same_dim

DomainFilter = Callable[[DomainLabel], bool]


@dataclass
class ExperienceLibrary:
    """V raw descriptors with per-ID provenance. IDs are 1..V; 0 is invalid.

    Row i-1 of `descriptors` holds library feature i. Provenance arrays are
    parallel to the rows.
    """

    descriptors: np.ndarray
    source_image_ids: np.ndarray
    seasons: np.ndarray  # season token per ID, dtype '<U5'
    routes: np.ndarray

    @property
    def size(self) -> int:
        return len(self.descriptors)

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    def provenance(self, library_id: int) -> tuple[int, DomainLabel]:
        """Source image id and domain label of one library feature."""
        row = library_id - 1
        label = DomainLabel(Season(str(self.seasons[row])), int(self.routes[row]))
        return int(self.source_image_ids[row]), label

    def fingerprint(self) -> int:
        """64-bit identity hash over (V, d, descriptor bytes); memoized."""
        cached = getattr(self, "_fingerprint", None)
        if cached is not None:
            return cached
        h = hashlib.blake2b(digest_size=8)
        h.update(np.int64(self.size).tobytes())
        h.update(np.int64(self.dim).tobytes())
        h.update(np.ascontiguousarray(self.descriptors, dtype="<f8").tobytes())
        fp = int.from_bytes(h.digest(), "little")
        object.__setattr__(self, "_fingerprint", fp)
        return fp


def build_library(
    images: Sequence[ImageRecord],
    vocabulary_filter: Optional[DomainFilter] = None,
) -> ExperienceLibrary:
    """Flatten the features of all accepted images into one library.

    Features are appended in input order, so IDs are deterministic for a
    fixed manifest order.
    """
    dim = check_same_dim(images)
    descs, sources, seasons, routes = [], [], [], []
    for im in images:
        if vocabulary_filter is not None and not vocabulary_filter(im.domain):
            continue
        if im.num_features == 0:
            continue
        descs.append(im.descriptors)
        sources.append(np.full(im.num_features, im.image_id, dtype=np.int64))
        seasons.append(np.full(im.num_features, im.domain.season.value, dtype="<U5"))
        routes.append(np.full(im.num_features, im.domain.route, dtype=np.int64))
    if not descs:
        raise EmptyLibraryError("no library feature passed the vocabulary filter")
    lib = ExperienceLibrary(
        descriptors=np.ascontiguousarray(np.concatenate(descs), dtype=np.float64),
        source_image_ids=np.concatenate(sources),
        seasons=np.concatenate(seasons),
        routes=np.concatenate(routes),
    )
    if dim and lib.dim != dim:
        raise DimensionMismatchError("inconsistent descriptor dimension")
    return lib


def save_library(library: ExperienceLibrary, path) -> None:
    """Cache a built library as .npz for reuse across CLI invocations."""
    np.savez(
        path,
        descriptors=library.descriptors,
        source_image_ids=library.source_image_ids,
        seasons=library.seasons,
        routes=library.routes,
    )


def load_library(path) -> ExperienceLibrary:
    with np.load(path) as data:
        return ExperienceLibrary(
            descriptors=np.ascontiguousarray(data["descriptors"], dtype=np.float64),
            source_image_ids=data["source_image_ids"],
            seasons=data["seasons"],
            routes=data["routes"],
        )


def cross_domain_filter(query_season: Season, query_route: int) -> DomainFilter:
    """Accept only labels whose season AND route differ from the query's."""
    return lambda lab: lab.season != query_season and lab.route != query_route


def cross_season_filter(query_season: Season) -> DomainFilter:
    """Accept labels from seasons other than the query's (any route)."""
    return lambda lab: lab.season != query_season


def cross_route_filter(query_route: int) -> DomainFilter:
    """Accept labels from routes other than the query's (any season)."""
    return lambda lab: lab.route != query_route


def full_filter() -> DomainFilter:
    return lambda lab: True


def make_filter(kind: str, query_season: Season, query_route: int) -> DomainFilter:
    """Vocabulary variants: cd / cs / cr / full."""
    kind = kind.lower()
    if kind == "cd":
        return cross_domain_filter(query_season, query_route)
    if kind == "cs":
        return cross_season_filter(query_season)
    if kind == "cr":
        return cross_route_filter(query_route)
    if kind == "full":
        return full_filter()
    raise ValueError(f"unknown vocabulary kind: {kind!r}")
