"""NBNN image-to-class scoring under the spatial pyramid kernel."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .descriptor import FeatureRecord, Role, SceneDescriptor
from .errors import FingerprintMismatchError, XdlocError
from .index import InvertedIndex
from .library import ExperienceLibrary
from .model import ancestor_cell, cell_bbox


def feature_similarity(fq: FeatureRecord, fdb: FeatureRecord) -> float:
    """Max query weight over library IDs shared by the two explanations."""
    db_ids = {lid for lid, _ in fdb.entries}
    best = 0.0
    for lid, w in fq.entries:
        if lid in db_ids and w > best:
            best = w
    return best


def pyramid_weights(levels: int) -> np.ndarray:
    """Kernel weights: 1/2^L for level 0, 1/2^(L-l+1) for levels 1..L."""
    w = np.array(
        [1.0 / 2**levels]
        + [1.0 / 2 ** (levels - l + 1) for l in range(1, levels + 1)]
    )
    return w


def pyramid_kernel(level_sims: Sequence[float], levels: int) -> float:
    """Weighted sum of per-level similarities."""
    if len(level_sims) != levels + 1:
        raise ValueError("need one similarity per level 0..L")
    return float(np.dot(pyramid_weights(levels), np.asarray(level_sims, dtype=float)))


@dataclass
class RankedResult:
    """Full ranking over database images, scores non-increasing, ties by id."""

    query_image_id: int
    ranking: list[tuple[int, float]]
    level_sims: dict[int, list[float]] = field(default_factory=dict)

    def rank_of(self, image_id: int) -> int:
        """1-based position of an image in the ranking."""
        for pos, (iid, _) in enumerate(self.ranking, start=1):
            if iid == image_id:
                return pos
        raise KeyError(image_id)


def _query_entry_arrays(query: SceneDescriptor):
    """Flatten positive-weight query entries to parallel arrays."""
    feat_idx, lib_ids, weights, q_cells = [], [], [], []
    for fi, rec in enumerate(query.records):
        for lid, w in rec.entries:
            if w > 0.0:
                feat_idx.append(fi)
                lib_ids.append(lid)
                weights.append(w)
                q_cells.append(rec.finest_cell)
    return (
        np.asarray(feat_idx, dtype=np.int64),
        np.asarray(lib_ids, dtype=np.int64),
        np.asarray(weights, dtype=np.float64),
        np.asarray(q_cells, dtype=np.int64),
    )


def level_similarities(
    query: SceneDescriptor, index: InvertedIndex
) -> tuple[list[int], np.ndarray]:
    """Per-image, per-level similarity sums I_l for l = 0..L.

    For each query feature and level, the best (max) similarity over the
    candidate image's features lying in the same level-l cell is kept; those
    maxima are summed over query features. Returns (sorted image ids, matrix
    of shape (num_images, L+1)).
    """
    if query.library_fingerprint != index.library_fingerprint:
        raise FingerprintMismatchError(
            "query descriptor and index were built against different libraries"
        )
    if query.pyramid != index.pyramid:
        raise XdlocError("query descriptor and index disagree on pyramid config")
    levels = index.pyramid.levels
    image_ids = index.image_ids
    img_row = {iid: r for r, iid in enumerate(image_ids)}
    n_images = len(image_ids)
    n_feats = query.num_features
    sims = np.zeros((n_images, levels + 1))
    if n_feats == 0 or n_images == 0:
        return image_ids, sims

    feat_idx, lib_ids, weights, q_cells = _query_entry_arrays(query)
    if len(feat_idx) == 0:
        return image_ids, sims

    # Gather every (query entry, posting) pair into flat arrays.
    p_feat, p_img, p_cell, p_w = [], [], [], []
    for e in range(len(lib_ids)):
        imgs, cells, _ = index.posting_slice(int(lib_ids[e]))
        if len(imgs) == 0:
            continue
        p_feat.append(np.full(len(imgs), feat_idx[e]))
        p_img.append(imgs)
        p_cell.append(cells)
        p_w.append(np.full(len(imgs), weights[e]))
    if not p_feat:
        return image_ids, sims
    p_feat = np.concatenate(p_feat)
    p_img = np.concatenate(p_img)
    p_cell = np.concatenate(p_cell)
    p_w = np.concatenate(p_w)
    p_row = np.vectorize(img_row.__getitem__, otypes=[np.int64])(p_img)
    q_cell_per_pair = np.asarray(
        [query.records[f].finest_cell for f in p_feat], dtype=np.int64
    )

    best = np.zeros(n_feats * n_images)
    for l in range(levels + 1):
        match = ancestor_cell(p_cell, levels, l) == ancestor_cell(
            q_cell_per_pair, levels, l
        )
        best[:] = 0.0
        key = p_feat[match] * n_images + p_row[match]
        np.maximum.at(best, key, p_w[match])
        sims[:, l] = best.reshape(n_feats, n_images).sum(axis=0)
    return image_ids, sims


def level_similarity(
    query: SceneDescriptor, index: InvertedIndex, image_id: int, level: int
) -> float:
    """I_l of one candidate image (convenience wrapper)."""
    image_ids, sims = level_similarities(query, index)
    return float(sims[image_ids.index(image_id), level])


def rank(query: SceneDescriptor, index: InvertedIndex) -> RankedResult:
    """Kernel-score every database image and sort; zero-score images included."""
    image_ids, sims = level_similarities(query, index)
    w = pyramid_weights(index.pyramid.levels)
    scores = sims @ w
    order = sorted(range(len(image_ids)), key=lambda r: (-scores[r], image_ids[r]))
    return RankedResult(
        query_image_id=query.image_id,
        ranking=[(image_ids[r], float(scores[r])) for r in order],
        level_sims={image_ids[r]: [float(s) for s in sims[r]] for r in order},
    )


@dataclass(frozen=True)
class SubimagePair:
    """One pyramid cell's contribution to a query/candidate image similarity."""

    level: int
    cell: int
    weighted_contribution: float
    raw_similarity: float
    bbox: tuple[float, float, float, float]


def top_subimage_pairs(
    query: SceneDescriptor,
    image_id: int,
    index: InvertedIndex,
    n: int = 5,
) -> list[SubimagePair]:
    """Cells across all levels ranked by weighted per-cell contribution.

    The per-cell similarity I_{l,cell} sums, over query features in the cell,
    the best match against the candidate's features in the same cell; summing
    cells of one level recovers I_l.
    """
    if image_id not in index.images:
        raise XdlocError(f"image {image_id} is not indexed")
    levels = index.pyramid.levels
    kernel_w = pyramid_weights(levels)

    feat_idx, lib_ids, weights, q_cells = _query_entry_arrays(query)
    # best[(feature, level, cell)] accumulation restricted to one image
    best: dict[tuple[int, int, int], float] = {}
    for e in range(len(lib_ids)):
        imgs, cells, _ = index.posting_slice(int(lib_ids[e]))
        sel = cells[imgs == image_id]
        q_cell = int(q_cells[e])
        for db_cell in sel:
            for l in range(levels + 1):
                qa = int(ancestor_cell(np.int64(q_cell), levels, l))
                da = int(ancestor_cell(np.int64(db_cell), levels, l))
                if qa == da:
                    key = (int(feat_idx[e]), l, qa)
                    if weights[e] > best.get(key, 0.0):
                        best[key] = float(weights[e])

    per_cell: dict[tuple[int, int], float] = {}
    for (_, l, cell), w in best.items():
        per_cell[(l, cell)] = per_cell.get((l, cell), 0.0) + w

    pairs = [
        SubimagePair(
            level=l,
            cell=cell,
            weighted_contribution=float(kernel_w[l] * s),
            raw_similarity=float(s),
            bbox=cell_bbox(cell, l),
        )
        for (l, cell), s in per_cell.items()
    ]
    pairs.sort(key=lambda p: (-p.weighted_contribution, p.level, p.cell))
    return pairs[:n]


def explanation_histogram(
    queries: Sequence[SceneDescriptor], library: ExperienceLibrary
) -> dict[tuple[str, int], int]:
    """How often each library domain class explains the query features.

    Counts positive-weight entries (query role) or all entries (database
    role), grouped by the provenance (season, route) of the library feature.
    """
    counts: dict[tuple[str, int], int] = {}
    for sd in queries:
        for rec in sd.records:
            for lid, w in rec.entries:
                if sd.role is Role.QUERY and w <= 0.0:
                    continue
                _, label = library.provenance(lid)
                key = label.as_pair()
                counts[key] = counts.get(key, 0) + 1
    return counts
