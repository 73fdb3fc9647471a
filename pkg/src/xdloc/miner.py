"""Exact k-nearest-neighbor mining against the experience library."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .library import ExperienceLibrary
from .model import Feature

# Absolute floor on the candidate-selection slack; a magnitude-dependent
# float32 round-off bound is added on top (see _candidate_margin). A wider
# margin only adds refinement work, never changes results.
_CANDIDATE_EPS = 1e-3

_GEMM_CHUNK = 8192

_F32_EPS = float(np.finfo(np.float32).eps)


@dataclass(frozen=True)
class NNExplanation:
    """Exact top-k of one feature: (library_id, squared distance) pairs,
    ascending by distance, ties by ascending id."""

    entries: tuple[tuple[int, float], ...]

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.entries)


def truncated_similarity(sq_distance: float, d0: float) -> float:
    """max(D0^2 - squared distance, 0); far matches clip to zero influence."""
    return max(d0 * d0 - sq_distance, 0.0)


def _approx_sq_distances(X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """||x - z||^2 for all pairs via the expansion trick; fast but inexact."""
    xx = np.einsum("ij,ij->i", X, X)[:, None]
    zz = np.einsum("ij,ij->i", Z, Z)[None, :]
    d2 = xx + zz - 2.0 * (X @ Z.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def _library_f32(library: ExperienceLibrary) -> tuple[np.ndarray, np.ndarray, float]:
    """float32 copy of the library plus squared norms, cached on the object."""
    cached = getattr(library, "_f32_cache", None)
    if cached is None:
        Z32 = np.ascontiguousarray(library.descriptors, dtype=np.float32)
        zz32 = np.einsum("ij,ij->i", Z32, Z32, dtype=np.float32)
        zz_max = float(
            np.max(np.einsum("ij,ij->i", library.descriptors, library.descriptors))
        )
        cached = (Z32, zz32, zz_max)
        object.__setattr__(library, "_f32_cache", cached)
    return cached


def _candidate_margin(xx64: np.ndarray, zz_max: float, dim: int) -> np.ndarray:
    """Per-row upper bound on |f32 expansion distance - true distance|.

    Each f32 term carries relative error <= eps32; over a dim-length dot
    product the accumulated error is bounded by c*eps32*(||x||^2 + ||z||^2)
    with c ~ dim. The factor 4 covers the two-sided comparison (both the
    k-th value and each candidate are perturbed) plus slack.
    """
    return 4.0 * (dim + 8) * _F32_EPS * (xx64 + zz_max) + _CANDIDATE_EPS


def _exact_row(x: np.ndarray, Z: np.ndarray) -> np.ndarray:
    diff = Z - x
    return np.einsum("ij,ij->i", diff, diff)


def _mine_chunk(
    X: np.ndarray,
    Z: np.ndarray,
    Z32: np.ndarray,
    zz32: np.ndarray,
    zz_max: float,
    k: int,
    excluded_rows: Optional[np.ndarray],
) -> list[NNExplanation]:
    # Approximate distances in float32 (candidate generation only): the
    # single-precision GEMM is ~2x faster, and the margin below guarantees
    # no true neighbor is dropped before exact float64 refinement.
    X32 = X.astype(np.float32)
    xx32 = np.einsum("ij,ij->i", X32, X32, dtype=np.float32)
    d2 = xx32[:, None] + zz32[None, :] - 2.0 * (X32 @ Z32.T)
    if excluded_rows is not None and len(excluded_rows):
        d2[:, excluded_rows] = np.inf
    xx64 = np.einsum("ij,ij->i", X, X)
    margins = _candidate_margin(xx64, zz_max, X.shape[1])
    out = []
    for r in range(len(X)):
        row = d2[r]
        kth = np.partition(row, k - 1)[k - 1]
        cand = np.flatnonzero(row <= kth + margins[r])
        exact = _exact_row(X[r], Z[cand])
        order = np.lexsort((cand, exact))[:k]
        entries = tuple(
            (int(cand[i]) + 1, float(exact[i])) for i in order
        )
        out.append(NNExplanation(entries))
    return out


def mine_batch(
    descriptors: np.ndarray,
    library: ExperienceLibrary,
    k: int,
    exclude_image_ids: Optional[set[int]] = None,
    threads: int = 1,
) -> list[NNExplanation]:
    """Exact top-k for a batch of descriptors, in input order.

    A blocked GEMM produces approximate distances; candidates near the k-th
    value are re-ranked with directly computed squared distances, so results
    are bit-identical to a naive linear scan regardless of blocking or
    thread count.
    """
    X = np.ascontiguousarray(descriptors, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    Z = library.descriptors
    Z32, zz32, zz_max = _library_f32(library)
    excluded_rows = None
    if exclude_image_ids:
        excluded_rows = np.flatnonzero(
            np.isin(library.source_image_ids, sorted(exclude_image_ids))
        )
    remaining = len(Z) - (0 if excluded_rows is None else len(excluded_rows))
    if not (1 <= k <= remaining):
        raise ValueError(f"k={k} exceeds usable library size {remaining}")

    chunks = [
        (start, X[start : start + _GEMM_CHUNK])
        for start in range(0, len(X), _GEMM_CHUNK)
    ]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(
                    lambda c: _mine_chunk(
                        c[1], Z, Z32, zz32, zz_max, k, excluded_rows
                    ),
                    chunks,
                )
            )
    else:
        parts = [
            _mine_chunk(c, Z, Z32, zz32, zz_max, k, excluded_rows)
            for _, c in chunks
        ]
    return [e for part in parts for e in part]


def mine(
    feature: Feature,
    library: ExperienceLibrary,
    k: int,
    exclude_image_ids: Optional[set[int]] = None,
) -> NNExplanation:
    """Exact top-k of one feature; ties broken by ascending library id."""
    return mine_batch(feature.desc, library, k, exclude_image_ids)[0]


def approx_error_profile(
    features_descriptors: np.ndarray,
    library: ExperienceLibrary,
    exclude_image_ids: Optional[set[int]] = None,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray, dict[int, float]]:
    """Nearest-neighbor Euclidean distance per input feature, sorted ascending.

    Returns (rank_percent, distances, decile_summary) ready for plotting; the
    curve shape shows how well the library explains the inputs.
    """
    if library.size < 1:
        raise ValueError("library is empty")
    mined = mine_batch(
        features_descriptors, library, 1, exclude_image_ids, threads=threads
    )
    dist = np.sort(np.sqrt([m.entries[0][1] for m in mined]))
    n = len(dist)
    rank_percent = 100.0 * (np.arange(1, n + 1)) / n
    deciles = {
        p: float(np.percentile(dist, p)) for p in range(0, 101, 10)
    }
    return rank_percent, dist, deciles
