"""Independent reference implementations used to check the fast paths.

Everything here is written naively and stays deliberately separate from the
package internals: brute-force linear scans, dense vector materialization,
and direct formula evaluation.
"""

from __future__ import annotations

import math

import numpy as np


def brute_force_knn(x, Z, k, excluded_rows=()):
    """Top-k by squared Euclidean distance via a plain linear scan.

    Returns [(library_id, sq_distance)] with 1-based ids, ascending distance,
    ties by ascending id.
    """
    excluded = set(excluded_rows)
    dists = []
    for row in range(len(Z)):
        if row in excluded:
            continue
        d = float(np.sum((np.asarray(Z[row], dtype=float) - np.asarray(x, dtype=float)) ** 2))
        dists.append((d, row + 1))
    dists.sort()
    return [(lid, d) for d, lid in dists[:k]]


def dense_vector(entries, V):
    """Materialize one sparse explanation as a dense V-dim vector."""
    v = np.zeros(V)
    for lid, w in entries:
        v[lid - 1] = w
    return v


def pair_similarity(fq_vec, fdb_vec):
    """max_i fq[i] * fdb[i]."""
    return float(np.max(fq_vec * fdb_vec)) if len(fq_vec) else 0.0


def grid_cell(pos, level):
    n = 2**level
    cx = min(int(math.floor(pos[0] * n)), n - 1)
    cy = min(int(math.floor(pos[1] * n)), n - 1)
    return cy * n + cx


def dense_level_similarity(query_records, db_records, V, level):
    """Sum over query features of the best same-cell match at one level."""
    total = 0.0
    for q in query_records:
        qcell = grid_cell(q["pos"], level)
        best = 0.0
        qv = dense_vector(q["entries"], V)
        for db in db_records:
            if grid_cell(db["pos"], level) != qcell:
                continue
            s = pair_similarity(qv, dense_vector(db["entries"], V))
            best = max(best, s)
        total += best
    return total


def dense_kernel(level_sims, L):
    """Direct substitution into the pyramid kernel."""
    total = (1.0 / 2**L) * level_sims[0]
    for l in range(1, L + 1):
        total += (1.0 / 2 ** (L - l + 1)) * level_sims[l]
    return total


def incremental_kernel(level_sims, L):
    """Equivalent 'new matches' form of the kernel."""
    total = level_sims[L]
    for l in range(L):
        total += (1.0 / 2 ** (L - l)) * (level_sims[l] - level_sims[l + 1])
    return total


def dense_rank(query_sd, db_sds, V, L):
    """Full dense scoring of every database descriptor.

    Takes SceneDescriptor objects but touches only records/pos/entries;
    returns [(image_id, score)] sorted by (-score, image_id).
    """
    q_records = [
        {"pos": r.pos, "entries": r.entries} for r in query_sd.records
    ]
    scored = []
    for sd in db_sds:
        db_records = [{"pos": r.pos, "entries": r.entries} for r in sd.records]
        sims = [
            dense_level_similarity(q_records, db_records, V, l)
            for l in range(L + 1)
        ]
        scored.append((sd.image_id, dense_kernel(sims, L), sims))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return [(iid, score) for iid, score, _ in scored], {
        iid: sims for iid, _, sims in scored
    }
