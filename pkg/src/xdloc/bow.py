"""TF-IDF bag-of-visual-words baseline: k-means vocabulary + cosine ranking."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FormatError, XdlocError
from .library import ExperienceLibrary
from .matcher import RankedResult
from .miner import _approx_sq_distances
from .model import ImageRecord

MAGIC = b"XDVW"
VERSION = 1


@dataclass
class Vocabulary:
    centroids: np.ndarray  # (W, d)
    seed: int
    training_fingerprint: int
    objective_history: list[float] | None = None  # not persisted

    @property
    def size(self) -> int:
        return len(self.centroids)


def _assign(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest centroid per row; ties go to the lower centroid index."""
    return np.argmin(_approx_sq_distances(X, centroids), axis=1)


def train_vocabulary(
    library: ExperienceLibrary,
    num_words: int,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-6,
) -> Vocabulary:
    """Lloyd k-means with seeded init; empty clusters are reseeded from the
    point farthest from its assigned centroid."""
    X = library.descriptors
    if library.size < num_words:
        raise XdlocError(
            f"library size {library.size} smaller than vocabulary size {num_words}"
        )
    rng = np.random.default_rng(seed)
    centroids = X[rng.choice(library.size, size=num_words, replace=False)].copy()
    prev_obj = np.inf
    history: list[float] = []
    for _ in range(max_iters):
        d2 = _approx_sq_distances(X, centroids)
        labels = np.argmin(d2, axis=1)
        dists = d2[np.arange(len(X)), labels]
        obj = float(dists.sum())
        history.append(obj)
        for w in range(num_words):
            members = labels == w
            if members.any():
                centroids[w] = X[members].mean(axis=0)
            else:
                far = int(np.argmax(dists))
                centroids[w] = X[far]
                dists[far] = 0.0
        if prev_obj - obj <= tol * max(obj, 1.0):
            break
        prev_obj = obj
    return Vocabulary(
        centroids=centroids,
        seed=seed,
        training_fingerprint=library.fingerprint(),
        objective_history=history,
    )


def _tf(image: ImageRecord, vocab: Vocabulary) -> np.ndarray:
    counts = np.zeros(vocab.size)
    if image.num_features:
        words = _assign(image.descriptors, vocab.centroids)
        np.add.at(counts, words, 1.0)
    return counts


def bow_rank(
    query: ImageRecord,
    database: Sequence[ImageRecord],
    vocab: Vocabulary,
) -> RankedResult:
    """Quantize, tf-idf weight, L2-normalize, rank by cosine similarity.

    idf = ln((1 + #docs) / (1 + df)) + 1, smoothed so unseen words stay finite.
    """
    tfs = np.stack([_tf(im, vocab) for im in database])
    df = (tfs > 0).sum(axis=0)
    idf = np.log((1.0 + len(database)) / (1.0 + df)) + 1.0
    db_vecs = tfs * idf
    norms = np.linalg.norm(db_vecs, axis=1)
    db_vecs = np.divide(
        db_vecs, norms[:, None], out=np.zeros_like(db_vecs), where=norms[:, None] > 0
    )
    q = _tf(query, vocab) * idf
    qn = np.linalg.norm(q)
    if qn > 0:
        q = q / qn
    scores = db_vecs @ q
    order = sorted(
        range(len(database)), key=lambda r: (-scores[r], database[r].image_id)
    )
    return RankedResult(
        query_image_id=query.image_id,
        ranking=[(database[r].image_id, float(scores[r])) for r in order],
    )


def save_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "wb") as fh:
        w, d = vocab.centroids.shape
        fh.write(struct.pack("<4sIIIqQ", MAGIC, VERSION, w, d, vocab.seed,
                             vocab.training_fingerprint))
        fh.write(np.ascontiguousarray(vocab.centroids, dtype="<f8").tobytes())


def load_vocabulary(path) -> Vocabulary:
    with open(path, "rb") as fh:
        head = fh.read(32)
        if len(head) != 32:
            raise FormatError("truncated vocabulary header")
        magic, version, w, d, seed, fp = struct.unpack("<4sIIIqQ", head)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"unsupported vocabulary version {version}")
        body = fh.read(8 * w * d)
        if len(body) != 8 * w * d:
            raise FormatError("truncated vocabulary centroids")
        centroids = np.frombuffer(body, dtype="<f8").reshape(w, d).copy()
    return Vocabulary(centroids=centroids, seed=seed, training_fingerprint=fp)
