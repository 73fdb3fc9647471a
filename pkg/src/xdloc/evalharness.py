"""Retrieval metrics, synthetic cross-domain worlds, and experiment runs."""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from . import bow as bow_mod
from .descriptor import describe_database, describe_query
from .errors import XdlocError
from .index import build_index
from .library import build_library
from .matcher import RankedResult, explanation_histogram, rank, top_subimage_pairs
from .miner import approx_error_profile
from .model import DomainLabel, ImageRecord, MinerConfig, PyramidConfig, Season


def anr(
    rankings: Sequence[RankedResult],
    relevance: dict[int, set[int]],
    db_size: int,
) -> float:
    """Averaged normalized rank, in percent; lower is better.

    Uses the best (minimum) 1-based rank over each query's relevant set:
    retrieving a single relevant image suffices for localization.
    """
    if db_size < 1:
        raise ValueError("db_size must be >= 1")
    vals = []
    for rr in rankings:
        rel = relevance.get(rr.query_image_id)
        if not rel:
            raise XdlocError(f"query {rr.query_image_id} has an empty relevance set")
        best = min(rr.rank_of(i) for i in rel)
        vals.append(100.0 * best / db_size)
    return float(np.mean(vals))


def average_precision(ranking: RankedResult, relevant: set[int]) -> float:
    hits = 0
    ap = 0.0
    for pos, (iid, _) in enumerate(ranking.ranking, start=1):
        if iid in relevant:
            hits += 1
            ap += hits / pos
    return ap / len(relevant) if relevant else 0.0


def mean_average_precision(
    rankings: Sequence[RankedResult], relevance: dict[int, set[int]]
) -> float:
    """Standard mAP; with one relevant item per query, AP = 1/rank."""
    aps = []
    for rr in rankings:
        rel = relevance.get(rr.query_image_id)
        if not rel:
            raise XdlocError(f"query {rr.query_image_id} has an empty relevance set")
        aps.append(average_precision(rr, rel))
    return float(np.mean(aps))


@dataclass(frozen=True)
class DomainTransform:
    """How one domain (season, route) distorts a place's base features."""

    noise_sigma: float = 0.0
    gain: float = 1.0
    dropout_rate: float = 0.0
    replacement_rate: float = 0.0
    keypoint_jitter: float = 0.0

    def __post_init__(self):
        for r in (self.dropout_rate, self.replacement_rate):
            if not 0.0 <= r <= 1.0:
                raise ValueError("rates must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass
class SyntheticWorldConfig:
    """Stand-in for a real multi-season multi-route image collection."""

    num_places: int
    features_per_image: int
    dim: int = 32
    seed: int = 0
    descriptor_scale: float = 255.0
    query_domain: tuple[str, int] = ("SP", 1)
    database_domain: tuple[str, int] = ("AU", 1)
    library_domains: tuple[tuple[str, int], ...] = (("SU", 2), ("WI", 3))
    query_transform: DomainTransform = field(default_factory=DomainTransform)
    database_transform: DomainTransform = field(default_factory=DomainTransform)
    library_transform: DomainTransform = field(
        default_factory=lambda: DomainTransform(noise_sigma=20.0)
    )
    relevance_window: int = 0
    shuffled_distractors: int = 0

    def __post_init__(self):
        if self.num_places < 1:
            raise ValueError("num_places must be >= 1")
        if self.features_per_image < 1:
            raise ValueError("features_per_image must be >= 1")


@dataclass
class World:
    library_images: list[ImageRecord]
    database_images: list[ImageRecord]
    query_images: list[ImageRecord]
    relevance: dict[int, set[int]]
    config: Optional[SyntheticWorldConfig] = None


def _domain(pair: tuple[str, int]) -> DomainLabel:
    return DomainLabel(Season(pair[0]), pair[1])


def _transformed(
    base_pos: np.ndarray,
    base_desc: np.ndarray,
    tr: DomainTransform,
    scale: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    n, d = base_desc.shape
    keep = rng.random(n) >= tr.dropout_rate
    if not keep.any():
        keep[rng.integers(n)] = True
    pos = base_pos[keep].copy()
    desc = base_desc[keep].copy()
    if tr.keypoint_jitter > 0:
        pos = np.clip(pos + rng.normal(0, tr.keypoint_jitter, pos.shape), 0.0, 1.0)
    desc = tr.gain * desc
    if tr.noise_sigma > 0:
        desc = desc + rng.normal(0, tr.noise_sigma, desc.shape)
    replaced = rng.random(len(desc)) < tr.replacement_rate
    if replaced.any():
        desc[replaced] = rng.uniform(0, scale, (int(replaced.sum()), d))
    return pos, np.clip(desc, 0.0, scale)


def generate_world(cfg: SyntheticWorldConfig) -> World:
    """Deterministic synthetic world with a cross-domain library.

    Each place has one base feature set; per-domain copies are produced by
    that domain's transform. Library domains are disjoint in both season and
    route from the query/database domains. Distractor database images reuse a
    place's database features with shuffled positions (and intentionally get
    the smallest image ids, so bag-level ties resolve toward them).
    """
    for s, r in cfg.library_domains:
        for qs, qr in (cfg.query_domain, cfg.database_domain):
            if s == qs or r == qr:
                raise ValueError(
                    f"library domain {(s, r)} overlaps query/database domain"
                )
    rng = np.random.default_rng(cfg.seed)
    P, N, d = cfg.num_places, cfg.features_per_image, cfg.dim
    bases = [
        (rng.random((N, 2)), rng.uniform(0, cfg.descriptor_scale, (N, d)))
        for _ in range(P)
    ]

    library_images = []
    lib_id = 0
    for dom in cfg.library_domains:
        for p in range(P):
            pos, desc = _transformed(*bases[p], cfg.library_transform,
                                     cfg.descriptor_scale, rng)
            library_images.append(
                ImageRecord(lib_id, pos, desc, _domain(dom), place_id=p)
            )
            lib_id += 1

    M = cfg.shuffled_distractors
    database_images = []
    db_dom = _domain(cfg.database_domain)
    real_db: list[ImageRecord] = []
    for p in range(P):
        pos, desc = _transformed(*bases[p], cfg.database_transform,
                                 cfg.descriptor_scale, rng)
        real_db.append(ImageRecord(M + p, pos, desc, db_dom, place_id=p))
    for j in range(M):
        src = real_db[j % P]
        perm = rng.permutation(src.num_features)
        database_images.append(
            ImageRecord(j, src.positions[perm], src.descriptors.copy(), db_dom,
                        place_id=None)
        )
    database_images.extend(real_db)

    query_images = []
    relevance: dict[int, set[int]] = {}
    q_dom = _domain(cfg.query_domain)
    w = cfg.relevance_window
    for p in range(P):
        pos, desc = _transformed(*bases[p], cfg.query_transform,
                                 cfg.descriptor_scale, rng)
        query_images.append(ImageRecord(p, pos, desc, q_dom, place_id=p))
        relevance[p] = {
            M + q for q in range(max(0, p - w), min(P, p + w + 1))
        }
    return World(library_images, database_images, query_images, relevance, cfg)


METHODS = ("CD_SD", "NBNN_SD", "TFIDF")


@dataclass
class ExperimentConfig:
    method: str = "CD_SD"
    miner: MinerConfig = field(default_factory=MinerConfig)
    pyramid: PyramidConfig = field(default_factory=PyramidConfig)
    vocab_words: int = 1000
    vocab_seed: int = 0
    max_queries: Optional[int] = None
    threads: int = 1


def run_experiment(
    world: World,
    exp: ExperimentConfig,
    output_dir: Optional[str] = None,
) -> dict:
    """End-to-end pipeline on one world: build, rank every query, score.

    The returned report (and report.json) is a pure function of world and
    config; wall-clock timings go into a separate timings.json sidecar so
    reruns stay byte-identical.
    """
    if exp.method not in METHODS:
        raise ValueError(f"unknown method {exp.method!r}; pick one of {METHODS}")
    queries = world.query_images
    if exp.max_queries is not None:
        queries = queries[: exp.max_queries]
    db_size = len(world.database_images)
    rankings: list[RankedResult] = []
    timings: list[float] = []

    if exp.method == "TFIDF":
        library = build_library(world.library_images)
        words = min(exp.vocab_words, library.size)
        vocab = bow_mod.train_vocabulary(library, words, seed=exp.vocab_seed)
        for q in queries:
            t0 = time.perf_counter()
            rankings.append(bow_mod.bow_rank(q, world.database_images, vocab))
            timings.append(time.perf_counter() - t0)
    else:
        pyr = PyramidConfig(0) if exp.method == "NBNN_SD" else exp.pyramid
        library = build_library(world.library_images)
        db_descs = [
            describe_database(im, library, exp.miner, pyr, threads=exp.threads)
            for im in world.database_images
        ]
        index = build_index(db_descs, library.size, library.dim)
        for q in queries:
            t0 = time.perf_counter()
            qd = describe_query(q, library, exp.miner, pyr, threads=exp.threads)
            rankings.append(rank(qd, index))
            timings.append(time.perf_counter() - t0)

    report: dict = {
        "method": exp.method,
        "world_seed": world.config.seed if world.config else None,
        "num_places": world.config.num_places if world.config else None,
        "db_size": db_size,
        "num_queries": len(queries),
        "per_query": [],
    }
    if queries:
        per_query = []
        for rr in rankings:
            rel = world.relevance[rr.query_image_id]
            best = min(rr.rank_of(i) for i in rel)
            per_query.append(
                {
                    "query_image_id": rr.query_image_id,
                    "best_relevant_rank": best,
                    "top1_image_id": rr.ranking[0][0],
                    "top1_score": rr.ranking[0][1],
                }
            )
        report["per_query"] = per_query
        report["anr"] = anr(rankings, world.relevance, db_size)
        report["map"] = mean_average_precision(rankings, world.relevance)

    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        with open(os.path.join(output_dir, "report.json"), "w") as fh:
            json.dump(report, fh, indent=1, sort_keys=True)
            fh.write("\n")
        if timings:
            with open(os.path.join(output_dir, "timings.json"), "w") as fh:
                json.dump(
                    {
                        "p50_s": float(np.percentile(timings, 50)),
                        "p90_s": float(np.percentile(timings, 90)),
                        "p99_s": float(np.percentile(timings, 99)),
                    },
                    fh,
                    indent=1,
                )
                fh.write("\n")
        with open(os.path.join(output_dir, "per_query_ranks.csv"), "w",
                  newline="") as fh:
            wtr = csv.writer(fh)
            wtr.writerow(["query_image_id", "best_relevant_rank", "top1_image_id"])
            for row in report["per_query"]:
                wtr.writerow(
                    [row["query_image_id"], row["best_relevant_rank"],
                     row["top1_image_id"]]
                )
    return report


def write_world(world: World, output_dir: str) -> str:
    """Persist a world as descriptor files plus a manifest; returns its path."""
    from .formats import save_manifest, write_descriptor_file

    os.makedirs(output_dir, exist_ok=True)
    doc: dict = {"library": [], "database": [], "query": [], "relevance": {}}
    for name, images in (
        ("library", world.library_images),
        ("database", world.database_images),
        ("query", world.query_images),
    ):
        sub = os.path.join(output_dir, name)
        os.makedirs(sub, exist_ok=True)
        for im in images:
            rel = os.path.join(name, f"{im.image_id:06d}.xdsc")
            write_descriptor_file(
                os.path.join(output_dir, rel), im.positions, im.descriptors
            )
            entry = {
                "image_id": im.image_id,
                "path": rel,
                "season": im.domain.season.value,
                "route": im.domain.route,
            }
            if im.place_id is not None:
                entry["place_id"] = im.place_id
            doc[name].append(entry)
    doc["relevance"] = {
        str(q): sorted(rel) for q, rel in world.relevance.items()
    }
    path = os.path.join(output_dir, "manifest.json")
    save_manifest(path, doc)
    return path


def write_error_profile_csv(path, rank_percent: np.ndarray, dist: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["rank_percent", "distance"])
        for rp, d in zip(rank_percent, dist):
            wtr.writerow([f"{rp:.6f}", f"{d:.6f}"])


def write_histogram_csv(path, counts: dict[tuple[str, int], int]) -> None:
    with open(path, "w", newline="") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["season", "route", "count"])
        for (season, route), c in sorted(counts.items()):
            wtr.writerow([season, route, c])
