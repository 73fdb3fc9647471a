"""Command-line entry point for every pipeline stage.

Flag defaults follow the method's fixed parameters (K=10, K'=3, D0=200,
L=2). Any flag default can be overridden for CI via an environment variable
named XDLOC_<FLAG> (dashes become underscores, upper-cased), e.g.
XDLOC_LEVELS=0.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from . import evalharness
from .bow import bow_rank, train_vocabulary
from .descriptor import describe_database, describe_query
from .errors import XdlocError
from .evalharness import (
    DomainTransform,
    ExperimentConfig,
    SyntheticWorldConfig,
    World,
    generate_world,
    run_experiment,
    write_error_profile_csv,
    write_histogram_csv,
    write_world,
)
from .formats import load_manifest
from .index import build_index, load_index, save_index
from .library import build_library, load_library, make_filter, save_library
from .matcher import explanation_histogram, rank, top_subimage_pairs
from .miner import approx_error_profile
from .model import MinerConfig, PyramidConfig, Season


def _env(flag: str, default):
    v = os.environ.get("XDLOC_" + flag.replace("-", "_").upper())
    if v is None:
        return default
    return type(default)(v) if default is not None else v


def _positive(kind):
    def parse(text):
        val = kind(text)
        if val <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return val

    return parse


def _add_miner_flags(p: argparse.ArgumentParser):
    p.add_argument("--k", type=_positive(int), default=_env("k", 10),
                   help="query neighbors per feature (method default: 10)")
    p.add_argument("--k-prime", type=_positive(int), default=_env("k-prime", 3),
                   help="database neighbors per feature (method default: 3)")
    p.add_argument("--d0", type=_positive(float), default=_env("d0", 200.0),
                   help="truncation distance at byte scale (method default: 200)")
    p.add_argument("--levels", type=int, default=_env("levels", 2),
                   help="pyramid depth L; 0 disables spatial layout "
                        "(method default: 2)")
    p.add_argument("--threads", type=_positive(int),
                   default=_env("threads", os.cpu_count() or 1),
                   help="worker threads; never changes results")


def _miner(args) -> MinerConfig:
    return MinerConfig(k=args.k, k_prime=args.k_prime, d0=args.d0)


def _world_config(path) -> SyntheticWorldConfig:
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("query_transform", "database_transform", "library_transform"):
        if key in doc:
            doc[key] = DomainTransform(**doc[key])
    if "library_domains" in doc:
        doc["library_domains"] = tuple(tuple(p) for p in doc["library_domains"])
    for key in ("query_domain", "database_domain"):
        if key in doc:
            doc[key] = tuple(doc[key])
    return SyntheticWorldConfig(**doc)


def _world_from_manifest(path) -> World:
    m = load_manifest(path)
    return World(m.library, m.database, m.query, m.relevance)


def _write_ranking_csv(path, ranked):
    with open(path, "w", newline="") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["rank", "image_id", "score"])
        for pos, (iid, score) in enumerate(ranked.ranking, start=1):
            wtr.writerow([pos, iid, f"{score:.9g}"])


def cmd_build_library(args) -> int:
    m = load_manifest(args.manifest)
    flt = None
    if args.vocab != "full":
        flt = make_filter(args.vocab, Season(args.query_season), args.query_route)
    else:
        flt = make_filter("full", Season.OTHER, 0)
    lib = build_library(m.library, flt)
    save_library(lib, args.output)
    print(f"library V={lib.size} d={lib.dim} fingerprint={lib.fingerprint():#018x}")
    return 0


def cmd_index(args) -> int:
    m = load_manifest(args.manifest)
    lib = load_library(args.library)
    cfg = _miner(args)
    pyr = PyramidConfig(args.levels)
    descs = [
        describe_database(im, lib, cfg, pyr, threads=args.threads)
        for im in m.database
    ]
    idx = build_index(descs, lib.size, lib.dim)
    save_index(idx, args.output)
    print(f"index images={len(idx.images)} postings={idx.num_postings}")
    return 0


def cmd_query(args) -> int:
    lib = load_library(args.library)
    idx = load_index(args.index, library=lib)
    m = load_manifest(args.manifest)
    cfg = dataclasses.replace(idx.miner, k=args.k, d0=args.d0)
    os.makedirs(args.output_dir, exist_ok=True)
    pyr = PyramidConfig(args.levels)
    if pyr != idx.pyramid:
        raise XdlocError(
            f"--levels {args.levels} does not match index pyramid "
            f"L={idx.pyramid.levels}"
        )
    summary = []
    for q in m.query:
        qd = describe_query(q, lib, cfg, pyr, threads=args.threads)
        rr = rank(qd, idx)
        _write_ranking_csv(
            os.path.join(args.output_dir, f"ranking_{q.image_id:06d}.csv"), rr
        )
        summary.append(
            {"query_image_id": q.image_id, "top1": rr.ranking[0][0],
             "top1_score": rr.ranking[0][1]}
        )
    with open(os.path.join(args.output_dir, "query_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"ranked {len(summary)} queries over {len(idx.images)} images")
    return 0


def cmd_evaluate(args) -> int:
    if bool(args.world_config) == bool(args.manifest):
        raise UsageError("provide exactly one of --world-config or --manifest")
    if args.world_config:
        world = generate_world(_world_config(args.world_config))
    else:
        world = _world_from_manifest(args.manifest)
    exp = ExperimentConfig(
        method=args.method,
        miner=_miner(args),
        pyramid=PyramidConfig(args.levels),
        vocab_words=args.words,
        vocab_seed=args.seed,
        threads=args.threads,
    )
    report = run_experiment(world, exp, output_dir=args.output_dir)
    print(
        f"method={report['method']} queries={report['num_queries']} "
        f"anr={report.get('anr', float('nan')):.3f} "
        f"map={report.get('map', float('nan')):.4f}"
    )
    return 0


def cmd_baseline(args) -> int:
    world = _world_from_manifest(args.manifest)
    exp = ExperimentConfig(method="TFIDF", vocab_words=args.words,
                           vocab_seed=args.seed)
    report = run_experiment(world, exp, output_dir=args.output_dir)
    print(f"tfidf anr={report.get('anr', float('nan')):.3f}")
    return 0


def cmd_gen_world(args) -> int:
    world = generate_world(_world_config(args.config))
    path = write_world(world, args.output_dir)
    print(f"wrote {path}")
    return 0


def cmd_analyze_errors(args) -> int:
    m = load_manifest(args.manifest)
    lib = load_library(args.library) if args.library else build_library(m.library)
    descs = np.concatenate(
        [q.descriptors for q in m.query if q.num_features]
    )
    rp, dist, deciles = approx_error_profile(descs, lib, threads=args.threads)
    write_error_profile_csv(args.output, rp, dist)
    print(" ".join(f"p{p}={v:.2f}" for p, v in sorted(deciles.items())))
    return 0


def cmd_analyze_usage(args) -> int:
    m = load_manifest(args.manifest)
    lib = load_library(args.library) if args.library else build_library(m.library)
    cfg = _miner(args)
    pyr = PyramidConfig(args.levels)
    qds = [describe_query(q, lib, cfg, pyr, threads=args.threads) for q in m.query]
    counts = explanation_histogram(qds, lib)
    write_histogram_csv(args.output, counts)
    print(f"histogram classes={len(counts)} total={sum(counts.values())}")
    return 0


def cmd_report_subimages(args) -> int:
    lib = load_library(args.library)
    idx = load_index(args.index, library=lib)
    m = load_manifest(args.manifest)
    try:
        q = next(im for im in m.query if im.image_id == args.query_id)
    except StopIteration:
        raise XdlocError(f"query image {args.query_id} not in manifest") from None
    cfg = dataclasses.replace(idx.miner, k=args.k, d0=args.d0)
    qd = describe_query(q, lib, cfg, idx.pyramid, threads=args.threads)
    pairs = top_subimage_pairs(qd, args.candidate_id, idx, n=args.top_n)
    doc = [
        {
            "level": p.level,
            "cell": p.cell,
            "weighted_contribution": p.weighted_contribution,
            "raw_similarity": p.raw_similarity,
            "bbox": list(p.bbox),
        }
        for p in pairs
    ]
    with open(args.output, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    print(f"wrote {len(doc)} sub-image pairs to {args.output}")
    return 0


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xdloc",
        description="Cross-domain place recognition over raw-feature libraries",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-library", help="flatten manifest library images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--vocab", choices=["cd", "cs", "cr", "full"],
                   default=_env("vocab", "full"))
    p.add_argument("--query-season", default=_env("query-season", "OTHER"))
    p.add_argument("--query-route", type=int, default=_env("query-route", 0))
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_build_library)

    p = sub.add_parser("index", help="build the inverted index over the database")
    p.add_argument("--manifest", required=True)
    p.add_argument("--library", required=True)
    p.add_argument("--output", required=True)
    _add_miner_flags(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="rank database images for each query")
    p.add_argument("--index", required=True)
    p.add_argument("--library", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--output-dir", required=True)
    _add_miner_flags(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("evaluate", help="end-to-end experiment with metrics")
    p.add_argument("--world-config", help="synthetic world JSON config")
    p.add_argument("--manifest", help="real dataset manifest with relevance")
    p.add_argument("--method", choices=list(evalharness.METHODS), default="CD_SD")
    p.add_argument("--words", type=_positive(int), default=_env("words", 1000))
    p.add_argument("--seed", type=int, default=_env("seed", 0))
    p.add_argument("--output-dir", required=True)
    _add_miner_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", help="TF-IDF bag-of-words comparator")
    p.add_argument("--manifest", required=True)
    p.add_argument("--words", type=_positive(int), default=_env("words", 1000))
    p.add_argument("--seed", type=int, default=_env("seed", 0))
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("gen-world", help="write a synthetic dataset to disk")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_gen_world)

    p = sub.add_parser("analyze-errors", help="NN-distance profile of the queries")
    p.add_argument("--manifest", required=True)
    p.add_argument("--library")
    p.add_argument("--output", required=True)
    _add_miner_flags(p)
    p.set_defaults(func=cmd_analyze_errors)

    p = sub.add_parser("analyze-usage", help="library-domain usage histogram")
    p.add_argument("--manifest", required=True)
    p.add_argument("--library")
    p.add_argument("--output", required=True)
    _add_miner_flags(p)
    p.set_defaults(func=cmd_analyze_usage)

    p = sub.add_parser("report-subimages",
                       help="top contributing sub-image pairs for one candidate")
    p.add_argument("--index", required=True)
    p.add_argument("--library", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--query-id", type=int, required=True)
    p.add_argument("--candidate-id", type=int, required=True)
    p.add_argument("--top-n", type=_positive(int), default=5)
    p.add_argument("--output", required=True)
    _add_miner_flags(p)
    p.set_defaults(func=cmd_report_subimages)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses exit 2 for usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except (XdlocError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
