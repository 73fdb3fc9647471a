"""Command-line front end for batch SIFT extraction."""

from __future__ import annotations

import argparse
import logging
import sys

from .extract import SEASON_TOKENS, ExtractionConfig, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xdextract",
        description=(
            "Extract SIFT features from an image directory into binary "
            "descriptor files plus a JSON manifest fragment."
        ),
    )
    parser.add_argument("--input-dir", required=True, help="directory of images")
    parser.add_argument(
        "--output-dir", required=True, help="where descriptor files are written"
    )
    parser.add_argument(
        "--season",
        default="OTHER",
        choices=SEASON_TOKENS,
        help="season label applied to every image",
    )
    parser.add_argument(
        "--route", type=int, default=0, help="route label applied to every image"
    )
    parser.add_argument(
        "--max-features",
        type=int,
        default=0,
        help="keep at most this many keypoints per image (0 = unlimited)",
    )
    parser.add_argument(
        "--first-image-id",
        type=int,
        default=0,
        help="image id assigned to the lexicographically first image",
    )
    parser.add_argument(
        "--contrast-threshold", type=float, default=0.04,
        help="SIFT contrast threshold",
    )
    parser.add_argument(
        "--edge-threshold", type=float, default=10.0,
        help="SIFT edge threshold",
    )
    parser.add_argument(
        "--threads", type=int, default=1, help="parallel image workers"
    )
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = ExtractionConfig(
            input_dir=args.input_dir,
            output_dir=args.output_dir,
            season=args.season,
            route=args.route,
            max_features=args.max_features,
            first_image_id=args.first_image_id,
            contrast_threshold=args.contrast_threshold,
            edge_threshold=args.edge_threshold,
            threads=args.threads,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        result = extract(cfg)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"wrote {len(result.files)} descriptor files "
        f"({len(result.notes)} skipped) to {cfg.output_dir}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
