"""Batch SIFT extraction: image directory -> descriptor files + manifest fragment.

Each input image becomes one binary descriptor file holding its SIFT
keypoints (coordinates normalized by the image width/height, descriptors in
the standard 128-dimension layout at 0..255 scale).  A JSON manifest
fragment lists every output with its domain labels so the files can be
spliced directly into a dataset manifest.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import cv2
import numpy as np

from .xdsc import write_descriptor_file

log = logging.getLogger(__name__)

SEASON_TOKENS = ("SP", "SU", "AU", "WI", "OTHER")

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp")


@dataclass(frozen=True)
class ExtractionConfig:
    """Settings for one extraction run.

    `max_features` of 0 keeps every detected keypoint.  Detector thresholds
    are pinned (and echoed into the manifest fragment) so reruns over the
    same inputs are reproducible.
    """

    input_dir: str
    output_dir: str
    season: str = "OTHER"
    route: int = 0
    max_features: int = 0
    first_image_id: int = 0
    contrast_threshold: float = 0.04
    edge_threshold: float = 10.0
    threads: int = 1

    def __post_init__(self) -> None:
        if self.season not in SEASON_TOKENS:
            raise ValueError(
                f"season must be one of {SEASON_TOKENS}, got {self.season!r}"
            )
        if self.route < 0:
            raise ValueError("route must be >= 0")
        if self.max_features < 0:
            raise ValueError("max_features must be >= 0")


@dataclass
class ExtractionResult:
    """Outputs of one run: manifest entries, skip notes, file paths."""

    entries: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    files: list[str] = field(default_factory=list)


def _list_images(input_dir: str) -> list[str]:
    """Image filenames in lexicographic order; this order assigns ids."""
    names = [
        n
        for n in sorted(os.listdir(input_dir))
        if n.lower().endswith(IMAGE_EXTENSIONS)
    ]
    return names


def _extract_one(detector, image_path: str, max_features: int):
    """SIFT keypoints of one image, or None if it cannot be decoded.

    Returns (positions, scales, orientations, descriptors) with positions
    already normalized to [0, 1] by the image dimensions.  Records are
    sorted by (y, x, scale, orientation) so the file contents do not depend
    on detector-internal ordering.
    """
    gray = cv2.imread(image_path, cv2.IMREAD_GRAYSCALE)
    if gray is None:
        return None
    height, width = gray.shape[:2]
    keypoints, descriptors = detector.detectAndCompute(gray, None)
    if not keypoints:
        empty = np.zeros((0,), dtype=np.float64)
        return np.zeros((0, 2)), empty, empty, np.zeros((0, 128))
    positions = np.array([kp.pt for kp in keypoints], dtype=np.float64)
    positions[:, 0] /= width
    positions[:, 1] /= height
    np.clip(positions, 0.0, 1.0, out=positions)
    scales = np.array([kp.size for kp in keypoints], dtype=np.float64)
    orientations = np.array([kp.angle for kp in keypoints], dtype=np.float64)
    descriptors = np.asarray(descriptors, dtype=np.float64)
    if max_features and len(keypoints) > max_features:
        responses = np.array([kp.response for kp in keypoints])
        keep = np.argsort(-responses, kind="stable")[:max_features]
        positions, scales = positions[keep], scales[keep]
        orientations, descriptors = orientations[keep], descriptors[keep]
    order = np.lexsort(
        (orientations, scales, positions[:, 0], positions[:, 1])
    )
    return positions[order], scales[order], orientations[order], descriptors[order]


def extract(cfg: ExtractionConfig) -> ExtractionResult:
    """Run extraction over every image in `cfg.input_dir`.

    Writes one descriptor file per decodable image plus `fragment.json`
    describing the outputs.  Undecodable images are skipped with a warning
    recorded in the fragment's notes; images without any keypoint produce a
    valid empty descriptor file.
    """
    names = _list_images(cfg.input_dir)
    os.makedirs(cfg.output_dir, exist_ok=True)
    detector = cv2.SIFT_create(
        nfeatures=cfg.max_features,
        contrastThreshold=cfg.contrast_threshold,
        edgeThreshold=cfg.edge_threshold,
    )

    def work(name: str):
        return _extract_one(
            detector, os.path.join(cfg.input_dir, name), cfg.max_features
        )

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            outputs = list(pool.map(work, names))
    else:
        outputs = [work(name) for name in names]

    result = ExtractionResult()
    image_id = cfg.first_image_id
    for name, out in zip(names, outputs):
        if out is None:
            note = f"skipped undecodable image: {name}"
            log.warning("%s", note)
            result.notes.append(note)
            continue
        positions, scales, orientations, descriptors = out
        stem = os.path.splitext(name)[0]
        out_name = f"{stem}.xdsc"
        out_path = os.path.join(cfg.output_dir, out_name)
        write_descriptor_file(out_path, positions, descriptors, scales, orientations)
        result.files.append(out_path)
        result.entries.append(
            {
                "image_id": image_id,
                "path": out_name,
                "source": name,
                "season": cfg.season,
                "route": cfg.route,
                "num_features": int(len(descriptors)),
            }
        )
        image_id += 1

    fragment = {
        "entries": result.entries,
        "notes": result.notes,
        "extraction": {
            "detector": "SIFT",
            "max_features": cfg.max_features,
            "contrast_threshold": cfg.contrast_threshold,
            "edge_threshold": cfg.edge_threshold,
        },
    }
    with open(os.path.join(cfg.output_dir, "fragment.json"), "w") as fh:
        json.dump(fragment, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return result
