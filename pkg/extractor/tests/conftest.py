import os

import cv2
import numpy as np
import pytest


def make_textured_image(rng: np.random.Generator, size: int = 128) -> np.ndarray:
    """Grayscale image with enough blob/edge structure for SIFT keypoints."""
    img = rng.integers(0, 256, size=(size, size), dtype=np.uint8)
    img = cv2.GaussianBlur(img, (0, 0), 2.0)
    for _ in range(12):
        center = tuple(int(c) for c in rng.integers(10, size - 10, size=2))
        radius = int(rng.integers(4, 14))
        shade = int(rng.integers(0, 256))
        cv2.circle(img, center, radius, shade, -1)
    return img


@pytest.fixture()
def image_dir(tmp_path):
    """Directory of 10 deterministic textured test images."""
    rng = np.random.default_rng(777)
    d = tmp_path / "images"
    os.makedirs(d)
    for i in range(10):
        cv2.imwrite(str(d / f"frame_{i:03d}.png"), make_textured_image(rng))
    return str(d)
