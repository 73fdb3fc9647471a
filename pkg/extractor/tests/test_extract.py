import json
import os

import cv2
import numpy as np
import pytest

from xdextract import ExtractionConfig, extract, read_descriptor_file
from xdextract.cli import main

from conftest import make_textured_image


def test_extract_writes_one_file_per_image(image_dir, tmp_path):
    out = str(tmp_path / "out")
    result = extract(ExtractionConfig(input_dir=image_dir, output_dir=out,
                                      season="SU", route=2))
    assert len(result.files) == 10
    assert result.notes == []
    for entry, path in zip(result.entries, result.files):
        frag = read_descriptor_file(path)
        assert frag["descriptors"].shape[1] == 128
        assert entry["num_features"] == len(frag["descriptors"]) > 0
        assert entry["season"] == "SU" and entry["route"] == 2


def test_image_ids_follow_lexicographic_order(image_dir, tmp_path):
    out = str(tmp_path / "out")
    result = extract(ExtractionConfig(input_dir=image_dir, output_dir=out,
                                      first_image_id=100))
    sources = [e["source"] for e in result.entries]
    assert sources == sorted(sources)
    assert [e["image_id"] for e in result.entries] == list(range(100, 110))


def test_coordinates_normalized_and_descriptors_byte_scale(image_dir, tmp_path):
    out = str(tmp_path / "out")
    extract(ExtractionConfig(input_dir=image_dir, output_dir=out))
    for name in sorted(os.listdir(out)):
        if not name.endswith(".xdsc"):
            continue
        frag = read_descriptor_file(os.path.join(out, name))
        pos = frag["positions"]
        assert np.all((pos >= 0.0) & (pos <= 1.0))
        assert frag["descriptors"].min() >= 0.0
        assert frag["descriptors"].max() <= 255.0


def test_solid_color_image_gives_valid_empty_file(tmp_path):
    src = tmp_path / "images"
    os.makedirs(src)
    cv2.imwrite(str(src / "flat.png"),
                np.full((64, 64), 128, dtype=np.uint8))
    out = str(tmp_path / "out")
    result = extract(ExtractionConfig(input_dir=str(src), output_dir=out))
    assert len(result.files) == 1
    frag = read_descriptor_file(result.files[0])
    assert frag["descriptors"].shape[0] == 0
    assert result.entries[0]["num_features"] == 0


def test_extraction_is_deterministic(tmp_path):
    rng = np.random.default_rng(5)
    img = make_textured_image(rng)
    src = tmp_path / "images"
    os.makedirs(src)
    cv2.imwrite(str(src / "a.png"), img)
    cv2.imwrite(str(src / "b.png"), img)
    out = str(tmp_path / "out")
    result = extract(ExtractionConfig(input_dir=str(src), output_dir=out))
    a = open(result.files[0], "rb").read()
    b = open(result.files[1], "rb").read()
    assert a == b


def test_undecodable_image_skipped_with_note(image_dir, tmp_path):
    with open(os.path.join(image_dir, "broken.png"), "wb") as fh:
        fh.write(b"this is not an image")
    out = str(tmp_path / "out")
    result = extract(ExtractionConfig(input_dir=image_dir, output_dir=out))
    assert len(result.files) == 10
    assert len(result.notes) == 1 and "broken.png" in result.notes[0]
    fragment = json.load(open(os.path.join(out, "fragment.json")))
    assert fragment["notes"] == result.notes


def test_max_features_caps_output(image_dir, tmp_path):
    out = str(tmp_path / "out")
    result = extract(ExtractionConfig(input_dir=image_dir, output_dir=out,
                                      max_features=5))
    for path in result.files:
        assert len(read_descriptor_file(path)["descriptors"]) <= 5


def test_threaded_run_matches_serial(image_dir, tmp_path):
    out1 = str(tmp_path / "serial")
    out4 = str(tmp_path / "threaded")
    extract(ExtractionConfig(input_dir=image_dir, output_dir=out1))
    extract(ExtractionConfig(input_dir=image_dir, output_dir=out4, threads=4))
    for name in sorted(os.listdir(out1)):
        a = open(os.path.join(out1, name), "rb").read()
        b = open(os.path.join(out4, name), "rb").read()
        assert a == b


def test_fragment_records_pinned_parameters(image_dir, tmp_path):
    out = str(tmp_path / "out")
    extract(ExtractionConfig(input_dir=image_dir, output_dir=out,
                             contrast_threshold=0.03))
    fragment = json.load(open(os.path.join(out, "fragment.json")))
    assert fragment["extraction"]["detector"] == "SIFT"
    assert fragment["extraction"]["contrast_threshold"] == 0.03


def test_invalid_season_rejected(tmp_path):
    with pytest.raises(ValueError):
        ExtractionConfig(input_dir=".", output_dir=str(tmp_path),
                         season="SPRING")


def test_cli_round_trip(image_dir, tmp_path, capsys):
    out = str(tmp_path / "out")
    assert main(["--input-dir", image_dir, "--output-dir", out,
                 "--season", "WI", "--route", "3"]) == 0
    assert "wrote 10 descriptor files" in capsys.readouterr().out
    fragment = json.load(open(os.path.join(out, "fragment.json")))
    assert all(e["season"] == "WI" for e in fragment["entries"])


def test_cli_bad_season_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["--input-dir", ".", "--output-dir", str(tmp_path),
              "--season", "SPRING"])
    assert exc.value.code == 2
