import numpy as np
import pytest

from xdloc.errors import DimensionMismatchError, EmptyLibraryError
from xdloc.library import (
    build_library,
    cross_domain_filter,
    load_library,
    make_filter,
    save_library,
)
from xdloc.model import DomainLabel, ImageRecord, Season


def _image(image_id, n, domain, dim=4, seed=None):
    rng = np.random.default_rng(seed if seed is not None else image_id)
    return ImageRecord(
        image_id=image_id,
        positions=rng.random((n, 2)),
        descriptors=rng.uniform(0, 255, (n, dim)),
        domain=domain,
    )


def test_accept_all_counts_and_ids():
    images = [_image(i, 5, DomainLabel(Season.SP, 1)) for i in range(3)]
    lib = build_library(images)
    assert lib.size == 15
    src, _ = lib.provenance(1)
    assert src == 0
    src, _ = lib.provenance(15)
    assert src == 2


def test_cross_domain_filter_excludes_query_domain():
    images = [
        _image(0, 4, DomainLabel(Season.SP, 1)),
        _image(1, 4, DomainLabel(Season.SP, 2)),
        _image(2, 4, DomainLabel(Season.AU, 1)),
        _image(3, 4, DomainLabel(Season.AU, 2)),
    ]
    lib = build_library(images, cross_domain_filter(Season.SP, 1))
    assert lib.size == 4
    src, label = lib.provenance(1)
    assert src == 3 and label == DomainLabel(Season.AU, 2)


def test_filter_rejecting_everything_raises():
    images = [_image(0, 4, DomainLabel(Season.SP, 1))]
    with pytest.raises(EmptyLibraryError):
        build_library(images, lambda lab: False)


def test_dimension_mismatch():
    images = [
        _image(0, 4, DomainLabel(Season.SP, 1), dim=4),
        _image(1, 4, DomainLabel(Season.SP, 1), dim=8),
    ]
    with pytest.raises(DimensionMismatchError):
        build_library(images)


def test_provenance_round_trip_every_id():
    images = [
        _image(7, 3, DomainLabel(Season.WI, 2)),
        _image(9, 2, DomainLabel(Season.SU, 3)),
    ]
    lib = build_library(images)
    by_id = {im.image_id: im for im in images}
    row = 0
    for im in images:
        for j in range(im.num_features):
            src, label = lib.provenance(row + 1)
            assert src == im.image_id
            assert label == by_id[src].domain
            np.testing.assert_array_equal(lib.descriptors[row], im.descriptors[j])
            row += 1


def test_deterministic_given_input_order():
    images = [_image(i, 5, DomainLabel(Season.SP, 1)) for i in range(3)]
    a = build_library(images)
    b = build_library(images)
    assert a.fingerprint() == b.fingerprint()
    c = build_library(images[::-1])
    assert c.fingerprint() != a.fingerprint()


def test_cs_cr_filters():
    cs = make_filter("cs", Season.SP, 1)
    assert not cs(DomainLabel(Season.SP, 2))
    assert cs(DomainLabel(Season.AU, 1))
    cr = make_filter("cr", Season.SP, 1)
    assert cr(DomainLabel(Season.SP, 2))
    assert not cr(DomainLabel(Season.AU, 1))
    with pytest.raises(ValueError):
        make_filter("bogus", Season.SP, 1)


def test_save_load_round_trip(tmp_path):
    images = [_image(i, 5, DomainLabel(Season.AU, 2)) for i in range(2)]
    lib = build_library(images)
    path = tmp_path / "lib.npz"
    save_library(lib, path)
    loaded = load_library(path)
    assert loaded.fingerprint() == lib.fingerprint()
    assert loaded.provenance(6) == lib.provenance(6)
