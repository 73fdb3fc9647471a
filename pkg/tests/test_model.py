import numpy as np
import pytest
from hypothesis import given, strategies as st

from xdloc.model import (
    DomainLabel,
    ImageRecord,
    MinerConfig,
    PyramidConfig,
    Season,
    ancestor_cell,
    cell_bbox,
    cell_of,
    cells_of,
)


def test_cell_of_examples():
    assert cell_of((0.6, 0.3), 2) == 6
    assert cell_of((1.0, 1.0), 1) == 3
    assert cell_of((0.37, 0.99), 0) == 0


def test_cell_of_level0_always_zero():
    for pos in [(0.0, 0.0), (0.5, 0.5), (1.0, 0.3)]:
        assert cell_of(pos, 0) == 0


@given(
    st.floats(0, 1, allow_nan=False),
    st.floats(0, 1, allow_nan=False),
    st.integers(1, 6),
)
def test_cell_nesting(x, y, level):
    fine = cell_of((x, y), level)
    coarse = cell_of((x, y), level - 1)
    nf, nc = 1 << level, 1 << (level - 1)
    fy, fx = divmod(fine, nf)
    cy, cx = divmod(coarse, nc)
    assert (fx >> 1, fy >> 1) == (cx, cy)


@given(
    st.floats(0, 1, allow_nan=False),
    st.floats(0, 1, allow_nan=False),
    st.integers(0, 5),
    st.integers(0, 5),
)
def test_ancestor_cell_matches_direct_cell(x, y, level, extra):
    finest = level + extra
    got = ancestor_cell(np.int64(cell_of((x, y), finest)), finest, level)
    assert int(got) == cell_of((x, y), level)


def test_cells_of_matches_scalar():
    rng = np.random.default_rng(0)
    pts = rng.random((50, 2))
    for level in range(4):
        vec = cells_of(pts, level)
        for i, p in enumerate(pts):
            assert vec[i] == cell_of(tuple(p), level)


def test_cell_bbox_contains_position():
    pos = (0.6, 0.3)
    x0, y0, x1, y1 = cell_bbox(cell_of(pos, 2), 2)
    assert x0 <= pos[0] < x1 and y0 <= pos[1] < y1


def test_pyramid_config_cell_counts():
    assert PyramidConfig(2).total_cells == 21
    assert PyramidConfig(2).num_cells_finest == 16
    assert PyramidConfig(0).total_cells == 1


def test_miner_config_validation():
    with pytest.raises(ValueError):
        MinerConfig(k=2, k_prime=3)
    with pytest.raises(ValueError):
        MinerConfig(d0=0.0)
    cfg = MinerConfig()
    assert (cfg.k, cfg.k_prime, cfg.d0) == (10, 3, 200.0)


def test_image_record_rejects_out_of_range_positions():
    with pytest.raises(ValueError):
        ImageRecord(
            image_id=1,
            positions=np.array([[1.2, 0.5]]),
            descriptors=np.zeros((1, 4)),
            domain=DomainLabel(Season.SP, 1),
        )


def test_domain_label_route_nonnegative():
    with pytest.raises(ValueError):
        DomainLabel(Season.AU, -1)
