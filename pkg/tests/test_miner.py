import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import brute_force_knn
from xdloc.library import ExperienceLibrary, build_library
from xdloc.miner import (
    approx_error_profile,
    mine,
    mine_batch,
    truncated_similarity,
)
from xdloc.model import DomainLabel, Feature, ImageRecord, Season


def _library_from(Z, source_ids=None):
    Z = np.asarray(Z, dtype=float)
    n = len(Z)
    src = np.asarray(source_ids if source_ids is not None else np.zeros(n), dtype=np.int64)
    return ExperienceLibrary(
        descriptors=Z,
        source_image_ids=src,
        seasons=np.full(n, "SP", dtype="<U5"),
        routes=np.zeros(n, dtype=np.int64),
    )


TOY = _library_from([[0, 0], [100, 0], [0, 100], [300, 300]])


def test_toy_example_top2():
    got = mine(Feature((0.5, 0.5), np.array([10.0, 0.0])), TOY, k=2)
    assert got.entries == ((1, 100.0), (2, 8100.0))


def test_identity_query():
    got = mine(Feature((0.5, 0.5), np.array([0.0, 100.0])), TOY, k=1)
    assert got.entries == ((3, 0.0),)


def test_tie_broken_by_lower_id():
    lib = _library_from([[5, 0], [0, 5], [9, 9]])
    got = mine(Feature((0.5, 0.5), np.array([0.0, 0.0])), lib, k=2)
    assert got.ids == (1, 2)
    assert got.entries[0][1] == got.entries[1][1] == 25.0


def test_k_exceeds_library_raises():
    with pytest.raises(ValueError):
        mine(Feature((0.5, 0.5), np.array([0.0, 0.0])), TOY, k=5)


def test_exclusion_removes_source_images():
    lib = _library_from([[0, 0], [1, 0], [2, 0]], source_ids=[7, 8, 7])
    got = mine(Feature((0.5, 0.5), np.array([0.0, 0.0])), lib, k=1,
               exclude_image_ids={7})
    assert got.ids == (2,)
    with pytest.raises(ValueError):
        mine(Feature((0.5, 0.5), np.array([0.0, 0.0])), lib, k=2,
             exclude_image_ids={7})


@pytest.mark.parametrize("dim", [2, 8, 64])
@pytest.mark.parametrize("seed", [0, 1])
def test_matches_brute_force(dim, seed):
    rng = np.random.default_rng(seed)
    V = int(rng.integers(20, 300))
    Z = rng.uniform(0, 255, (V, dim))
    # inject exact duplicates so tie-breaking is exercised
    Z[3] = Z[11]
    lib = _library_from(Z)
    X = rng.uniform(0, 255, (10, dim))
    X[0] = Z[11]
    k = int(rng.integers(1, 12))
    got = mine_batch(X, lib, k)
    for i in range(len(X)):
        expected = brute_force_knn(X[i], Z, k)
        assert [lid for lid, _ in got[i].entries] == [lid for lid, _ in expected]
        np.testing.assert_allclose(
            [d for _, d in got[i].entries],
            [d for _, d in expected],
            rtol=1e-12,
            atol=1e-9,
        )


def test_threaded_mining_identical():
    rng = np.random.default_rng(3)
    Z = rng.uniform(0, 255, (500, 16))
    lib = _library_from(Z)
    X = rng.uniform(0, 255, (40, 16))
    assert mine_batch(X, lib, 5, threads=1) == mine_batch(X, lib, 5, threads=4)


def test_truncated_similarity_examples():
    assert truncated_similarity(100.0, 200.0) == 39900.0
    assert truncated_similarity(0.0, 200.0) == 40000.0
    assert truncated_similarity(40001.0, 200.0) == 0.0


@given(st.floats(0, 1e9), st.floats(0.001, 1e4))
def test_truncated_similarity_range_and_truncation(sqd, d0):
    s = truncated_similarity(sqd, d0)
    assert 0.0 <= s <= d0 * d0
    if sqd >= d0 * d0:
        assert s == 0.0


def test_truncated_similarity_monotone():
    vals = [truncated_similarity(d, 200.0) for d in np.linspace(0, 50000, 100)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_error_profile_identity_features():
    rng = np.random.default_rng(0)
    Z = rng.uniform(0, 255, (30, 8))
    lib = _library_from(Z)
    rp, dist, deciles = approx_error_profile(Z[:10], lib)
    np.testing.assert_allclose(dist, 0.0, atol=1e-9)
    assert deciles[100] == 0.0
    assert rp[-1] == 100.0


def test_error_profile_matches_brute_force_toy():
    X = np.array([[10.0, 0.0], [0.0, 100.0], [150.0, 0.0], [300.0, 290.0]])
    _, dist, _ = approx_error_profile(X, TOY)
    expected = sorted(
        np.sqrt(brute_force_knn(x, TOY.descriptors, 1)[0][1]) for x in X
    )
    np.testing.assert_allclose(dist, expected, rtol=1e-12)
