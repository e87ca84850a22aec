import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stirlab.lattice import (Configuration, GeometryError, InvalidDimensionError,
                             LatticeOverflowError, PreconditionError, coord_limit, is_neighbor,
                             neighbors)


def brute_pairs(sites):
    s = set(sites)
    return sum(1 for x in s for y in s if is_neighbor(x, y))


def test_neighbors_examples():
    assert sorted(neighbors((0, 0, 0), 3)) == sorted(
        [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)])
    assert set(neighbors((5, -2), 2)) == {(6, -2), (4, -2), (5, -1), (5, -3)}
    assert set(neighbors((0,), 1)) == {(1,), (-1,)}


def test_neighbors_bad_dimension():
    with pytest.raises(InvalidDimensionError):
        neighbors((), 0)
    with pytest.raises(InvalidDimensionError):
        neighbors((1, 2), 3)
    with pytest.raises(InvalidDimensionError):
        Configuration(0)


@given(st.integers(1, 6).flatmap(
    lambda d: st.tuples(st.just(d), st.lists(st.integers(-50, 50), min_size=d, max_size=d))))
def test_neighbors_symmetric(arg):
    d, x = arg
    nb = neighbors(x, d)
    assert len(nb) == 2 * d == len(set(nb))
    assert tuple(x) not in nb
    for y in nb:
        assert tuple(x) in neighbors(y, d)


def test_apply_move_examples():
    c = Configuration(3, [(0, 0, 0)])
    assert c.apply_move("birth", (0, 0, 0), (1, 0, 0))
    assert set(c.occupied()) == {(0, 0, 0), (1, 0, 0)}
    assert c.pair_count_ordered == 2
    assert not c.apply_move("birth", (0, 0, 0), (1, 0, 0))
    assert not c.apply_move("jump", (0, 0, 0), (1, 0, 0))
    assert c.count == 2 and c.pair_count_ordered == 2
    assert c.apply_move("jump", (1, 0, 0), (2, 0, 0))
    assert c.pair_count_ordered == 0 and (2, 0, 0) in c and (1, 0, 0) not in c
    assert c.apply_move("death", (0, 0, 0))
    assert c.occupied() == [(2, 0, 0)]


def test_apply_move_errors():
    c = Configuration(2, [(0, 0)])
    with pytest.raises(PreconditionError):
        c.apply_move("death", (1, 0))
    with pytest.raises(GeometryError):
        c.apply_move("birth", (0, 0), (1, 1))
    with pytest.raises(GeometryError):
        c.apply_move("jump", (0, 0), (0, 0))
    with pytest.raises(GeometryError):
        c.apply_move("birth", (0, 0))
    with pytest.raises(ValueError):
        c.apply_move("teleport", (0, 0), (1, 0))
    with pytest.raises(LatticeOverflowError):
        c.add((coord_limit(2) + 1, 0))


def test_add_and_grow():
    pts = list(itertools.product(range(6), repeat=3))
    c = Configuration(3, pts, capacity=4)
    assert c.count == len(pts)
    assert not c.add((0, 0, 0))
    assert c.pair_count_ordered == brute_pairs(pts) == c.recount_pairs()
    assert len(c) == 216


def _random_sequence(d, seed, moves, box=3):
    rng = np.random.default_rng(seed)
    c = Configuration(d, [(0,) * d])
    ref = {(0,) * d}
    for step in range(moves):
        if not ref:
            x = tuple(int(v) for v in rng.integers(-box, box + 1, size=d))
            assert c.add(x)
            ref.add(x)
            continue
        occ = c.occupied()
        x = occ[rng.integers(len(occ))]
        kind = ("death", "birth", "jump")[rng.choice(3, p=[0.3, 0.35, 0.35])]
        before = c.count
        if kind == "death":
            c.apply_move(kind, x)
            ref.discard(x)
            assert c.count == before - 1
        else:
            y = neighbors(x, d)[rng.integers(2 * d)]
            if max(abs(v) for v in y) > box:
                continue
            changed = c.apply_move(kind, x, y)
            assert changed == (y not in ref)
            if changed:
                ref.add(y)
                if kind == "jump":
                    ref.discard(x)
            assert c.count == before + (1 if changed and kind == "birth" else 0)
        assert c.count == len(ref)
        assert c.pair_count_ordered % 2 == 0
        assert c.pair_count_ordered <= 2 * d * c.count
        if step % 500 == 0:
            assert set(c.occupied()) == ref
            assert c.pair_count_ordered == brute_pairs(ref)
    assert set(c.occupied()) == ref
    assert c.pair_count_ordered == c.recount_pairs() == brute_pairs(ref)


@settings(max_examples=4, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32))
def test_random_moves_incremental_pairs(d, seed):
    # a small box keeps the density high, so births and jumps collide often
    _random_sequence(d, seed, 10_000)
