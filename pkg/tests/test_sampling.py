"""Modal-domain sampling plans."""

import numpy as np
import pytest

from modalsub.errors import ModalSubError
from modalsub.sampling import (
    box_from_half_width,
    grid_coords,
    random_coords,
    split_counts,
)


class TestBox:
    def test_symmetric_box(self):
        box = box_from_half_width(3, 0.625)
        assert box.shape == (3, 2)
        assert np.all(box[:, 0] == -0.625)
        assert np.all(box[:, 1] == 0.625)

    def test_rejects_nonpositive(self):
        with pytest.raises(ModalSubError):
            box_from_half_width(3, 0.0)


class TestGrid:
    def test_lexicographic_order(self):
        box = np.array([[0.0, 1.0], [0.0, 2.0]])
        g = grid_coords(box, 3)
        assert g.shape == (9, 2)
        # first axis slowest
        assert np.allclose(g[0], [0.0, 0.0])
        assert np.allclose(g[1], [0.0, 1.0])
        assert np.allclose(g[3], [0.5, 0.0])
        assert np.allclose(g[-1], [1.0, 2.0])

    def test_includes_origin_for_odd_resolution(self):
        box = box_from_half_width(3, 0.625)
        g = grid_coords(box, 9)
        assert g.shape == (729, 3)
        origin_hits = np.all(g == 0.0, axis=1)
        assert origin_hits.sum() == 1

    def test_rejects_degenerate_resolution(self):
        with pytest.raises(ModalSubError):
            grid_coords(box_from_half_width(2, 1.0), 1)


class TestRandom:
    def test_within_box_and_reproducible(self):
        box = box_from_half_width(3, 0.625)
        a = random_coords(box, 100, np.random.default_rng(5))
        b = random_coords(box, 100, np.random.default_rng(5))
        assert np.array_equal(a, b)
        assert np.all(a >= -0.625) and np.all(a <= 0.625)

    def test_single_draw_prefix_property(self):
        # a 1300 draw sliced 900/100/300 reproduces one 1300 draw exactly
        box = box_from_half_width(3, 0.5)
        full = random_coords(box, 1300, np.random.default_rng(9))
        again = random_coords(box, 1300, np.random.default_rng(9))
        s = split_counts(1300, [900, 100, 300])
        assert np.array_equal(full[s[0]], again[:900])
        assert np.array_equal(full[s[1]], again[900:1000])
        assert np.array_equal(full[s[2]], again[1000:])

    def test_rejects_empty(self):
        with pytest.raises(ModalSubError):
            random_coords(box_from_half_width(2, 1.0), 0,
                          np.random.default_rng(0))


class TestSplits:
    def test_contiguous_cover(self):
        s = split_counts(10, [6, 1, 3])
        assert s == [slice(0, 6), slice(6, 7), slice(7, 10)]

    def test_rejects_bad_sum(self):
        with pytest.raises(ModalSubError):
            split_counts(10, [5, 4])
