import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from echobench.core import Contour, SegMask
from echobench.metrics import (
    boundary_pixels,
    dice,
    dilate,
    evaluate_pair,
    extract_contour,
    hausdorff,
    hausdorff_bruteforce,
    hd_fallback,
    largest_component,
    mean_sd,
)

from conftest import random_blob


def _mask(shape, pixels):
    m = np.zeros(shape, dtype=np.uint8)
    for r, c in pixels:
        m[r, c] = 1
    return m


def _naive_hausdorff(a, b):
    # independent reference: pure-python double loop
    def directed(src, dst):
        return max(min(math.dist(p, q) for q in dst) for p in src)
    return max(directed(a, b), directed(b, a))


class TestDice:
    def test_identical(self):
        m = _mask((4, 4), [(1, 1), (1, 2), (2, 2)])
        assert dice(m, m) == 1.0

    def test_disjoint(self):
        assert dice(_mask((3, 3), [(0, 0)]), _mask((3, 3), [(2, 2)])) == 0.0

    def test_hand_enumerated(self):
        a = _mask((1, 3), [(0, 0), (0, 1)])
        b = _mask((1, 3), [(0, 1), (0, 2)])
        assert dice(a, b) == 0.5

    def test_both_empty(self):
        z = np.zeros((3, 3), np.uint8)
        assert dice(z, z) == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            dice(np.zeros((2, 2)), np.zeros((3, 3)))

    @given(arrays(np.uint8, (12, 12), elements=st.integers(0, 1)),
           arrays(np.uint8, (12, 12), elements=st.integers(0, 1)))
    def test_symmetric_and_bounded(self, a, b):
        d = dice(a, b)
        assert d == dice(b, a)
        assert 0.0 <= d <= 1.0
        if a.any():
            assert dice(a, a) == 1.0

    def test_strictly_decreasing_under_dilation(self):
        rr, cc = np.mgrid[0:64, 0:64]
        disk = ((rr - 32) ** 2 + (cc - 32) ** 2 <= 10 ** 2).astype(np.uint8)
        values = [dice(disk, dilate(disk, k)) for k in range(6)]
        assert values[0] == 1.0
        assert all(x > y for x, y in zip(values, values[1:]))


class TestContour:
    def test_single_pixel(self):
        c = extract_contour(_mask((3, 3), [(1, 1)]))
        assert c.points == ((1, 1),)
        assert c.closed

    def test_square_perimeter(self):
        m = np.zeros((5, 5), np.uint8)
        m[1:4, 1:4] = 1
        c = extract_contour(m)
        expected = {(r, q) for r in range(1, 4) for q in range(1, 4)} - {(2, 2)}
        assert set(c.points) == expected
        assert len(c.points) == 8

    def test_row_covers_all_pixels(self):
        m = np.zeros((1, 5), np.uint8)
        m[0, :] = 1
        assert set(extract_contour(m).points) == {(0, c) for c in range(5)}

    def test_touching_grid_edge(self):
        m = np.ones((4, 6), np.uint8)
        c = extract_contour(m)
        assert set(c.points) == {tuple(p) for p in np.argwhere(boundary_pixels(m))}

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            extract_contour(np.zeros((4, 4), np.uint8))

    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_trace_is_the_boundary_and_closed(self, seed):
        mask = largest_component(random_blob(np.random.default_rng(seed), 40)).values
        c = extract_contour(mask)
        assert set(c.points) == {tuple(map(int, p)) for p in np.argwhere(boundary_pixels(mask))}
        pts = c.points
        if len(pts) > 1:
            for p, q in zip(pts, pts[1:] + pts[:1]):
                assert max(abs(p[0] - q[0]), abs(p[1] - q[1])) == 1


class TestHausdorff:
    def test_identical(self):
        pts = [(0, 0), (2, 3), (5, 1)]
        assert hausdorff(pts, pts) == 0.0

    def test_three_four_five(self):
        assert hausdorff([(0, 0)], [(3, 4)]) == 5.0
        assert hausdorff_bruteforce([(0, 0)], [(3, 4)]) == 5.0

    def test_one_sided(self):
        assert hausdorff([(0, 0), (10, 0)], [(0, 0)]) == 10.0

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            hausdorff(Contour(), [(0, 0)])
        with pytest.raises(ValueError):
            hausdorff_bruteforce([(0, 0)], [])

    def test_bruteforce_matches_naive_loop(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a = [tuple(p) for p in rng.integers(0, 30, size=(rng.integers(1, 15), 2))]
            b = [tuple(p) for p in rng.integers(0, 30, size=(rng.integers(1, 15), 2))]
            assert hausdorff_bruteforce(a, b) == pytest.approx(_naive_hausdorff(a, b), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_accelerated_equals_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        a = extract_contour(largest_component(random_blob(rng)))
        b = extract_contour(largest_component(random_blob(rng)))
        assert abs(hausdorff(a, b) - hausdorff_bruteforce(a, b)) <= 1e-9

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(-50, 50), st.integers(-50, 50))
    def test_metric_properties(self, seed, dr, dc):
        rng = np.random.default_rng(seed)
        a, b, c = (rng.integers(0, 40, size=(rng.integers(1, 30), 2)) for _ in range(3))
        assert hausdorff(a, b) == hausdorff(b, a)
        assert hausdorff(a, a) == 0.0
        assert hausdorff(a, c) <= hausdorff(a, b) + hausdorff(b, c) + 1e-12
        shift = np.array([dr, dc]) + 60
        assert hausdorff(a + shift, b + shift) == hausdorff(a, b)

    def test_large_coordinates_fall_back(self):
        assert hausdorff([(0, 0)], [(6000, 8000)]) == 10000.0


class TestEvaluatePair:
    def test_identical(self):
        m = np.zeros((10, 10), np.uint8)
        m[2:7, 3:8] = 1
        pair = evaluate_pair(m, m)
        assert (pair.dice, pair.hausdorff, pair.failed) == (1.0, 0.0, False)

    def test_one_pixel_dilation(self):
        gt = np.zeros((12, 12), np.uint8)
        gt[3:9, 3:9] = 1
        pred = dilate(gt, 1)
        pair = evaluate_pair(pred, gt)
        oracle = hausdorff_bruteforce(extract_contour(pred), extract_contour(gt))
        assert oracle == 1.0
        assert pair.hausdorff == 1.0
        assert pair.dice < 1.0

    def test_empty_prediction_uses_fallback(self):
        gt = np.zeros((256, 256), np.uint8)
        gt[100:120, 100:130] = 1
        pair = evaluate_pair(np.zeros_like(gt), gt)
        assert pair.dice == 0.0
        assert pair.failed
        assert pair.hausdorff == pytest.approx(181.019336, abs=1e-6)
        assert pair.hausdorff == hd_fallback(gt.shape)

    def test_fragmented_prediction_uses_largest_component(self):
        gt = np.zeros((20, 20), np.uint8)
        gt[5:12, 5:12] = 1
        pred = gt.copy()
        pred[18, 18] = 1  # stray pixel is ignored for the contour
        assert evaluate_pair(pred, gt).hausdorff == 0.0
        assert evaluate_pair(pred, gt).dice < 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            evaluate_pair(np.ones((3, 3)), np.ones((4, 4)))


class TestMeanSd:
    def test_single_value(self):
        assert mean_sd([5.0]) == (5.0, 0.0)

    def test_two_values(self):
        m, s = mean_sd([1.0, 3.0])
        assert m == 2.0
        assert abs(s - math.sqrt(2)) <= 1e-9

    def test_constant(self):
        assert mean_sd([2.0, 2.0, 2.0]) == (2.0, 0.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            mean_sd([])
