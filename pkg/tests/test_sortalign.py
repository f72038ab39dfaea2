import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import parabola_at_arc_fraction
from shapes import dense_line, dense_y
from vesselmorph.segmentation import Centerline, segment_centerline
from vesselmorph.sortalign import (Span, SegmentPairing, field_by_subtraction, pair_segment_points,
                                   pair_segments, sort_by_trend, span, trend_axis)


class TestSpan:
    def test_axis_aligned(self):
        assert span([(0, 0, 0), (10, 0, 0)]) == Span(10, 0, 0)

    def test_singleton(self):
        assert span([(1, 1, 1)]) == Span(0, 0, 0)

    def test_by_hand(self):
        assert span([(0, 0, 0), (3, 4, 1), (1, 2, 5)]) == Span(3, 4, 5)

    def test_empty(self):
        with pytest.raises(ValueError):
            span(np.zeros((0, 3)))


class TestTrendAxis:
    @pytest.mark.parametrize("s, axis", [((10, 0, 0), 0), ((2, 5, 1), 1), ((3, 3, 1), 0), ((1, 4, 4), 1)])
    def test_cases(self, s, axis):
        assert trend_axis(s) == axis

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (8, 3), elements=st.floats(-10, 10)), arrays(np.float64, 3, elements=st.floats(-50, 50)))
    def test_translation_invariant(self, seg, t):
        s0 = np.asarray(span(seg))
        s1 = np.asarray(span(seg + t))
        # spans agree up to rounding; only compare when the maximum is unambiguous
        top = np.sort(s0)[::-1]
        if top[0] - top[1] > 1e-9:
            assert trend_axis(s0) == trend_axis(s1)


class TestSortByTrend:
    def test_sorts(self):
        out = sort_by_trend([(2, 0, 0), (0, 0, 0), (1, 0, 0)], 0)
        np.testing.assert_array_equal(out, [(0, 0, 0), (1, 0, 0), (2, 0, 0)])

    def test_idempotent(self):
        pts = np.array([(0, 0, 0), (1, 5, 0), (2, 1, 0)], float)
        np.testing.assert_array_equal(sort_by_trend(pts, 0), pts)

    def test_stable(self):
        out = sort_by_trend([(1, 0, 0), (0, 7, 0), (0, 3, 0)], 0)
        np.testing.assert_array_equal(out, [(0, 7, 0), (0, 3, 0), (1, 0, 0)])


class TestPairSegments:
    def test_identity_pairs_with_copy(self):
        y = segment_centerline(dense_y())
        result = pair_segments(y, y)
        assert len(result.pairs) == 3
        assert all(p.systole_id == p.diastole_id and p.centroid_distance == 0 for p in result.pairs)
        assert not result.unmatched_systole and not result.unmatched_diastole

    def test_single_segment(self):
        line = segment_centerline(dense_line())
        assert len(pair_segments(line, line).pairs) == 1

    def test_three_versus_two(self):
        lines = [dense_line() + [0, 5 * k, 0] for k in range(3)]
        three = segment_centerline(np.vstack(lines))
        two = segment_centerline(np.vstack(lines[:2]))
        result = pair_segments(three, two)
        assert len(result.pairs) == 2
        assert result.unmatched_systole == [2]

    def test_resampled_to_max_count_and_sorted(self):
        a = segment_centerline(dense_line(count=30))
        b = segment_centerline(dense_line(count=45) * [1.1, 1, 1])
        p = pair_segments(a, b).pairs[0]
        assert p.resampled_count == 45 and len(p.systole) == len(p.diastole) == 45
        assert np.all(np.diff(p.systole[:, p.trend_axis]) >= 0)
        assert np.all(np.diff(p.diastole[:, p.trend_axis]) >= 0)

    def test_no_segments(self):
        empty = Centerline(np.zeros((2, 3)) + [[0, 0, 0], [1, 1, 1]], segment_ids=[-1, -1])
        line = segment_centerline(dense_line())
        with pytest.raises(ValueError, match="no segments"):
            pair_segments(empty, line)

    def test_unsegmented(self):
        with pytest.raises(ValueError):
            pair_segments(Centerline(dense_line()), Centerline(dense_line()))


class TestFieldBySubtraction:
    def test_identical_segments_zero_field(self):
        pts = dense_line()
        assert np.all(field_by_subtraction(pair_segment_points(pts, pts)) == 0)

    def test_rigid_translation(self):
        pts = dense_line(direction=(1, 0.2, 0.1))
        f = field_by_subtraction(pair_segment_points(pts, pts + [1, 2, 3]))
        np.testing.assert_allclose(f, np.tile([1, 2, 3], (len(pts), 1)), atol=1e-12)

    def test_quadratic_bend_matches_arc_length_oracle(self):
        # systole: straight x-line; diastole: (u, a u (1-u), 0); both densely sampled
        a, m = 0.2, 2001
        u = np.linspace(0, 1, m)
        systole = np.c_[u, np.zeros(m), np.zeros(m)]
        diastole = np.c_[u, a * u * (1 - u), np.zeros(m)]
        pairing = pair_segment_points(systole, diastole)
        field = field_by_subtraction(pairing)
        fractions = np.arange(m) / (m - 1)
        expected = np.array([parabola_at_arc_fraction(a, f) for f in fractions]) - np.c_[fractions, 0 * fractions, 0 * fractions]
        assert np.abs(field - expected).max() <= 1e-6

    def test_length_mismatch(self):
        bad = SegmentPairing(np.zeros((3, 3)), np.zeros((4, 3)), 0, 3)
        with pytest.raises(ValueError, match="mismatch"):
            field_by_subtraction(bad)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_invariant_to_storage_permutation(self, seed):
        rng = np.random.default_rng(seed)
        u = np.sort(rng.uniform(0, 1, 25))
        sys = np.c_[u, 0.3 * u ** 2, 0.1 * np.sin(u)]
        dia = sys + np.c_[0.05 * u, 0.02 * np.ones_like(u), -0.1 * u ** 2]
        ref = field_by_subtraction(pair_segment_points(sys, dia))
        shuffled = field_by_subtraction(pair_segment_points(sys[rng.permutation(25)], dia[rng.permutation(25)]))
        np.testing.assert_array_equal(ref, shuffled)

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, 3, elements=st.floats(-5, 5)))
    def test_translation_equivariance(self, t):
        u = np.linspace(0, 1, 30)
        sys = np.c_[u, 0.3 * u ** 2, np.zeros(30)]
        dia = np.c_[u, 0.3 * u ** 2 + 0.1 * u * (1 - u), 0.05 * u]
        base = field_by_subtraction(pair_segment_points(sys, dia))
        moved = field_by_subtraction(pair_segment_points(sys, dia + t))
        np.testing.assert_allclose(moved - base, np.tile(t, (30, 1)), atol=1e-9)


def test_reversed_storage_is_canonicalized():
    u = np.linspace(0, 1, 20)
    sys = np.c_[u, u ** 2, 0 * u]
    dia = (sys + [0, 0.1, 0])[::-1]
    f = field_by_subtraction(pair_segment_points(sys, dia))
    np.testing.assert_allclose(f, np.tile([0, 0.1, 0], (20, 1)), atol=1e-12)
