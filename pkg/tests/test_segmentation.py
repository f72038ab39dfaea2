import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shapes import dense_line, dense_y, plus_junction
from vesselmorph.segmentation import (BRANCH_SEGMENT, Centerline, CubeParams, IsolatedPointError,
                                      PointAttribute, classify_point, cube_neighbors, outdegree,
                                      segment_centerline)

UNIT = CubeParams(l=1.0, epsilon=0.15)


class TestCubeNeighbors:
    def test_inside_vs_far(self):
        assert cube_neighbors((0, 0, 0), [(0.1, 0, 0), (5, 5, 5)], UNIT) == {0}

    def test_boundary_excluded(self):
        assert cube_neighbors((0, 0, 0), [(0.6, 0, 0)], UNIT) == set()

    def test_line_center_has_two_each_side(self):
        line = np.c_[np.arange(-5, 6) * 0.2, np.zeros(11), np.zeros(11)]
        # |dx| < 0.5 keeps offsets +-0.2 and +-0.4
        assert len(cube_neighbors(line[5], line, UNIT)) == 4

    def test_query_point_itself_excluded(self):
        assert cube_neighbors((0, 0, 0), [(0, 0, 0), (0.1, 0, 0)], UNIT) == {1}


class TestOutdegree:
    def test_isolated(self):
        assert outdegree((0, 0, 0), [(0, 0, 0), (5, 5, 5)], UNIT) == 0

    def test_dense_x_line_interior(self):
        line = np.c_[np.arange(-40, 41) * 0.05, np.zeros(81), np.zeros(81)]
        # offsets 0.4 and 0.45 sit within 0.15 of the x faces
        for rule in ("exit", "any"):
            assert outdegree(line[40], line, CubeParams(1.0, 0.15, rule)) == 2

    def test_plus_junction_center(self):
        plus = plus_junction(spacing=0.05)
        for rule in ("exit", "any"):
            assert outdegree(plus[0], plus, CubeParams(1.0, 0.15, rule)) == 4

    def test_literal_rule_double_counts_diagonal_exit(self):
        # a 45 degree line exits near cube edges; "any" sees 4 faces, "exit" sees 2
        line = dense_line(count=81, spacing=0.02, direction=(1, 1, 0))
        params = CubeParams.from_spacing(line)
        mid = line[40]
        assert outdegree(mid, line, CubeParams(params.l, params.epsilon, "any")) == 4
        assert outdegree(mid, line, params) == 2

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (25, 3), elements=st.floats(-1, 1)), st.sampled_from(["exit", "any"]))
    def test_range(self, cloud, rule):
        params = CubeParams(0.8, 0.2, rule)
        for p in cloud[:5]:
            assert 0 <= outdegree(p, cloud, params) <= 6

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (25, 3), elements=st.floats(-1, 1)),
           st.floats(0.01, 0.39), st.floats(0.01, 0.39), st.sampled_from(["exit", "any"]))
    def test_monotone_in_epsilon(self, cloud, e1, e2, rule):
        lo, hi = sorted((e1, e2))
        for p in cloud[:5]:
            assert outdegree(p, cloud, CubeParams(0.8, lo, rule)) <= outdegree(p, cloud, CubeParams(0.8, hi, rule))

    def test_monotone_in_epsilon_on_y(self):
        y = dense_y()
        l = CubeParams.from_spacing(y).l
        eps_grid = np.linspace(0.02, 0.49, 12) * l
        for i in range(0, len(y), 7):
            degrees = [outdegree(y[i], y, CubeParams(l, e)) for e in eps_grid]
            assert degrees == sorted(degrees)


class TestClassify:
    def test_line_endpoint_and_interior(self):
        line = dense_line()
        params = CubeParams.from_spacing(line)
        assert classify_point(0, line, params) is PointAttribute.START
        assert classify_point(len(line) - 1, line, params) is PointAttribute.START
        assert classify_point(25, line, params) is PointAttribute.MIDDLE

    def test_y_junction_is_branch(self):
        y = dense_y()
        params = CubeParams.from_spacing(y)
        assert outdegree(y[0], y, params) == 3
        assert classify_point(0, y, params) is PointAttribute.BRANCH

    def test_isolated_raises(self):
        with pytest.raises(IsolatedPointError, match="isolated point"):
            classify_point(0, [(0, 0, 0), (9, 9, 9)], UNIT)

    def test_permutation_invariant(self, rng):
        y = dense_y()
        params = CubeParams.from_spacing(y)
        base = [classify_point(i, y, params) for i in range(len(y))]
        perm = rng.permutation(len(y))
        shuffled = y[perm]
        assert [classify_point(i, shuffled, params) for i in range(len(y))] == [base[p] for p in perm]


class TestSegment:
    def test_single_line(self):
        seg = segment_centerline(dense_line())
        assert seg.segment_count == 1
        assert seg.attributes.count(PointAttribute.START) == 2
        assert seg.attributes.count(PointAttribute.MIDDLE) == len(seg) - 2

    def test_y_tree(self):
        y = dense_y()
        seg = segment_centerline(y)
        assert seg.segment_count == 3
        assert len(seg.branch_indices()) >= 1
        # each arm's far end lands in a different segment
        ends = [40, 80, 120]
        assert len({int(seg.segment_ids[i]) for i in ends}) == 3

    def test_two_disjoint_lines(self):
        a = dense_line()
        b = dense_line() + [0, 5, 0]
        assert segment_centerline(np.vstack([a, b])).segment_count == 2

    def test_ids_renumbered_by_first_appearance(self):
        a = dense_line()
        b = dense_line() + [0, 5, 0]
        seg = segment_centerline(np.vstack([b, a]))
        assert seg.segment_ids[0] == 0 and seg.segment_ids[-1] == 1

    def test_partition_properties(self):
        y = dense_y()
        seg = segment_centerline(y)
        branch = seg.segment_ids == BRANCH_SEGMENT
        assert all(seg.attributes[i] is PointAttribute.BRANCH for i in np.flatnonzero(branch))
        assert all(seg.attributes[i] is not PointAttribute.BRANCH for i in np.flatnonzero(~branch))
        covered = np.concatenate(list(seg.segment_indices().values()) + [seg.branch_indices()])
        assert sorted(covered) == list(range(len(y)))

    def test_isolated_point_gets_own_segment(self, caplog):
        pts = np.vstack([dense_line(), [[10, 10, 10]]])
        with caplog.at_level(logging.WARNING):
            seg = segment_centerline(pts, CubeParams.from_spacing(dense_line()))
        assert seg.segment_count == 2
        assert seg.attributes[-1] is PointAttribute.START
        assert "isolated" in caplog.text

    def test_shuffled_storage_gives_same_partition(self, rng):
        y = dense_y()
        params = CubeParams.from_spacing(y)
        base = segment_centerline(y, params)
        perm = rng.permutation(len(y))
        shuf = segment_centerline(y[perm], params)
        # same partition up to relabelling
        mapping = {}
        for new_i, old_i in enumerate(perm):
            a, b = int(base.segment_ids[old_i]), int(shuf.segment_ids[new_i])
            assert mapping.setdefault(a, b) == b

    def test_segments_are_connected_chains(self):
        y = dense_y()
        seg = segment_centerline(y)
        params = CubeParams.from_spacing(y)
        for idx in seg.segment_indices().values():
            pts = y[idx]
            order = np.argsort(np.linalg.norm(pts, axis=1))
            steps = np.abs(np.diff(pts[order], axis=0)).max(axis=1)
            assert np.all(steps < params.l / 2)


def test_cube_params_validation():
    with pytest.raises(ValueError):
        CubeParams(1.0, 0.6)
    with pytest.raises(ValueError):
        CubeParams(0.0, 0.1)
    assert CubeParams(1.0, 0.2).tol_face == pytest.approx(0.05)


def test_centerline_length_checks():
    with pytest.raises(ValueError):
        Centerline(np.zeros((3, 3)), segment_ids=[0, 0])
