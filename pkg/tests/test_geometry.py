import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqsynth.geometry import (
    AngleInterval,
    Box,
    EmptyPolytopeError,
    GeometryError,
    Polytope,
    SpatialIndex,
    box_intersects,
    index_knn,
    point_box_distance,
    polytope_intersects_box,
    rotate_box_outer,
    transform_polytope,
    wrap_angle,
)


def rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


class TestBox:
    def test_validation(self):
        with pytest.raises(GeometryError):
            Box([0, 0], [1, -1])
        b = Box([0, 1, 2], [1, 2, 3])
        assert b.dim == 3
        np.testing.assert_allclose(b.center, [0.5, 1.5, 2.5])

    def test_corner_touch_intersects(self):
        assert box_intersects(Box([0, 0], [1, 1]), Box([1, 1], [2, 2]))

    def test_disjoint(self):
        assert not box_intersects(Box([0, 0], [1, 1]), Box([2, 2], [3, 3]))

    def test_dimension_mismatch(self):
        with pytest.raises(GeometryError):
            box_intersects(Box([0], [1]), Box([0, 0], [1, 1]))

    def test_random_pairs_match_interval_oracle(self):
        # Per-dimension overlap oracle on 1000 random pairs.
        rng = np.random.default_rng(7)
        for _ in range(1000):
            lo1 = rng.uniform(-5, 5, 3)
            lo2 = rng.uniform(-5, 5, 3)
            a = Box(lo1, lo1 + rng.uniform(0, 3, 3))
            b = Box(lo2, lo2 + rng.uniform(0, 3, 3))
            expected = all(
                a.lower[d] <= b.upper[d] and b.lower[d] <= a.upper[d]
                for d in range(3)
            )
            assert box_intersects(a, b) == expected


class TestPolytope:
    def test_unit_box_as_polytope_intersects_itself(self):
        b = Box([0, 0, 0], [1, 1, 1])
        assert polytope_intersects_box(Polytope.from_box(b), b)

    def test_separated_halfspace(self):
        p = Polytope([[1.0, 0.0, 0.0]], [-1.0])  # x0 <= -1
        assert not polytope_intersects_box(p, Box([0, 0, 0], [1, 1, 1]))

    def test_empty_polytope_flagged(self):
        p = Polytope([[1.0, 0, 0], [-1.0, 0, 0]], [0.0, -1.0])  # x<=0 and x>=1
        assert p.is_empty()
        with pytest.raises(EmptyPolytopeError):
            polytope_intersects_box(p, Box([0, 0, 0], [1, 1, 1]))

    def test_random_pairs_match_sat_oracle(self):
        # Rotated-box polytopes vs boxes, checked against an independent
        # separating-axis oracle (exact for convex polygons x theta interval).
        rng = np.random.default_rng(3)
        n_true = n_false = 0
        for _ in range(500):
            theta = rng.uniform(-np.pi, np.pi)
            center = rng.uniform(-2, 2, 2)
            half = rng.uniform(0.2, 1.5, 2)
            zlo = rng.uniform(-2, 0)
            zhi = zlo + rng.uniform(0.1, 2)
            # Polytope: rotated rectangle x [zlo, zhi].
            rows2 = np.vstack([rot(theta).T, -rot(theta).T])
            offs2 = np.concatenate([rot(theta).T @ center + half,
                                    -(rot(theta).T @ center) + half])
            normals = np.hstack([rows2, np.zeros((4, 1))])
            normals = np.vstack([normals, [[0, 0, 1.0], [0, 0, -1.0]]])
            offsets = np.concatenate([offs2, [zhi, -zlo]])
            p = Polytope(normals, offsets)

            blo = rng.uniform(-3, 2, 3)
            b = Box(blo, blo + rng.uniform(0.2, 2.0, 3))

            # Oracle: z-interval overlap and 2-D SAT with box axes + rect axes.
            corners = center + np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]]) \
                * half @ rot(theta).T
            sep = not (blo[2] <= zhi and zlo <= b.upper[2])
            for axis in [np.array([1.0, 0]), np.array([0, 1.0]),
                         rot(theta)[:, 0], rot(theta)[:, 1]]:
                cp = corners @ axis
                bc = np.array([[b.lower[0], b.lower[1]], [b.lower[0], b.upper[1]],
                               [b.upper[0], b.lower[1]], [b.upper[0], b.upper[1]]])
                bp = bc @ axis
                if cp.max() < bp.min() - 1e-12 or bp.max() < cp.min() - 1e-12:
                    sep = True
            expected = not sep
            got = polytope_intersects_box(p, b)
            assert got == expected
            n_true += expected
            n_false += not expected
        assert n_true > 50 and n_false > 50  # both outcomes exercised

    def test_transform_identity(self):
        p = Polytope.from_box(Box([0, 0, 0], [1, 2, 3]))
        q = transform_polytope(p, 0.0, np.zeros(3))
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1, 4, (200, 3))
        np.testing.assert_array_equal(p.contains(pts), q.contains(pts))

    def test_transform_pure_translation(self):
        p = Polytope.from_box(Box([0, 0, 0], [1, 1, 1]))
        q = transform_polytope(p, 0.0, np.array([1.0, 2.0, 0.0]))
        # Every vertex shifts by (-1, -2, 0) under the inverse-frame map.
        assert q.contains(np.array([-1.0, -2.0, 0.0]))[0]
        assert q.contains(np.array([0.0, -1.0, 1.0]))[0]
        assert not q.contains(np.array([0.5, 0.5, 0.5]))[0]

    def test_transform_rotation_vertex_oracle(self):
        # Rotation by pi/2 about the origin maps [0,1]x[0,0]x{0} onto the
        # segment (0,0)..(0,-1); verified against direct vertex evaluation.
        p = Polytope.from_box(Box([0, 0, 0], [1, 0, 0]))
        q = transform_polytope(p, np.pi / 2, np.zeros(3))
        for x in np.linspace(0, 1, 11):
            vertex_image = np.array([rot(np.pi / 2).T @ [x, 0.0], [0.0]],
                                    dtype=object)
            pt = np.array([*rot(np.pi / 2).T @ [x, 0.0], 0.0])
            assert q.contains(pt, atol=1e-9)[0]
        assert q.contains(np.array([0.0, -1.0, 0.0]), atol=1e-9)[0]
        assert not q.contains(np.array([0.5, 0.5, 0.0]))[0]

    def test_transform_round_trip_membership(self):
        rng = np.random.default_rng(5)
        p = Polytope.from_box(Box([-1, -2, -0.5], [2, 1, 0.5]))
        angle = 0.7
        anchor = np.array([0.3, -1.2, 0.4])
        q = transform_polytope(p, angle, anchor)
        # Inverse motion: y -> R y + anchor corresponds to the frame map with
        # angle -angle and anchor -R^T anchor.
        c, s = np.cos(angle), np.sin(angle)
        rmat = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
        back = transform_polytope(q, -angle, -rmat.T @ anchor)
        pts = rng.uniform(-3, 3, (1000, 3))
        np.testing.assert_array_equal(p.contains(pts), back.contains(pts))


class TestRotateBoxOuter:
    def test_degenerate_interval_exact(self):
        b = Box([0.2, -0.3, 0.1], [1.0, 0.4, 0.2])
        theta = 0.77
        out = rotate_box_outer(b, AngleInterval(theta, theta))
        corners = b.corners()[:, :2] @ rot(theta).T
        np.testing.assert_allclose(out.lower[:2], corners.min(axis=0), atol=1e-12)
        np.testing.assert_allclose(out.upper[:2], corners.max(axis=0), atol=1e-12)
        np.testing.assert_allclose([out.lower[2], out.upper[2]],
                                   [b.lower[2] + theta, b.upper[2] + theta])

    def test_symmetric_square_contains_endpoints(self):
        b = Box([-1, -1, 0], [1, 1, 0])
        out = rotate_box_outer(b, AngleInterval(0.3, 1.1))
        for theta in (0.3, 1.1):
            pts = b.corners()[:, :2] @ rot(theta).T
            assert np.all(pts[:, 0] >= out.lower[0] - 1e-12)
            assert np.all(pts[:, 1] <= out.upper[1] + 1e-12)

    def test_segment_sweep_contains_sampled_rotations(self):
        b = Box([0, 0, 0], [1, 0, 0])
        out = rotate_box_outer(b, AngleInterval(0.0, np.pi / 2))
        for theta in np.linspace(0, np.pi / 2, 1000):
            for x in (0.0, 0.5, 1.0):
                pt = rot(theta) @ [x, 0.0]
                assert out.lower[0] - 1e-12 <= pt[0] <= out.upper[0] + 1e-12
                assert out.lower[1] - 1e-12 <= pt[1] <= out.upper[1] + 1e-12
        # Arc apex near 45 degrees reaches x = y = cos(pi/4).
        assert out.upper[0] >= 1.0 - 1e-12
        assert out.upper[1] >= 1.0 - 1e-12

    @settings(max_examples=200, deadline=None)
    @given(
        lo=st.floats(-3, 3), w0=st.floats(0, 2), w1=st.floats(0, 2),
        e0=st.floats(-3, 3), a_lo=st.floats(-7, 7), width=st.floats(0, 2 * np.pi),
        frac=st.floats(0, 1), sub=st.floats(0, 1),
    )
    def test_soundness_and_monotonicity(self, lo, w0, w1, e0, a_lo, width, frac, sub):
        b = Box([lo, e0, -0.2], [lo + w0, e0 + w1, 0.3])
        outer = AngleInterval(a_lo, a_lo + width)
        inner_w = width * sub
        inner_lo = a_lo + (width - inner_w) * frac
        inner = AngleInterval(inner_lo, inner_lo + inner_w)
        out_o = rotate_box_outer(b, outer)
        out_i = rotate_box_outer(b, inner)
        # Soundness: sampled rotations of corners stay inside.
        for theta in np.linspace(outer.lo, outer.hi, 50):
            pts = b.corners()[:, :2] @ rot(theta).T
            assert np.all(pts >= out_o.lower[:2] - 1e-9)
            assert np.all(pts <= out_o.upper[:2] + 1e-9)
        # Monotonicity: nested interval gives nested positional box.
        assert np.all(out_i.lower[:2] >= out_o.lower[:2] - 1e-12)
        assert np.all(out_i.upper[:2] <= out_o.upper[:2] + 1e-12)


class TestSpatialIndex:
    def test_single_entry(self):
        ix = SpatialIndex([(Box([0, 0, 0], [1, 1, 1]), 42)])
        assert list(index_knn(ix, [5.0, 5.0, 5.0], 1)) == [42]

    def test_collinear_order(self):
        boxes = [(Box([d, 0, 0], [d + 0.5, 1, 1]), i)
                 for i, d in enumerate([1.0, 2.0, 3.0])]
        ix = SpatialIndex(boxes)
        assert list(index_knn(ix, [0.0, 0.5, 0.5], 2)) == [0, 1]

    def test_empty_and_bad_k(self):
        with pytest.raises(GeometryError):
            SpatialIndex([])
        ix = SpatialIndex([(Box([0, 0, 0], [1, 1, 1]), 0)])
        with pytest.raises(GeometryError):
            ix.knn([0, 0, 0], 2)

    def test_matches_brute_force(self):
        # 729 random boxes, 100 queries, k in {1, 5, 20}.
        rng = np.random.default_rng(11)
        lows = rng.uniform(-4, 4, (729, 3))
        widths = rng.uniform(0.05, 0.8, (729, 3))
        entries = [(Box(lows[i], lows[i] + widths[i]), i) for i in range(729)]
        ix = SpatialIndex(entries)
        for _ in range(100):
            q = rng.uniform(-5, 5, 3)
            # Brute force with explicit loops.
            dists = []
            for i in range(729):
                gap = np.maximum(np.maximum(lows[i] - q, q - (lows[i] + widths[i])), 0)
                dists.append((float(np.sqrt(np.sum(gap ** 2))), i))
            brute = [i for _, i in sorted(dists)]
            for k in (1, 5, 20):
                np.testing.assert_array_equal(index_knn(ix, q, k), brute[:k])

    def test_tie_break_by_key(self):
        entries = [(Box([0, 0, 0], [1, 1, 1]), 5), (Box([0, 0, 0], [1, 1, 1]), 2)]
        ix = SpatialIndex(entries)
        assert list(ix.knn([0.5, 0.5, 0.5], 2)) == [2, 5]


def test_wrap_angle():
    assert wrap_angle(np.pi) == -np.pi
    assert wrap_angle(-np.pi) == -np.pi
    np.testing.assert_allclose(wrap_angle(3 * np.pi / 2), -np.pi / 2)
    np.testing.assert_allclose(wrap_angle(-3 * np.pi), -np.pi)
