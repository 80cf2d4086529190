import numpy as np
import pytest

from eqsynth.geometry import Box, wrap_angle
from eqsynth.reach import ShipModel, build_reach_dict, compute_tube
from eqsynth.grid import GridSpec
from eqsynth.symmetry import (
    GroupElement,
    apply_disturbance,
    apply_inverse_state,
    apply_state,
    compose,
    frame_of,
    rotated_disturbance_union,
    transform_tube_from_cell,
)
from eqsynth.validation import integrate_constant


def random_states(rng, n):
    out = rng.uniform(-8, 8, (n, 3))
    out[:, 2] = rng.uniform(-np.pi, np.pi - 1e-9, n)
    return out


class TestFrames:
    def test_origin_is_identity(self):
        g = frame_of(np.zeros(3))
        x = np.array([1.2, -0.4, 0.7])
        np.testing.assert_allclose(apply_state(g, x), x, atol=1e-15)

    def test_zero_heading_is_pure_translation(self):
        g = frame_of([1.0, 2.0, 0.0])
        np.testing.assert_allclose(apply_state(g, [3.0, 4.0, np.pi / 4]),
                                   [2.0, 2.0, np.pi / 4], atol=1e-12)

    def test_frame_sends_state_to_origin(self):
        rng = np.random.default_rng(0)
        for x in random_states(rng, 1000):
            np.testing.assert_allclose(apply_state(frame_of(x), x), 0, atol=1e-9)

    def test_quarter_turn_example(self):
        g = frame_of([0.0, 0.0, np.pi / 2])
        np.testing.assert_allclose(apply_state(g, [0.0, 1.0, np.pi / 2]),
                                   [1.0, 0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(apply_inverse_state(g, [1.0, 0.0, 0.0]),
                                   [0.0, 1.0, np.pi / 2], atol=1e-12)

    def test_identity_inverse(self):
        g = GroupElement(0.0, np.zeros(3))
        y = np.array([0.3, -0.7, 1.1])
        np.testing.assert_allclose(apply_inverse_state(g, y), y, atol=1e-15)

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        xs = random_states(rng, 1000)
        gs = random_states(rng, 1000)
        for x, anchor in zip(xs, gs):
            g = frame_of(anchor)
            back = apply_inverse_state(g, apply_state(g, x))
            np.testing.assert_allclose(back[:2], x[:2], atol=1e-9)
            assert abs(wrap_angle(back[2] - x[2])) < 1e-9

    def test_composition_closure(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            a = frame_of(random_states(rng, 1)[0])
            b = frame_of(random_states(rng, 1)[0])
            c = compose(a, b)
            x = random_states(rng, 1)[0]
            direct = apply_state(a, apply_state(b, x))
            via_c = apply_state(c, x)
            np.testing.assert_allclose(via_c[:2], direct[:2], atol=1e-9)
            assert abs(wrap_angle(via_c[2] - direct[2])) < 1e-9


class TestDisturbanceMap:
    def test_rotation_only_on_plane(self):
        g = frame_of([5.0, -2.0, np.pi / 2])
        w = np.array([0.01, 0.0, 0.004])
        psi = apply_disturbance(g, w)
        np.testing.assert_allclose(psi, [0.0, -0.01, 0.004], atol=1e-12)

    def test_rotated_union_within_paper_box(self):
        # psi_alpha(W) subset of [-0.01, 0.01]^3 for 1000 random frames.
        w_half = 0.01 / np.sqrt(2.0)
        w_box = Box([-w_half] * 3, [w_half] * 3)
        rng = np.random.default_rng(3)
        for anchor in random_states(rng, 1000):
            g = frame_of(anchor)
            corners = w_box.corners()
            images = apply_disturbance(g, corners)
            assert np.all(np.abs(images) <= 0.01 + 1e-12)

    def test_rotated_union_bound(self):
        w_half = 0.01 / np.sqrt(2.0)
        union = rotated_disturbance_union(Box([-w_half] * 3, [w_half] * 3))
        np.testing.assert_allclose(union.upper[:2], [0.01, 0.01], atol=1e-12)
        np.testing.assert_allclose(union.upper[2], w_half, atol=1e-15)
        assert Box([-0.01] * 3, [0.01] * 3).contains_box(union)


class TestTrajectoryEquivariance:
    def test_theorem_trajectory_level(self):
        # phi_a(xi(x0, u, w; t)) == xi(phi_a(x0), u, psi_a(w); t) at
        # t in {0, tau/4, tau/2, tau}, within 1e-6.
        rng = np.random.default_rng(4)
        tau = 3.0
        for _ in range(100):
            x0 = random_states(rng, 1)[0]
            alpha = frame_of(random_states(rng, 1)[0])
            u = rng.uniform([-0.18, -0.05, -0.1], [0.18, 0.05, 0.1])
            w = rng.uniform(-0.007, 0.007, 3)
            traj = integrate_constant(x0, u, w, tau, 3000)
            traj_t = integrate_constant(apply_state(alpha, x0), u,
                                        apply_disturbance(alpha, w), tau, 3000)
            for idx in (0, 750, 1500, 3000):
                lhs = apply_state(alpha, traj[idx])
                rhs = traj_t[idx]
                assert np.all(np.abs(lhs[:2] - rhs[:2]) < 1e-6)
                assert abs(wrap_angle(lhs[2] - rhs[2])) < 1e-6

    def test_theorem_tube_level(self):
        # Transformed over-approximating tube contains sampled endpoints of
        # the transformed problem.
        rng = np.random.default_rng(5)
        w_box = Box([-0.01] * 3, [0.01] * 3)
        control = np.array([0.12, 0.03, -0.06])
        x0_box = Box([0.0, 0.0, -0.05], [0.2, 0.1, 0.05])
        tube = compute_tube(ShipModel(control, w_box, 3.0), x0_box)
        alpha = frame_of([1.0, -2.0, 0.9])
        last = tube.last()
        for _ in range(1000):
            x0 = apply_state(alpha, x0_box.sample(rng, 1)[0])
            # Simulate the transformed problem directly.
            w = apply_disturbance(alpha, rng.uniform(w_box.lower, w_box.upper))
            end = integrate_constant(x0, control, w, 3.0, 600)[-1]
            # Map back: the endpoint must lie in the original tube's image.
            back = apply_inverse_state(alpha, end)
            back[2] = end[2] - alpha.heading + 0  # unwrapped comparison below
            pos_ok = np.all(back[:2] >= last.lower[:2] - 1e-7) and \
                np.all(back[:2] <= last.upper[:2] + 1e-7)
            th_back = end[2] - (-alpha.heading)  # xi kept theta unwrapped
            assert pos_ok


class TestTubeTransform:
    def test_point_cell_identity(self):
        rd_tube = compute_tube(
            ShipModel(np.array([0.1, 0.0, 0.05]), Box([-0.005] * 3, [0.005] * 3), 3.0),
            Box(np.zeros(3), np.zeros(3)))
        cell = Box(np.zeros(3), np.zeros(3))
        out = transform_tube_from_cell(rd_tube, cell)
        np.testing.assert_allclose(out.boxes_array, rd_tube.boxes_array, atol=1e-12)

    def test_point_cell_translation(self):
        rd_tube = compute_tube(
            ShipModel(np.array([0.1, 0.02, 0.0]), Box([-0.005] * 3, [0.005] * 3), 3.0),
            Box(np.zeros(3), np.zeros(3)))
        cell = Box([1.0, 2.0, 0.0], [1.0, 2.0, 0.0])
        out = transform_tube_from_cell(rd_tube, cell)
        expected = rd_tube.boxes_array + np.array([1.0, 2.0, 0.0])
        np.testing.assert_allclose(out.boxes_array, expected, atol=1e-12)

    def test_vertex_frames_contained(self):
        # For every vertex of the cell, the inverse-frame image of each tube
        # box is inside the corresponding output box.
        rd_tube = compute_tube(
            ShipModel(np.array([0.14, -0.02, 0.06]), Box([-0.01] * 3, [0.01] * 3), 3.0),
            Box(np.zeros(3), np.zeros(3)))
        cell = Box([2.0, 1.0, 0.3], [2.5, 1.5, 0.5])
        out = transform_tube_from_cell(rd_tube, cell)
        for v in cell.corners():
            g = frame_of(v)
            for seg_in, seg_out in zip(rd_tube.segments, out.segments):
                for corner in seg_in.box.corners():
                    img = apply_inverse_state(g, corner)
                    img[2] = corner[2] + v[2]  # unwrapped heading
                    assert np.all(img >= seg_out.box.lower - 1e-9)
                    assert np.all(img <= seg_out.box.upper + 1e-9)

    def test_dense_frame_sampling_containment(self):
        # Corollary-level check: 50 sampled in-cell frames, every transformed
        # tube box stays inside the output boxes (heading extent [0, 0.2]).
        rng = np.random.default_rng(6)
        rd_tube = compute_tube(
            ShipModel(np.array([0.16, 0.04, -0.08]), Box([-0.01] * 3, [0.01] * 3), 3.0),
            Box(np.zeros(3), np.zeros(3)))
        cell = Box([0.5, -1.0, 0.0], [1.0, -0.5, 0.2])
        out = transform_tube_from_cell(rd_tube, cell)
        for x0 in cell.sample(rng, 50):
            g = frame_of(x0)
            for seg_in, seg_out in zip(rd_tube.segments, out.segments):
                for corner in seg_in.box.corners():
                    img = apply_inverse_state(g, corner)
                    img[2] = corner[2] + x0[2]
                    assert np.all(img >= seg_out.box.lower - 1e-9)
                    assert np.all(img <= seg_out.box.upper + 1e-9)

    def test_monte_carlo_trajectories_inside_transformed_tube(self):
        # Corollary 1: concrete trajectories from the cell stay inside the
        # transformed relative tube at matching times.
        rng = np.random.default_rng(7)
        sc_w = 0.01 / np.sqrt(2.0)
        w_box = Box([-sc_w] * 3, [sc_w] * 3)
        wbar = Box([-0.01] * 3, [0.01] * 3)
        control = np.array([0.16, -0.04, 0.09])
        rd_tube = compute_tube(ShipModel(control, wbar, 3.0), Box(np.zeros(3), np.zeros(3)))
        cell = Box([3.0, 2.0, 0.8], [3.5, 2.5, 1.0])
        out = transform_tube_from_cell(rd_tube, cell)
        steps = 300
        h = 3.0 / steps
        from eqsynth.validation import rk4_step
        x = cell.sample(rng, 500)
        t = 0.0
        for k in range(steps):
            w = rng.uniform(w_box.lower, w_box.upper, size=(500, 3))
            x = rk4_step(x, control, w, h)
            t += h
            seg = out.segments[min(int(t / 0.75 - 1e-9), 3)].box
            assert np.all(x >= seg.lower - 1e-9)
            assert np.all(x <= seg.upper + 1e-9)
        last = out.last()
        assert np.all(x >= last.lower - 1e-9)
        assert np.all(x <= last.upper + 1e-9)
