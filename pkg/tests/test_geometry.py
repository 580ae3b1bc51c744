import math

import numpy as np
import pytest

from grasp_refinery.errors import InvalidGraspError
from grasp_refinery.geometry import (
    GraspPose,
    GraspRectangle,
    angle_distance,
    canonical_angle,
    grasp_success,
    intersection_area,
    iou,
    max_iou,
    pose_from_dict,
    pose_to_dict,
    rect_from_grasp,
)

from _oracles import mc_iou, random_pose_pair


def test_canonical_angle_range_and_period():
    rng = np.random.default_rng(11)
    for theta in rng.uniform(-20.0, 20.0, size=500):
        folded = canonical_angle(theta)
        assert -math.pi / 2 < folded <= math.pi / 2
        assert abs(math.sin(folded - theta)) < 1e-9  # same line modulo pi

    assert canonical_angle(math.pi / 2) == pytest.approx(math.pi / 2)
    assert canonical_angle(-math.pi / 2) == pytest.approx(math.pi / 2)
    assert canonical_angle(math.pi) == pytest.approx(0.0)


def test_pose_rejects_degenerate_values():
    with pytest.raises(InvalidGraspError):
        GraspPose(0.0, 0.0, 0.0, 0.0, 5.0)
    with pytest.raises(InvalidGraspError):
        GraspPose(0.0, 0.0, 0.0, 5.0, -1.0)
    with pytest.raises(InvalidGraspError):
        GraspPose(float("nan"), 0.0, 0.0, 5.0, 5.0)
    with pytest.raises(InvalidGraspError):
        GraspPose(0.0, float("inf"), 0.0, 5.0, 5.0)


def test_pose_canonicalizes_angle_on_construction():
    pose = GraspPose(1.0, 2.0, math.pi + 0.3, 10.0, 4.0)
    assert pose.angle == pytest.approx(0.3)


def test_pose_dict_round_trip():
    pose = GraspPose(3.25, 7.5, -0.8, 22.0, 9.5)
    again = pose_from_dict(pose_to_dict(pose))
    assert again == pose


def test_rect_corners_axis_aligned():
    rect = rect_from_grasp(GraspPose(10.0, 20.0, 0.0, 8.0, 4.0))
    expected = {(6.0, 18.0), (14.0, 18.0), (14.0, 22.0), (6.0, 22.0)}
    assert {(round(x, 9), round(y, 9)) for x, y in rect.corners} == expected
    assert rect.area == pytest.approx(32.0)


def test_rect_rejects_bad_corner_arrays():
    with pytest.raises(InvalidGraspError):
        GraspRectangle(np.zeros((3, 2)))
    # clockwise ordering has negative shoelace area
    with pytest.raises(InvalidGraspError):
        GraspRectangle(np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]))
    # a parallelogram that is not a rectangle pair of opposite sides
    with pytest.raises(InvalidGraspError):
        GraspRectangle(np.array([[0.0, 0.0], [2.0, 0.0], [2.5, 1.0], [0.0, 1.0]]))


def test_iou_identity_and_bounds():
    rng = np.random.default_rng(21)
    for _ in range(200):
        a, b = random_pose_pair(rng)
        ra, rb = rect_from_grasp(a), rect_from_grasp(b)
        value = iou(ra, rb)
        assert 0.0 <= value <= 1.0
        assert iou(ra, ra) == pytest.approx(1.0, abs=1e-9)


def test_iou_symmetry():
    rng = np.random.default_rng(22)
    for _ in range(1000):
        a, b = random_pose_pair(rng)
        ra, rb = rect_from_grasp(a), rect_from_grasp(b)
        assert iou(ra, rb) == pytest.approx(iou(rb, ra), abs=1e-9)


def test_iou_axis_aligned_hand_value():
    # unit-offset 2x2 squares share a 1x2 strip: 2 / (4 + 4 - 2) = 1/3
    a = rect_from_grasp(GraspPose(0.0, 0.0, 0.0, 2.0, 2.0))
    b = rect_from_grasp(GraspPose(1.0, 0.0, 0.0, 2.0, 2.0))
    assert intersection_area(a, b) == pytest.approx(2.0, abs=1e-12)
    assert iou(a, b) == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_iou_disjoint_and_touching():
    a = rect_from_grasp(GraspPose(0.0, 0.0, 0.0, 2.0, 2.0))
    far = rect_from_grasp(GraspPose(10.0, 0.0, 0.0, 2.0, 2.0))
    touching = rect_from_grasp(GraspPose(2.0, 0.0, 0.0, 2.0, 2.0))
    assert iou(a, far) == 0.0
    assert iou(a, touching) == pytest.approx(0.0, abs=1e-9)


def test_iou_nested_rotation_invariant_value():
    # the small rectangle sits fully inside the big one: iou = area ratio
    for angle in (0.0, 0.3, -1.2, math.pi / 4):
        small = rect_from_grasp(GraspPose(50.0, 50.0, angle, 10.0, 4.0))
        big = rect_from_grasp(GraspPose(50.0, 50.0, angle, 20.0, 8.0))
        assert iou(small, big) == pytest.approx(0.25, abs=1e-9)


def test_iou_rigid_motion_invariance():
    rng = np.random.default_rng(23)
    for _ in range(300):
        a, b = random_pose_pair(rng)
        base = iou(rect_from_grasp(a), rect_from_grasp(b))
        phi = rng.uniform(-math.pi, math.pi)
        tx, ty = rng.uniform(-500.0, 500.0, size=2)
        cos_p, sin_p = math.cos(phi), math.sin(phi)

        def moved(p):
            x = cos_p * p.center_x - sin_p * p.center_y + tx
            y = sin_p * p.center_x + cos_p * p.center_y + ty
            return GraspPose(x, y, p.angle + phi, p.opening, p.jaw_size)

        shifted = iou(rect_from_grasp(moved(a)), rect_from_grasp(moved(b)))
        assert shifted == pytest.approx(base, abs=1e-6)


def test_iou_monte_carlo_agreement_sample():
    rng = np.random.default_rng(24)
    worst = 0.0
    for _ in range(60):
        a, b = random_pose_pair(rng)
        exact = iou(rect_from_grasp(a), rect_from_grasp(b))
        estimate = mc_iou(a, b, rng)
        worst = max(worst, abs(exact - estimate))
    assert worst <= 2e-2


def test_angle_distance_is_pi_periodic_metric():
    rng = np.random.default_rng(25)
    for _ in range(500):
        a, b, c = rng.uniform(-10.0, 10.0, size=3)
        dab = angle_distance(a, b)
        assert dab >= 0.0
        assert dab == pytest.approx(angle_distance(b, a), abs=1e-12)
        assert dab <= angle_distance(a, c) + angle_distance(c, b) + 1e-9
        assert angle_distance(a, a + math.pi) == pytest.approx(0.0, abs=1e-9)
    assert angle_distance(math.pi / 2 - 0.01, -math.pi / 2 + 0.01) == pytest.approx(
        0.02, abs=1e-9
    )


def test_max_iou_matches_brute_force():
    rng = np.random.default_rng(26)
    for _ in range(100):
        query, _ = random_pose_pair(rng)
        gts = [random_pose_pair(rng)[0] for _ in range(5)]
        best, index = max_iou(query, gts)
        qrect = rect_from_grasp(query)
        scores = [iou(qrect, rect_from_grasp(g)) for g in gts]
        assert best == max(scores)
        assert index == scores.index(max(scores))


def test_max_iou_tie_breaks_to_lowest_index():
    query = GraspPose(5.0, 5.0, 0.0, 4.0, 4.0)
    twin = GraspPose(5.0, 5.0, 0.0, 4.0, 4.0)
    best, index = max_iou(query, [twin, twin, twin])
    assert best == pytest.approx(1.0)
    assert index == 0


def test_grasp_success_needs_both_gates():
    gt = [GraspPose(50.0, 50.0, 0.0, 30.0, 10.0)]
    good = GraspPose(52.0, 50.0, 0.1, 30.0, 10.0)
    wrong_angle = GraspPose(52.0, 50.0, 1.2, 30.0, 10.0)
    wrong_place = GraspPose(150.0, 150.0, 0.1, 30.0, 10.0)
    assert grasp_success(good, gt, 0.25, math.radians(30.0))
    assert not grasp_success(wrong_angle, gt, 0.25, math.radians(30.0))
    assert not grasp_success(wrong_place, gt, 0.25, math.radians(30.0))
    # angle gate passes against a second label even when the first fails it
    two = [GraspPose(50.0, 50.0, 1.2, 30.0, 10.0), GraspPose(50.0, 50.0, 0.0, 30.0, 10.0)]
    assert grasp_success(good, two, 0.25, math.radians(30.0))
