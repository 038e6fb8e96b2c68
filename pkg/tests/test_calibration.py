import json
import math

import numpy as np
import pytest

from glovecal import calibration as cal
from glovecal import glove_sim as gs
from glovecal import so3
from glovecal.hand_model import (
    PoseParams,
    fingertip_positions,
    forward_kinematics,
    link_rotations,
    model_from_dict,
    model_to_dict,
    shape_energy,
)

from .helpers import simulate_captures, virtual_refs
from .oracles import random_rotations, rodrigues


# ---------------------------------------------------------------- aggregation


def test_identical_samples_have_zero_spread(rng):
    r = random_rotations(rng, 1)[0]
    mean, spread = cal.aggregate_static_segment(np.broadcast_to(r, (20, 3, 3)))
    np.testing.assert_allclose(mean, r, atol=1e-12)
    assert spread == pytest.approx(0.0, abs=1e-6)


def test_perturbed_samples_average_near_center(rng):
    r = random_rotations(rng, 1)[0]
    samples = [r @ rodrigues(rng.standard_normal(3), math.radians(rng.uniform(0, 1))) for _ in range(100)]
    mean, spread = cal.aggregate_static_segment(samples)
    assert math.degrees(so3.geodesic_angle(mean, r)) < 0.3
    assert spread <= 2.0


def test_too_few_samples():
    with pytest.raises(cal.TooFewSamples):
        cal.aggregate_static_segment(np.tile(np.eye(3), (5, 1, 1)))


def test_moving_segment_rejected():
    samples = [so3.rot_z(math.radians(a)) for a in np.linspace(0, 20, 30)]
    with pytest.raises(cal.ExcessiveSpread):
        cal.aggregate_static_segment(samples)


# ---------------------------------------------------------------- alignment


def test_identity_extrinsics_recovered(model):
    virt = virtual_refs(model)
    res = cal.solve_alignment({k: v.copy() for k, v in virt.items()}, virt)
    assert so3.geodesic_angle(res.A, np.eye(3)) < 1e-8
    assert np.max(so3.geodesic_angle(res.C, np.eye(3))) < 1e-8
    assert res.converged


def test_random_extrinsics_recovered_zero_noise(model, rng):
    virt = virtual_refs(model)
    for _ in range(10):
        A = random_rotations(rng, 1)[0]
        C = so3.random_rotation(rng, 16, max_angle=math.radians(30))
        caps = {k: A.T @ v @ C for k, v in virt.items()}
        res = cal.solve_alignment(caps, virt)
        assert so3.geodesic_angle(res.A, A) < 1e-6
        assert np.max(so3.geodesic_angle(res.C, C)) < 1e-6
        assert res.max_residual_deg < 1e-6


def test_noisy_captures_recover_within_bound(model):
    _, extr, _, caps = simulate_captures(model, 3, noise=gs.NoiseModel(seed=3), include_pinches=False)
    res = cal.solve_alignment(caps, virtual_refs(model))
    err = np.degrees(so3.geodesic_angle(res.C, extr.C))
    assert err.max() <= 2.7
    assert math.degrees(so3.geodesic_angle(res.A, extr.A)) <= 2.7
    assert res.max_residual_deg <= 2.7


def test_objective_non_increasing(model, rng):
    virt = virtual_refs(model)
    A = random_rotations(rng, 1)[0]
    C = so3.random_rotation(rng, 16, max_angle=math.radians(30))
    noisy = {k: A.T @ v @ C @ so3.random_rotation(rng, 16, max_angle=0.05) for k, v in virt.items()}
    res = cal.solve_alignment(noisy, virt)
    obj = np.asarray(res.objective)
    assert len(obj) >= 2
    assert np.all(np.diff(obj) <= 1e-12 * obj[0])


def test_runs_are_deterministic(model, rng):
    virt = virtual_refs(model)
    caps = {k: so3.random_rotation(rng, 16) for k in virt}
    a = cal.solve_alignment(caps, virt)
    b = cal.solve_alignment(caps, virt)
    assert np.array_equal(a.A, b.A) and np.array_equal(a.C, b.C)


def test_alignment_errors(model):
    virt = virtual_refs(model)
    with pytest.raises(cal.InsufficientPoses):
        cal.solve_alignment({"rest": virt["rest"]}, {"rest": virt["rest"]})
    same = {"a": virt["rest"], "b": virt["rest"]}
    with pytest.raises(so3.DegenerateMatrix):
        cal.solve_alignment(same, same)
    short = {k: v[:15] for k, v in virt.items()}
    with pytest.raises(ValueError):
        cal.solve_alignment(short, virt)


def test_accepts_reference_capture_objects(model):
    _, extr, _, caps = simulate_captures(model, 1, include_pinches=False)
    res = cal.solve_alignment(caps, virtual_refs(model))
    assert np.max(so3.geodesic_angle(res.C, extr.C)) < 1e-6
    assert res.residuals_deg.shape == (16, 3)


# ---------------------------------------------------------------- reconstruction helpers


def test_corrected_link_rotation(rng, model):
    r = random_rotations(rng, 1)[0]
    assert np.array_equal(cal.corrected_link_rotation(r, np.eye(3), np.eye(3)), r)
    traj = gs.calibration_trajectory(model, hold_s=0.3, include_pinches=False)
    extr = gs.SensorExtrinsics.random(rng)
    imu = gs.synthesize_imu(traj, extr, gs.NoiseModel.noiseless(), model)
    links = link_rotations(model, traj.root_rotations, traj.joint_rotations)
    back = cal.corrected_link_rotation(imu.rotations(), extr.A, extr.C)
    assert np.max(np.abs(back - links)) < 1e-9


def test_wrong_sensor_correction_residual(rng):
    for _ in range(50):
        A, rm = random_rotations(rng, 2)
        ci, cj = so3.random_rotation(rng, 2, max_angle=0.5)
        rw = A.T @ rm @ ci
        wrong = cal.corrected_link_rotation(rw, A, cj)
        assert so3.geodesic_angle(wrong, rm) == pytest.approx(so3.geodesic_angle(ci, cj), abs=1e-9)


def test_joint_rotation_conventions(rng):
    r, p = random_rotations(rng, 2)
    np.testing.assert_allclose(cal.joint_rotation(r, r), np.eye(3), atol=1e-12)
    np.testing.assert_allclose(cal.joint_rotation(r, np.eye(3)), r, atol=1e-15)
    np.testing.assert_allclose(cal.joint_rotation(r, np.eye(3), world_frame=True), r, atol=1e-15)
    np.testing.assert_allclose(cal.joint_rotation(r, p), p.T @ r, atol=1e-15)
    np.testing.assert_allclose(cal.joint_rotation(r, p, world_frame=True), r @ p.T, atol=1e-15)


def test_fk_round_trip_through_joint_rotations(model, rng):
    pose = PoseParams(random_rotations(rng, 1)[0], np.zeros(3), so3.random_rotation(rng, 15, max_angle=1.0))
    rot, _ = forward_kinematics(model, np.zeros(10), pose)
    joints = np.array([cal.joint_rotation(rot[i], rot[model.parents[i]]) for i in range(1, 16)])
    again, _ = forward_kinematics(model, np.zeros(10), PoseParams(rot[0], np.zeros(3), joints))
    assert np.max(np.abs(again - rot)) < 1e-9


def test_reconstruct_zero_noise_exact(model):
    traj, extr, imu, caps = simulate_captures(model, 2)
    res = cal.solve_alignment({k: caps[k] for k in gs.REFERENCE_KINDS}, virtual_refs(model))
    root, _, joints = cal.reconstruct_poses(model, imu.rotations(), res)
    assert np.max(so3.geodesic_angle(joints, traj.joint_rotations)) < 1e-6
    assert np.max(so3.geodesic_angle(root, traj.root_rotations)) < 1e-6
    one = cal.reconstruct_pose(model, imu.rotations()[123], res)
    np.testing.assert_allclose(one.joint_rotations, joints[123], atol=1e-12)


def test_missing_sensor_reported(model):
    calib = cal.CalibrationResult(np.eye(3), np.tile(np.eye(3), (16, 1, 1)), np.zeros((16, 2)), ["a", "b"], 1, True)
    frame = {i: np.eye(3) for i in range(16) if i != 7}
    with pytest.raises(cal.MissingSensor) as exc:
        cal.reconstruct_pose(model, frame, calib)
    assert exc.value.missing == [7]


def test_noisy_reconstruction_error_distribution(model):
    traj, _, imu, caps = simulate_captures(model, 4, noise=gs.NoiseModel(seed=4), include_pinches=False)
    res = cal.solve_alignment(caps, virtual_refs(model))
    _, _, joints = cal.reconstruct_poses(model, imu.rotations(), res)
    err = np.degrees(so3.geodesic_angle(joints, traj.joint_rotations))
    assert err.mean() <= 2.7
    assert err.std() <= 1.8


# ---------------------------------------------------------------- shape


def pinch_captures(model, beta):
    poses = {c.name: gs.reference_pose(model, f"pinch_{c.finger}", beta) for c in model.contacts}
    return cal.contact_captures(model, poses)


def test_contact_energy_matches_reference(model, rng):
    beta = rng.uniform(-2, 2, 10)
    caps = pinch_captures(model, rng.uniform(-2, 2, 10))
    e, g = cal.ContactEnergy(model, caps)(beta)
    e_ref, g_ref = shape_energy(model, beta, caps)
    assert e == pytest.approx(e_ref, rel=1e-12)
    np.testing.assert_allclose(g, g_ref, rtol=1e-9, atol=1e-9)


def test_mean_shape_converges_immediately(model):
    res = cal.calibrate_shape(model, pinch_captures(model, np.zeros(10)))
    assert res.converged
    assert res.n_iter <= 1
    assert res.energy < 1e-12


def test_shape_recovered_zero_noise(model):
    rng = np.random.default_rng(8)
    for _ in range(3):
        beta_true = rng.uniform(-2, 2, 10)
        res = cal.calibrate_shape(model, pinch_captures(model, beta_true))
        assert res.converged
        assert cal.fingertip_error(model, res.beta, beta_true).max() < 1.0


def test_energy_trace_non_increasing(model):
    rng = np.random.default_rng(9)
    captures = {}
    for trial in range(50):
        key = trial % 5
        if key not in captures:
            captures[key] = pinch_captures(model, rng.uniform(-2, 2, 10))
        res = cal.calibrate_shape(model, captures[key], beta0=rng.uniform(-3, 3, 10), max_iter=60)
        assert np.all(np.diff(res.trace) <= 0)
        assert np.all(np.abs(res.beta) <= 5.0)


def test_shape_needs_captures(model):
    with pytest.raises(cal.NoCaptures):
        cal.calibrate_shape(model, [])


def test_fingertip_error_zero_for_same_shape(model):
    beta = np.linspace(-1, 1, 10)
    assert np.all(cal.fingertip_error(model, beta, beta) == 0)
    assert fingertip_positions(model, beta).shape == (5, 3)


# ---------------------------------------------------------------- dorsal


def test_dorsal_identity_pairs(rng):
    rots = random_rotations(rng, 3)
    pairs = [(r, np.zeros(3), r, np.zeros(3)) for r in rots]
    d = cal.solve_dorsal_alignment(pairs)
    np.testing.assert_allclose(d.rotation, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(d.translation, 0, atol=1e-12)


def dorsal_pairs(rng, rot, trans, n, sigma=0.0):
    pairs = []
    for _ in range(n):
        rm = random_rotations(rng, 1)[0]
        tm = rng.uniform(-300, 300, 3)
        # tracker pose p_d such that rot @ p_d + trans = p_m
        rd = rot.T @ rm
        td = rot.T @ (tm - trans) + rng.standard_normal(3) * sigma
        pairs.append((rd, td, rm, tm))
    return pairs


def test_dorsal_known_transform_recovered(rng):
    rot = random_rotations(rng, 1)[0]
    trans = rng.uniform(-500, 500, 3)
    d = cal.solve_dorsal_alignment(dorsal_pairs(rng, rot, trans, 4))
    assert so3.geodesic_angle(d.rotation, rot) < 1e-6
    assert np.linalg.norm(d.translation - trans) < 1e-6


def test_dorsal_noise_translation_error(rng):
    rot = random_rotations(rng, 1)[0]
    trans = rng.uniform(-500, 500, 3)
    d = cal.solve_dorsal_alignment(dorsal_pairs(rng, rot, trans, 3, sigma=0.5))
    assert np.linalg.norm(d.translation - trans) <= 1.0


def test_dorsal_needs_two_distinct_poses(rng):
    r = random_rotations(rng, 1)[0]
    with pytest.raises(cal.InsufficientPoses):
        cal.solve_dorsal_alignment([(r, np.zeros(3), r, np.zeros(3))])
    with pytest.raises(cal.InsufficientPoses):
        cal.solve_dorsal_alignment([(r, np.zeros(3), r, np.zeros(3))] * 2)


# ---------------------------------------------------------------- persistence


def test_calibration_file_round_trip(model, tmp_path):
    _, _, _, caps = simulate_captures(model, 5)
    res = cal.solve_alignment({k: caps[k] for k in gs.REFERENCE_KINDS}, virtual_refs(model))
    shape = cal.calibrate_shape(model, pinch_captures(model, np.zeros(10)))
    dorsal = cal.DorsalAlignment(so3.rot_x(0.3), np.array([1.0, 2.0, 3.0]))
    path = tmp_path / "cal.json"
    cal.save_calibration(path, model, res, shape, dorsal)
    assert json.loads(path.read_text())["schema_version"] == 1
    c2, s2, d2 = cal.load_calibration(path, model)
    assert np.array_equal(c2.A, res.A) and np.array_equal(c2.C, res.C)
    assert np.array_equal(s2.beta, shape.beta)
    assert np.array_equal(d2.rotation, dorsal.rotation)


def test_hash_mismatch_rejected(model, tmp_path):
    res = cal.CalibrationResult(np.eye(3), np.tile(np.eye(3), (16, 1, 1)), np.zeros((16, 2)), ["a", "b"], 1, True)
    path = tmp_path / "cal.json"
    cal.save_calibration(path, model, res)
    doc = model_to_dict(model)
    doc["name"] = "someone-else"
    with pytest.raises(cal.ModelHashMismatch):
        cal.load_calibration(path, model_from_dict(doc))
