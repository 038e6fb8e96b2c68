"""Whole-session pipeline: simulate a recording, calibrate from it,
reconstruct poses and evaluate against the simulator's answer key."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import glove_sim as gs
from . import metrics, so3
from .acquisition import protocol as proto
from .acquisition.clock import ClockCorrector, best_offset
from .acquisition.recording import iter_packets, record
from .acquisition.sync import DORSAL, SyncPolicy, synchronize
from .calibration import (
    CalibrationError,
    DorsalAlignment,
    ReferenceCapture,
    calibrate_shape,
    contact_captures,
    reconstruct_pose,
    reconstruct_poses,
    solve_alignment,
    solve_dorsal_alignment,
)
from .hand_model import (
    FINGERS,
    HandModel,
    PoseParams,
    build_mesh,
    link_rotations,
    model_hash,
    vertex_trajectories,
)

REPORT_SCHEMA_VERSION = 1
START_NS = 1_000_000_000
PROBE_DELAY_NS = 1_000_000
PROBE_TURNAROUND_NS = 100_000


class DataError(ValueError):
    """Input recording or answer key is unusable."""


# ----------------------------------------------------------------------
# scenarios


def _calibration_segments(hold_s: float = 2.0) -> list[dict]:
    return [{"kind": k, "duration_s": hold_s} for k in gs.REFERENCE_KINDS + gs.PINCH_KINDS]


PRESETS = {
    "calibration": {"segments": _calibration_segments()},
    "pinch": {
        "segments": _calibration_segments()
        + [{"kind": k, "duration_s": 10.0, "wrist_deg": 15.0} for k in gs.PINCH_SEQ_KINDS]
    },
    "drift": {"rate_hz": 10.0, "segments": [{"kind": "hold", "duration_s": 1800.0}]},
}

DEFAULT_SCENARIO = {
    "name": "calibration",
    "rate_hz": 100.0,
    "seed": 0,
    "beta": "random",
    "beta_range": 2.0,
    "extrinsics": "random",
    "max_mount_deg": 30.0,
    "noise": {},
    "jitter_ns": 0,
    "clock_offset_ns": 0,
    "dorsal": True,
    "segments": _calibration_segments(),
}


def make_scenario(preset: str = "calibration", **overrides) -> dict:
    if preset not in PRESETS:
        raise KeyError(f"unknown scenario preset {preset!r}; choose from {sorted(PRESETS)}")
    sc = copy.deepcopy(DEFAULT_SCENARIO)
    sc.update(copy.deepcopy(PRESETS[preset]))
    sc["name"] = preset
    for key, value in overrides.items():
        if value is not None:
            sc[key] = value
    return validate_scenario(sc)


def validate_scenario(sc: dict) -> dict:
    """Fill defaults and check a scenario document; raises ValueError."""
    out = copy.deepcopy(DEFAULT_SCENARIO)
    unknown = set(sc) - set(out)
    if unknown:
        raise ValueError(f"unknown scenario fields {sorted(unknown)}")
    out.update(sc)
    if float(out["rate_hz"]) <= 0:
        raise ValueError("rate_hz must be positive")
    if not out["segments"]:
        raise ValueError("scenario has no segments")
    for seg in out["segments"]:
        if seg.get("kind") not in gs.SEGMENT_CODES or seg["kind"] == "transition":
            raise ValueError(f"bad segment kind {seg.get('kind')!r}")
        if float(seg.get("duration_s", 0)) <= 0:
            raise ValueError(f"segment {seg['kind']} needs a positive duration_s")
    gs.NoiseModel(**out["noise"])  # field validation
    return out


@dataclass
class SimulatedSession:
    scenario: dict
    trajectory: gs.Trajectory
    extrinsics: gs.SensorExtrinsics
    noise: gs.NoiseModel
    imu: gs.ImuStreams
    dorsal: gs.DorsalStream | None
    packets: list
    packet_timestamps: list


def _beta(sc: dict, model: HandModel, rng) -> np.ndarray:
    beta = sc["beta"]
    if beta == "random":
        return rng.uniform(-sc["beta_range"], sc["beta_range"], model.n_shape)
    if beta is None:
        return np.zeros(model.n_shape)
    return model.check_beta(beta)


def simulate_session(model: HandModel, scenario: dict) -> SimulatedSession:
    sc = validate_scenario(scenario)
    seeds = np.random.SeedSequence(int(sc["seed"])).spawn(4)
    beta = _beta(sc, model, np.random.default_rng(seeds[0]))
    if sc["extrinsics"] == "random":
        extr = gs.SensorExtrinsics.random(np.random.default_rng(seeds[1]), max_mount_deg=sc["max_mount_deg"])
    else:
        extr = gs.SensorExtrinsics.from_dict(sc["extrinsics"])
    noise_kw = {"seed": int(seeds[3].generate_state(1, np.uint64)[0] >> np.uint64(1))}
    noise_kw.update(sc["noise"])
    noise = gs.NoiseModel(**noise_kw)
    traj_seed = int(seeds[2].generate_state(1)[0])
    builder = gs.TrajectoryBuilder(model, beta, sc["rate_hz"], seed=traj_seed, start_ns=START_NS)
    for seg in sc["segments"]:
        builder.hold(seg["kind"], float(seg["duration_s"]), wrist_deg=float(seg.get("wrist_deg", 0.0)))
    traj = builder.build()
    imu = gs.synthesize_imu(traj, extr, noise, model, jitter_ns=int(sc["jitter_ns"]),
                            clock_offset_ns=int(sc["clock_offset_ns"]))
    dorsal = gs.synthesize_dorsal(traj, extr, noise) if sc["dorsal"] else None
    packets, stamps = session_packets(traj, imu, dorsal, int(sc["clock_offset_ns"]))
    return SimulatedSession(sc, traj, extr, noise, imu, dorsal, packets, stamps)


def session_packets(traj: gs.Trajectory, imu: gs.ImuStreams, dorsal: gs.DorsalStream | None, clock_offset_ns: int = 0):
    """Interleave all packets of a session in emission order.

    Returns the packets and a host-clock send time for each (for paced
    serving). Order per tick: segment markers, the 16 IMU packets, dorsal.
    """
    T, N = imu.timestamps.shape
    t0 = int(traj.timestamps[0]) - 5 * PROBE_DELAY_NS
    t2 = t0 + PROBE_DELAY_NS
    t3 = t2 + PROBE_TURNAROUND_NS
    probe = proto.ClockProbe(0, t0 + clock_offset_ns, t2, t3, t3 + PROBE_DELAY_NS + clock_offset_ns)
    packets = [proto.encode_packet(probe)]
    stamps = [t0]
    markers = {}
    for seg in traj.segments:
        markers.setdefault(seg.start, []).append(gs.SEGMENT_CODES[seg.kind])
        markers.setdefault(seg.stop, []).append(gs.SEGMENT_CODES["transition"])
    imu_pk = proto.encode_imu_batch(
        np.tile(np.arange(N), T), imu.timestamps.reshape(-1), imu.orientations.reshape(-1, 4),
        imu.angular_velocity.reshape(-1, 3), imu.acceleration.reshape(-1, 3),
    )
    dorsal_pk = None
    if dorsal is not None:
        dorsal_pk = proto.encode_dorsal_batch(dorsal.timestamps, so3.matrix_to_quat(dorsal.rotations), dorsal.translations)
    last = int(traj.timestamps[-1]) + int(round(1e9 / traj.rate_hz))
    for k in range(T + 1):
        host_t = int(traj.timestamps[k]) if k < T else last
        for code in markers.get(k, []):
            packets.append(proto.encode_packet(proto.SegmentMarker(code, host_t + clock_offset_ns)))
            stamps.append(host_t)
        if k == T:
            break
        packets.extend(imu_pk[k * N:(k + 1) * N])
        stamps.extend([host_t] * N)
        if dorsal_pk is not None:
            packets.append(dorsal_pk[k])
            stamps.append(host_t)
    return packets, stamps


def answer_key(model: HandModel, sim: SimulatedSession, truth_name: str) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "model_hash": model_hash(model),
        "scenario": sim.scenario,
        "beta": sim.trajectory.beta.tolist(),
        "extrinsics": sim.extrinsics.to_dict(),
        "noise": sim.noise.to_dict(),
        "rate_hz": sim.trajectory.rate_hz,
        "segments": [seg.__dict__ for seg in sim.trajectory.segments],
        "truth_file": truth_name,
    }


def write_simulation(model: HandModel, sim: SimulatedSession, path) -> tuple[Path, Path, Path]:
    """Write the recording, the JSON answer key and the ground-truth arrays.

    The answer key goes to ``<path>.truth.json`` and the per-tick truth to
    ``<path>.truth.npz``.
    """
    path = Path(path)
    record(sim.packets, path)
    npz = path.with_name(path.name + ".truth.npz")
    key = path.with_name(path.name + ".truth.json")
    traj = sim.trajectory
    with open(npz, "wb") as f:
        np.savez_compressed(
            f,
            timestamps=traj.timestamps,
            root_rotations=traj.root_rotations,
            root_translations=traj.root_translations,
            joint_rotations=traj.joint_rotations,
            readings=sim.imu.truth,
        )
    write_json(key, answer_key(model, sim, npz.name))
    return path, key, npz


def load_answer_key(path):
    path = Path(path)
    try:
        key = json.loads(path.read_text())
        with np.load(path.with_name(key["truth_file"])) as z:
            truth = {k: z[k] for k in z.files}
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read answer key {path}: {exc}") from exc
    return key, truth


# ----------------------------------------------------------------------
# reading recordings


@dataclass
class RecordingData:
    imu: np.ndarray  # structured IMU rows, host clock timestamps
    dorsal: np.ndarray
    segments: list  # (kind, start, stop) host clock, stop exclusive
    clock_offset: int
    n_packets: int

    def sensor_rows(self, sensor: int) -> np.ndarray:
        return self.imu[self.imu["sensor"] == sensor]


def read_recording(path) -> RecordingData:
    data = Path(path).read_bytes()
    groups = {proto.TYPE_IMU: [], proto.TYPE_DORSAL: [], proto.TYPE_CLOCK: [], proto.TYPE_SEGMENT: []}
    n = 0
    for _, ptype, pkt in iter_packets(data):
        groups[ptype].append(pkt)
        n += 1
    probes = [proto.decode_packet(p) for p in groups[proto.TYPE_CLOCK]]
    est = best_offset(probes)
    corrector = ClockCorrector()
    if est is not None:
        corrector.update(est)
    imu = proto.decode_imu_batch(groups[proto.TYPE_IMU]).copy()
    if corrector.offset:
        imu["timestamp"] = (imu["timestamp"].astype(np.int64) + corrector.offset).astype(np.uint64)
    dorsal = proto.decode_dorsal_batch(groups[proto.TYPE_DORSAL]).copy()
    markers = [proto.decode_packet(p) for p in groups[proto.TYPE_SEGMENT]]
    segments = []
    for k, mk in enumerate(markers):
        kind = gs.SEGMENT_KINDS[mk.kind] if mk.kind < len(gs.SEGMENT_KINDS) else None
        if kind is None:
            raise DataError(f"unknown segment code {mk.kind}")
        if kind == "transition":
            continue
        stop = corrector(markers[k + 1].timestamp) if k + 1 < len(markers) else math.inf
        segments.append((kind, corrector(mk.timestamp), stop))
    return RecordingData(imu, dorsal, segments, corrector.offset, n)


@dataclass
class FrameTable:
    timestamps: np.ndarray  # (F,) pivot times
    imu_index: np.ndarray  # (F, 16) rows into RecordingData.imu
    dorsal_index: np.ndarray  # (F,), -1 when absent
    dropped: list

    def __len__(self) -> int:
        return len(self.timestamps)


def synchronize_recording(rec: RecordingData, window_ns: int = 10_000_000) -> FrameTable:
    use_dorsal = len(rec.dorsal) > 0
    streams = []
    for s in range(proto.N_IMU):
        rows = np.nonzero(rec.imu["sensor"] == s)[0]
        streams.append(list(zip(rec.imu["timestamp"][rows].astype(np.int64).tolist(), rows.tolist())))
    if use_dorsal:
        streams.append(list(zip(rec.dorsal["timestamp"].astype(np.int64).tolist(), range(len(rec.dorsal)))))
    frames, stats = synchronize(streams, SyncPolicy(window_ns=window_ns, use_dorsal=use_dorsal))
    ts = np.array([f.timestamp for f in frames], dtype=np.int64)
    idx = np.array([f.samples for f in frames], dtype=np.int64).reshape(-1, proto.N_IMU)
    dors = np.array([-1 if f.dorsal is None else f.dorsal for f in frames], dtype=np.int64)
    return FrameTable(ts, idx, dors, list(stats.dropped))


def frame_rotations(rec: RecordingData, frames: FrameTable) -> np.ndarray:
    q = rec.imu["orientation"].astype(np.float64)
    return so3.quat_to_matrix(q[frames.imu_index])


def _segment_frames(frames: FrameTable, start, stop) -> np.ndarray:
    return np.nonzero((frames.timestamps >= start) & (frames.timestamps < stop))[0]


# ----------------------------------------------------------------------
# calibration from a recording


def virtual_references(model: HandModel, kinds) -> dict:
    out = {}
    for kind in kinds:
        pose = gs.reference_pose(model, kind)
        out[kind] = link_rotations(model, pose.root_rotation, pose.joint_rotations)
    return out


@dataclass
class SessionCalibration:
    calib: object
    shape: object
    dorsal: DorsalAlignment
    notes: list


def calibrate_recording(model: HandModel, rec: RecordingData, frames: FrameTable) -> SessionCalibration:
    rot = frame_rotations(rec, frames)
    captures = {}
    dorsal_means = {}
    for kind, start, stop in rec.segments:
        if kind not in gs.REFERENCE_KINDS and kind not in gs.PINCH_KINDS:
            continue
        sel = _segment_frames(frames, start, stop)
        try:
            captures[kind] = ReferenceCapture.from_samples(kind, rot[sel])
        except CalibrationError as exc:
            raise CalibrationError(f"segment {kind} [{start}, {stop}): {exc}") from exc
        d = frames.dorsal_index[sel]
        d = d[d >= 0]
        if len(d) and kind in gs.REFERENCE_KINDS:
            q = rec.dorsal["orientation"][d].astype(np.float64)
            dorsal_means[kind] = (so3.average_rotation(so3.quat_to_matrix(q)),
                                  rec.dorsal["translation"][d].mean(axis=0))
    refs = {k: captures[k] for k in gs.REFERENCE_KINDS if k in captures}
    calib = solve_alignment(refs, virtual_references(model, refs))
    notes = []
    pinches = {k: reconstruct_pose(model, captures[k].rotations, calib) for k in gs.PINCH_KINDS if k in captures}
    if pinches:
        shape = calibrate_shape(model, contact_captures(model, pinches))
    else:
        shape = None
        notes.append("shape skipped: recording has no pinch segments")
    pairs = []
    for kind, (rd, td) in dorsal_means.items():
        root = reconstruct_pose(model, captures[kind].rotations, calib).root_rotation
        pairs.append((rd, td, root, np.zeros(3)))
    if len(pairs) >= 2:
        dorsal = solve_dorsal_alignment(pairs)
    else:
        dorsal = DorsalAlignment()
        notes.append("dorsal alignment skipped: fewer than two reference poses with tracker data")
    return SessionCalibration(calib, shape, dorsal, notes)


def reconstruct_recording(model: HandModel, rec: RecordingData, frames: FrameTable, calib, dorsal: DorsalAlignment):
    """Root rotations, root translations and joint rotations per frame."""
    rot = frame_rotations(rec, frames)
    trans = None
    if len(rec.dorsal):
        t = np.zeros((len(frames), 3))
        have = frames.dorsal_index >= 0
        t[have] = rec.dorsal["translation"][frames.dorsal_index[have]]
        trans = np.where(have[:, None], t @ dorsal.rotation.T + dorsal.translation, 0.0)
    root, _, joints = reconstruct_poses(model, rot, calib)
    return root, (np.zeros((len(frames), 3)) if trans is None else trans), joints


def segment_kind_of_frames(rec: RecordingData, frames: FrameTable) -> list:
    kinds = [None] * len(frames)
    for kind, start, stop in rec.segments:
        for k in _segment_frames(frames, start, stop):
            kinds[k] = kind
    return kinds


# ----------------------------------------------------------------------
# evaluations


def _truth_ticks(truth: dict, timestamps) -> np.ndarray:
    ts = truth["timestamps"]
    k = np.clip(np.searchsorted(ts, timestamps), 1, len(ts) - 1)
    return np.where(np.abs(ts[k - 1] - timestamps) <= np.abs(ts[k] - timestamps), k - 1, k)


def evaluate_joint(seed: int = 0, noise: dict | None = None) -> dict:
    """Two-sensor hinge: calibrate on the plate poses, then compare the
    measured hinge angle to the true one over a 0-90-0 degree sweep."""
    nm = gs.NoiseModel(**{"seed": seed, **(noise or {})})
    hinge = gs.simulate_hinge(nm)
    rot = hinge.streams.rotations()
    plates = {"rest": np.eye(3), "x_rot": so3.rot_x(-np.pi / 2), "y_rot": so3.rot_y(np.pi / 2) @ so3.rot_x(-np.pi / 2)}
    caps = {k: ReferenceCapture.from_samples(k, rot[a:b]) for k, (a, b) in hinge.reference_segments.items()}
    virt = {k: np.stack([p, p]) for k, p in plates.items()}
    calib = solve_alignment(caps, virt)
    a, b = hinge.sweep
    links = calib.A @ rot[a:b] @ np.swapaxes(calib.C, -1, -2)
    rel = np.swapaxes(links[:, 0], -1, -2) @ links[:, 1]
    measured = np.degrees(so3.twist_angle(rel, gs.HINGE_AXIS))
    reference = np.degrees(hinge.hinge_angles[a:b])
    stats = metrics.joint_error_stats(measured, reference)
    return {"kind": "joint", "seed": seed, "max_residual_deg": calib.max_residual_deg, **stats.to_dict()}


def _segment_pose(model, rot, frames, start, stop, calib) -> PoseParams:
    sel = _segment_frames(frames, start, stop)
    cap = ReferenceCapture.from_samples("segment", rot[sel])
    return reconstruct_pose(model, cap.rotations, calib), sel


def evaluate_shape(model: HandModel, rec: RecordingData, frames: FrameTable, cal: SessionCalibration, key: dict,
                   truth: dict, seed: int = 0, sigma_mm: float = 0.5) -> dict:
    """Chamfer distance from synthetic partial scans of the true hand to
    the reconstructed mesh, one entry per pinch and reference pose."""
    rng = np.random.default_rng(seed)
    beta_true = np.asarray(key["beta"])
    beta = cal.shape.beta if cal.shape is not None else np.zeros(model.n_shape)
    rot = frame_rotations(rec, frames)
    rows = []
    for kind, start, stop in rec.segments:
        if kind not in gs.REFERENCE_KINDS + gs.PINCH_KINDS:
            continue
        pose, sel = _segment_pose(model, rot, frames, start, stop, cal.calib)
        tick = _truth_ticks(truth, frames.timestamps[sel[len(sel) // 2]:sel[len(sel) // 2] + 1])[0]
        true_pose = PoseParams(truth["root_rotations"][tick], truth["root_translations"][tick], truth["joint_rotations"][tick])
        # the scan is taken from the back of the hand
        view = -(true_pose.root_rotation @ np.array([0.0, 0.0, 1.0]))
        cloud = gs.partial_point_cloud(build_mesh(model, beta_true, true_pose), view, rng, sigma_mm)
        d = frames.dorsal_index[sel]
        d = d[d >= 0]
        if len(d):
            pose.root_translation = rec.dorsal["translation"][d].mean(axis=0) @ cal.dorsal.rotation.T + cal.dorsal.translation
        mesh = build_mesh(model, beta, pose)
        e_sr = metrics.chamfer_unidirectional(cloud, mesh.vertices)
        rows.append({"pose": kind, "points": int(len(cloud)), "e_sr_mm2": e_sr, "rms_mm": math.sqrt(e_sr)})
    mean_rms = float(np.mean([r["rms_mm"] for r in rows])) if rows else None
    return {"kind": "shape", "poses": rows, "mean_rms_mm": mean_rms}


def evaluate_pinch(model: HandModel, rec: RecordingData, frames: FrameTable, cal: SessionCalibration) -> dict:
    """Mean thumb-to-fingertip distance over each held pinch sequence."""
    beta = cal.shape.beta if cal.shape is not None else np.zeros(model.n_shape)
    root, _, joints = reconstruct_recording(model, rec, frames, cal.calib, cal.dorsal)
    per_finger = {}
    for kind, start, stop in rec.segments:
        if kind not in gs.PINCH_SEQ_KINDS:
            continue
        finger = kind.rsplit("_", 1)[1]
        sel = _segment_frames(frames, start, stop)
        if len(sel) == 0:
            continue
        per_finger[finger] = metrics.pinch_distance(model, beta, root[sel], joints[sel], fingers=(finger,))[finger]
    if not per_finger:
        raise DataError("recording has no pinch sequences")
    return {
        "kind": "pinch",
        "per_finger_mm": per_finger,
        "mean_mm": metrics._mean(list(per_finger.values())),
    }


def evaluate_interaction(model: HandModel, rec: RecordingData, frames: FrameTable, cal: SessionCalibration,
                         key: dict, truth: dict, object_mesh=None, stride: int = 10) -> dict:
    """Point-to-mesh distance of every reconstructed fingertip, sampled every
    ``stride`` frames, to the true hand surface or to a given object."""
    beta = cal.shape.beta if cal.shape is not None else np.zeros(model.n_shape)
    root, trans, joints = reconstruct_recording(model, rec, frames, cal.calib, cal.dorsal)
    sel = np.arange(0, len(frames), stride)
    tips = vertex_trajectories(model, beta, root[sel], trans[sel], joints[sel], model.fingertips)
    ticks = _truth_ticks(truth, frames.timestamps[sel])
    beta_true = np.asarray(key["beta"])
    dist = np.empty((len(sel), len(FINGERS)))
    fixed = None if object_mesh is None else metrics.TriangleBVH(*object_mesh)
    for n, t in enumerate(ticks):
        if fixed is None:
            pose = PoseParams(truth["root_rotations"][t], truth["root_translations"][t], truth["joint_rotations"][t])
            mesh = build_mesh(model, beta_true, pose)
            bvh = metrics.TriangleBVH(mesh.vertices, mesh.faces)
        else:
            bvh = fixed
        for f in range(len(FINGERS)):
            dist[n, f] = bvh.query(tips[n, f])
    return {
        "kind": "interaction",
        "target": "true hand surface" if object_mesh is None else "object mesh",
        "frames": int(len(sel)),
        "per_finger_mean_mm": {f: metrics._mean(dist[:, k]) for k, f in enumerate(FINGERS)},
        "per_finger_max_mm": {f: float(dist[:, k].max()) for k, f in enumerate(FINGERS)},
    }


def evaluate_drift(rec: RecordingData, truth: dict) -> dict:
    readings = truth["readings"]
    T, N = readings.shape[:2]
    measured = np.empty((T, N, 3, 3))
    stamps = None
    for s in range(N):
        rows = rec.sensor_rows(s)
        if len(rows) != T:
            raise DataError(f"sensor {s} has {len(rows)} samples, answer key has {T}")
        measured[:, s] = so3.quat_to_matrix(rows["orientation"].astype(np.float64))
        if stamps is None:
            stamps = rows["timestamp"].astype(np.int64)
    rep = metrics.drift_report(measured, readings, truth["timestamps"])
    return {"kind": "drift", **rep.to_dict(), "final_deg": rep.final}


# ----------------------------------------------------------------------
# JSON helpers


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dumps(doc, compact: bool = False) -> str:
    layout = {"separators": (",", ":")} if compact else {"indent": 1}
    return json.dumps(doc, sort_keys=True, default=_jsonable, allow_nan=False, **layout) + "\n"


def write_json(path, doc, compact: bool = False) -> None:
    Path(path).write_text(dumps(doc, compact))


def pose_quaternions(root, trans, joints) -> list:
    rq = so3.matrix_to_quat(root)
    jq = so3.matrix_to_quat(joints)
    return [
        {"root_rotation": rq[k].tolist(), "root_translation": np.asarray(trans[k]).tolist(), "joint_rotations": jq[k].tolist()}
        for k in range(len(root))
    ]


__all__ = [
    "DORSAL",
    "DataError",
    "PRESETS",
    "calibrate_recording",
    "evaluate_drift",
    "evaluate_interaction",
    "evaluate_joint",
    "evaluate_pinch",
    "evaluate_shape",
    "make_scenario",
    "read_recording",
    "reconstruct_recording",
    "simulate_session",
    "synchronize_recording",
    "write_simulation",
]
