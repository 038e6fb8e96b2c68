"""Simulated glove: ground-truth trajectories and the sensor streams they produce.

Each IMU reports ``noise * drift * A^T R_link C_i`` (the inverse of the
calibration model), where ``R_link`` is the link's world rotation in the
model frame. The dorsal tracker reports the root transform seen through a
fixed tracker-from-model transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import so3
from .default_model import pinch_joints
from .hand_model import (
    FINGERS,
    N_JOINTS,
    HandModel,
    PoseParams,
    joint_rotations_from_links,
    link_rotations,
    solve_contact_pose,
)

GRAVITY = 9.80665
NS_PER_S = 1_000_000_000

REFERENCE_KINDS = ("rest", "x_rot", "y_rot")
PINCH_KINDS = tuple(f"pinch_{f}" for f in FINGERS[1:])
PINCH_SEQ_KINDS = tuple(f"pinch_seq_{f}" for f in FINGERS[1:])
SEGMENT_KINDS = ("transition",) + REFERENCE_KINDS + PINCH_KINDS + PINCH_SEQ_KINDS + ("hold", "free")
SEGMENT_CODES = {kind: code for code, kind in enumerate(SEGMENT_KINDS)}


@dataclass
class NoiseModel:
    sigma_static_deg: float = 0.8
    sigma_dynamic_deg: float = 2.5
    dynamic_threshold_dps: float = 30.0
    drift_rate_deg_per_sqrt_min: float = 1.0
    dorsal_sigma_pos_mm: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_static_deg", "sigma_dynamic_deg", "drift_rate_deg_per_sqrt_min", "dorsal_sigma_pos_mm"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def noiseless(cls, seed: int = 0) -> "NoiseModel":
        return cls(0.0, 0.0, 30.0, 0.0, 0.0, seed)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SensorExtrinsics:
    """World alignment ``A``, per-sensor mounting errors ``C`` and the
    tracker-from-model transform of the dorsal tracker."""

    A: np.ndarray
    C: np.ndarray
    dorsal_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    dorsal_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def identity(cls, n_sensors: int = 16) -> "SensorExtrinsics":
        return cls(np.eye(3), np.tile(np.eye(3), (n_sensors, 1, 1)))

    @classmethod
    def random(cls, rng: np.random.Generator, n_sensors: int = 16, max_mount_deg: float = 30.0) -> "SensorExtrinsics":
        return cls(
            A=so3.random_rotation(rng),
            C=so3.random_rotation(rng, n_sensors, max_angle=np.radians(max_mount_deg)),
            dorsal_rotation=so3.random_rotation(rng),
            dorsal_translation=rng.uniform(-500.0, 500.0, 3),
        )

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "C": self.C.tolist(),
            "dorsal_rotation": self.dorsal_rotation.tolist(),
            "dorsal_translation": self.dorsal_translation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SensorExtrinsics":
        return cls(
            np.asarray(d["A"], float),
            np.asarray(d["C"], float),
            np.asarray(d.get("dorsal_rotation", np.eye(3)), float),
            np.asarray(d.get("dorsal_translation", np.zeros(3)), float),
        )


@dataclass
class Segment:
    kind: str
    transition_start: int
    start: int
    stop: int


@dataclass
class Trajectory:
    """Ground-truth poses sampled at a fixed rate.

    ``segments`` index into the tick arrays; ``start`` marks the end of the
    ease-in and ``stop`` is exclusive.
    """

    rate_hz: float
    timestamps: np.ndarray
    root_rotations: np.ndarray
    root_translations: np.ndarray
    joint_rotations: np.ndarray
    beta: np.ndarray
    segments: list[Segment] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.timestamps)

    def pose(self, tick: int) -> PoseParams:
        return PoseParams(self.root_rotations[tick], self.root_translations[tick], self.joint_rotations[tick])


@dataclass
class ImuStreams:
    """Struct-of-arrays view of 16 (or N) IMU streams, tick-major."""

    timestamps: np.ndarray  # (T, N) int64 ns
    orientations: np.ndarray  # (T, N, 4) quaternions (w, x, y, z)
    angular_velocity: np.ndarray  # (T, N, 3) rad/s
    acceleration: np.ndarray  # (T, N, 3) m/s^2
    truth: np.ndarray | None = None  # (T, N, 3, 3) noiseless readings

    @property
    def n_sensors(self) -> int:
        return self.timestamps.shape[1]

    def rotations(self) -> np.ndarray:
        return so3.quat_to_matrix(self.orientations)


@dataclass
class DorsalStream:
    timestamps: np.ndarray  # (T,)
    rotations: np.ndarray  # (T, 3, 3)
    translations: np.ndarray  # (T, 3) mm


def reference_pose(model: HandModel, kind: str, beta=None) -> PoseParams:
    """Target pose of a reference or pinch segment for the given shape."""
    beta = np.zeros(model.n_shape) if beta is None else model.check_beta(beta)
    if kind == "rest" or kind == "hold" or kind == "free":
        return PoseParams.identity()
    if kind == "x_rot":
        return PoseParams(root_rotation=so3.rot_x(-np.pi / 2))
    if kind == "y_rot":
        return PoseParams(root_rotation=so3.rot_y(np.pi / 2) @ so3.rot_x(-np.pi / 2))
    if kind.startswith("pinch_"):
        finger = kind.rsplit("_", 1)[1]
        preset = model.contact(finger)
        if not np.any(beta):
            return preset.pose.copy()
        return solve_contact_pose(model, beta, preset.pose, preset.pairs, pinch_joints(finger), tol=1e-9)
    raise ValueError(f"unknown segment kind {kind!r}")


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


class TrajectoryBuilder:
    """Concatenates held poses with smooth ease-in transitions."""

    def __init__(self, model: HandModel, beta=None, rate_hz: float = 100.0, seed: int = 0, start_ns: int = 0):
        self.model = model
        self.beta = np.zeros(model.n_shape) if beta is None else model.check_beta(beta)
        self.rate_hz = float(rate_hz)
        self.rng = np.random.default_rng(seed)
        self.start_ns = int(start_ns)
        self._root, self._trans, self._joints = [], [], []
        self.segments: list[Segment] = []
        self._last: PoseParams | None = None
        self._pose_cache: dict[str, PoseParams] = {}

    def _ticks(self) -> int:
        return sum(len(r) for r in self._root)

    def target(self, kind: str) -> PoseParams:
        if kind not in self._pose_cache:
            self._pose_cache[kind] = reference_pose(self.model, kind, self.beta)
        return self._pose_cache[kind].copy()

    def _append(self, root, trans, joints):
        self._root.append(root)
        self._trans.append(trans)
        self._joints.append(joints)

    def hold(self, kind: str, duration_s: float, ease_s: float = 0.5, wrist_deg: float = 0.0, wrist_hz: float = 0.2,
             pose: PoseParams | None = None) -> "TrajectoryBuilder":
        if duration_s <= 0:
            raise ValueError("duration must be positive")
        target = pose.copy() if pose is not None else self.target(kind)
        transition_start = self._ticks()
        if self._last is not None and ease_s > 0:
            n = int(round(ease_s * self.rate_hz))
            u = _smoothstep((np.arange(n) + 1) / n)
            prev = self._last
            self._append(
                so3.slerp(prev.root_rotation, target.root_rotation, u),
                prev.root_translation + u[:, None] * (target.root_translation - prev.root_translation),
                so3.slerp(prev.joint_rotations[None], target.joint_rotations[None], np.broadcast_to(u[:, None], (n, N_JOINTS))),
            )
        start = self._ticks()
        n = int(round(duration_s * self.rate_hz))
        root = np.broadcast_to(target.root_rotation, (n, 3, 3)).copy()
        if wrist_deg > 0:
            # smooth wrist wobble about a random axis, starting from rest
            axis = self.rng.standard_normal(3)
            axis /= np.linalg.norm(axis)
            phase = self.rng.uniform(0, 2 * np.pi)
            t = np.arange(n) / self.rate_hz
            ramp = _smoothstep(t / max(ease_s, 1e-9))
            angle = np.radians(wrist_deg) * ramp * np.sin(2 * np.pi * wrist_hz * t + phase)
            root = so3.exp_map(axis * angle[:, None]) @ root
        self._append(root, np.broadcast_to(target.root_translation, (n, 3)).copy(),
                     np.broadcast_to(target.joint_rotations, (n, N_JOINTS, 3, 3)).copy())
        self.segments.append(Segment(kind, transition_start, start, start + n))
        self._last = PoseParams(root[-1], target.root_translation, target.joint_rotations)
        return self

    def build(self) -> Trajectory:
        if not self._root:
            raise ValueError("empty trajectory")
        root = np.concatenate(self._root)
        period = NS_PER_S / self.rate_hz
        ts = self.start_ns + np.round(np.arange(len(root)) * period).astype(np.int64)
        return Trajectory(self.rate_hz, ts, root, np.concatenate(self._trans), np.concatenate(self._joints),
                          self.beta.copy(), list(self.segments))


def make_reference_trajectory(model: HandModel, kind: str, duration_s: float, rate_hz: float = 100.0,
                              beta=None, previous: PoseParams | None = None, ease_s: float = 0.5) -> Trajectory:
    """A single held reference pose, eased in from ``previous`` if given."""
    builder = TrajectoryBuilder(model, beta, rate_hz)
    if previous is not None:
        builder._last = previous.copy()
    return builder.hold(kind, duration_s, ease_s=ease_s).build()


def calibration_trajectory(model: HandModel, beta=None, rate_hz: float = 100.0, hold_s: float = 2.0,
                           seed: int = 0, include_pinches: bool = True) -> Trajectory:
    builder = TrajectoryBuilder(model, beta, rate_hz, seed=seed)
    for kind in REFERENCE_KINDS:
        builder.hold(kind, hold_s)
    if include_pinches:
        for kind in PINCH_KINDS:
            builder.hold(kind, hold_s)
    return builder.build()


def _split_rngs(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def body_rates(rot: np.ndarray, rate_hz: float) -> np.ndarray:
    """Body-frame angular velocity (rad/s) by backward differences; (T, ..., 3)."""
    omega = np.zeros(rot.shape[:-2] + (3,))
    if rot.shape[0] > 1:
        rel = np.swapaxes(rot[:-1], -1, -2) @ rot[1:]
        omega[1:] = so3.log_map(rel) * rate_hz
        omega[0] = omega[1]
    return omega


def synthesize_orientations(truth: np.ndarray, rate_hz: float, noise: NoiseModel, rng: np.random.Generator):
    """Apply drift and noise to noiseless readings ``truth`` (T, N, 3, 3)."""
    T, N = truth.shape[:2]
    omega = body_rates(truth, rate_hz)
    speed_dps = np.degrees(np.linalg.norm(omega, axis=-1))
    sigma = np.where(speed_dps > noise.dynamic_threshold_dps, noise.sigma_dynamic_deg, noise.sigma_static_deg)
    axis = rng.standard_normal((T, N, 3))
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.abs(rng.standard_normal((T, N))) * np.radians(sigma)
    noise_rot = so3.exp_map(axis * angle[..., None])
    step_deg = noise.drift_rate_deg_per_sqrt_min * np.sqrt(1.0 / (60.0 * rate_hz))
    steps = rng.standard_normal((T, N)) * step_deg
    steps[0] = 0.0
    yaw = np.radians(np.cumsum(steps, axis=0))
    c, s = np.cos(yaw), np.sin(yaw)
    drift = np.zeros((T, N, 3, 3))
    drift[..., 0, 0], drift[..., 0, 1], drift[..., 1, 0], drift[..., 1, 1] = c, -s, s, c
    drift[..., 2, 2] = 1.0
    return noise_rot @ drift @ truth, omega


def synthesize_imu(trajectory: Trajectory, extrinsics: SensorExtrinsics, noise: NoiseModel, model: HandModel,
                   jitter_ns: int = 0, clock_offset_ns: int = 0) -> ImuStreams:
    """Sixteen IMU streams for ``trajectory``.

    ``clock_offset_ns`` is added to every timestamp (sender clock ahead of
    the receiver); ``jitter_ns`` adds uniform per-sample timestamp jitter.
    """
    link_rot = link_rotations(model, trajectory.root_rotations, trajectory.joint_rotations)
    truth = extrinsics.A.T @ link_rot @ extrinsics.C
    imu_rng, jitter_rng = _split_rngs(noise.seed, 3)[:2]
    emitted, omega = synthesize_orientations(truth, trajectory.rate_hz, noise, imu_rng)
    T, N = truth.shape[:2]
    ts = np.broadcast_to(trajectory.timestamps[:, None], (T, N)).astype(np.int64)
    if jitter_ns:
        ts = ts + jitter_rng.integers(-jitter_ns, jitter_ns + 1, size=(T, N))
    ts = ts + np.int64(clock_offset_ns)
    accel = np.swapaxes(truth, -1, -2) @ np.array([0.0, 0.0, GRAVITY])
    return ImuStreams(ts, so3.matrix_to_quat(emitted), omega, accel, truth)


def synthesize_dorsal(trajectory: Trajectory, extrinsics: SensorExtrinsics, noise: NoiseModel) -> DorsalStream:
    rng = _split_rngs(noise.seed, 3)[2]
    rot = extrinsics.dorsal_rotation @ trajectory.root_rotations
    trans = trajectory.root_translations @ extrinsics.dorsal_rotation.T + extrinsics.dorsal_translation
    trans = trans + rng.standard_normal(trans.shape) * noise.dorsal_sigma_pos_mm
    return DorsalStream(trajectory.timestamps.copy(), rot, trans)


def true_joint_rotations(model: HandModel, trajectory: Trajectory) -> np.ndarray:
    link_rot = link_rotations(model, trajectory.root_rotations, trajectory.joint_rotations)
    return joint_rotations_from_links(model, link_rot)


# ----------------------------------------------------------------------
# two-section hinge rig


HINGE_AXIS = np.array([0.0, 1.0, 0.0])


@dataclass
class HingeSession:
    """Two IMUs on a hinged plate: reference holds followed by a sweep."""

    rate_hz: float
    plate_rotations: np.ndarray  # (T, 3, 3) orientation of section A
    hinge_angles: np.ndarray  # (T,) radians
    link_rotations: np.ndarray  # (T, 2, 3, 3)
    streams: ImuStreams
    extrinsics: SensorExtrinsics
    reference_segments: dict[str, tuple[int, int]]
    sweep: tuple[int, int]


def hinge_link_rotations(plate: np.ndarray, angle: np.ndarray) -> np.ndarray:
    hinge = so3.exp_map(HINGE_AXIS * np.asarray(angle)[..., None])
    return np.stack([plate, plate @ hinge], axis=-3)


def simulate_hinge(noise: NoiseModel, rate_hz: float = 100.0, hold_s: float = 2.0, step_deg: float = 10.0,
                   step_hold_s: float = 2.0, step_move_s: float = 0.25, max_mount_deg: float = 5.0) -> HingeSession:
    """Calibration holds of the flat/x/y plate poses, then a stepped
    0-90-0 degree sweep of the hinge with the plate lying flat."""
    rng = np.random.default_rng(np.random.SeedSequence([noise.seed, 7]))
    extr = SensorExtrinsics.random(rng, n_sensors=2, max_mount_deg=max_mount_deg)
    plates = {"rest": np.eye(3), "x_rot": so3.rot_x(-np.pi / 2), "y_rot": so3.rot_y(np.pi / 2) @ so3.rot_x(-np.pi / 2)}
    n_hold = int(round(hold_s * rate_hz))
    n_ease = int(round(0.5 * rate_hz))
    plate_parts, angle_parts, segments = [], [], {}
    prev = None
    tick = 0
    for kind, plate in plates.items():
        if prev is not None:
            u = _smoothstep((np.arange(n_ease) + 1) / n_ease)
            plate_parts.append(so3.slerp(prev, plate, u))
            angle_parts.append(np.zeros(n_ease))
            tick += n_ease
        plate_parts.append(np.broadcast_to(plate, (n_hold, 3, 3)))
        angle_parts.append(np.zeros(n_hold))
        segments[kind] = (tick, tick + n_hold)
        tick += n_hold
        prev = plate
    u = _smoothstep((np.arange(n_ease) + 1) / n_ease)
    plate_parts.append(so3.slerp(prev, np.eye(3), u))
    angle_parts.append(np.zeros(n_ease))
    tick += n_ease
    levels = np.radians(np.concatenate([np.arange(0.0, 90.0 + 1e-9, step_deg), np.arange(90.0 - step_deg, -1e-9, -step_deg)]))
    n_move = int(round(step_move_s * rate_hz))
    n_step = int(round(step_hold_s * rate_hz))
    sweep_start = tick
    sweep = [np.full(n_step, levels[0])]
    for a, b in zip(levels[:-1], levels[1:]):
        sweep.append(a + (b - a) * _smoothstep((np.arange(n_move) + 1) / n_move))
        sweep.append(np.full(n_step, b))
    sweep = np.concatenate(sweep)
    plate_parts.append(np.broadcast_to(np.eye(3), (len(sweep), 3, 3)))
    angle_parts.append(sweep)
    plate_rot = np.concatenate(plate_parts)
    angles = np.concatenate(angle_parts)
    links = hinge_link_rotations(plate_rot, angles)
    truth = extr.A.T @ links @ extr.C
    emitted, omega = synthesize_orientations(truth, rate_hz, noise, np.random.default_rng(noise.seed))
    T = len(angles)
    ts = np.broadcast_to((np.arange(T) * (NS_PER_S / rate_hz)).astype(np.int64)[:, None], (T, 2)).copy()
    accel = np.swapaxes(truth, -1, -2) @ np.array([0.0, 0.0, GRAVITY])
    streams = ImuStreams(ts, so3.matrix_to_quat(emitted), omega, accel, truth)
    return HingeSession(rate_hz, plate_rot, angles, links, streams, extr, segments, (sweep_start, T))


# ----------------------------------------------------------------------
# depth-camera stand-in


def vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    v = np.asarray(vertices, float)
    tri = v[faces]
    fn = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    out = np.zeros_like(v)
    for k in range(3):
        np.add.at(out, faces[:, k], fn)
    norm = np.linalg.norm(out, axis=1, keepdims=True)
    return out / np.where(norm > 0, norm, 1.0)


def partial_point_cloud(mesh, view_dir, rng: np.random.Generator, sigma_mm: float = 0.5) -> np.ndarray:
    """Vertices facing a camera looking along ``view_dir``, with isotropic
    Gaussian noise; a crude single-view depth scan."""
    view = np.asarray(view_dir, float)
    view = view / np.linalg.norm(view)
    normals = vertex_normals(mesh.vertices, mesh.faces)
    visible = normals @ view < 0.0
    pts = mesh.vertices[visible]
    return pts + rng.standard_normal(pts.shape) * sigma_mm
