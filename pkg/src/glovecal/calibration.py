"""Sensor-to-model calibration and per-frame pose reconstruction.

Readings follow ``R_model_i C_i = A R_world_i``: ``A`` rotates the IMU
world frame into the model frame and ``C_i`` is the mounting error of
sensor ``i`` on its link.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import so3
from .hand_model import (
    BETA_BOUND,
    N_LINKS,
    VERTS_PER_LINK,
    HandModel,
    PoseParams,
    fingertip_positions,
    joint_rotations_from_links,
    model_hash,
)

RESULT_SCHEMA_VERSION = 1
MIN_STATIC_SAMPLES = 10
MAX_STATIC_SPREAD_DEG = 5.0
ALIGN_TOL = 1e-10
ALIGN_MAX_ITER = 200
SHAPE_GRAD_TOL = 1e-8
SHAPE_MAX_ITER = 500


class CalibrationError(ValueError):
    pass


class TooFewSamples(CalibrationError):
    pass


class ExcessiveSpread(CalibrationError):
    pass


class InsufficientPoses(CalibrationError):
    pass


class NoCaptures(CalibrationError):
    pass


class ModelHashMismatch(CalibrationError):
    pass


class MissingSensor(KeyError):
    def __init__(self, missing):
        self.missing = sorted(int(i) for i in missing)
        super().__init__(f"missing sensors {self.missing}")

    def __str__(self):
        return self.args[0]


# ----------------------------------------------------------------------
# static segments


def aggregate_static_segment(rotations, min_samples: int = MIN_STATIC_SAMPLES,
                             max_spread_deg: float = MAX_STATIC_SPREAD_DEG) -> tuple[np.ndarray, float]:
    """Chordal mean of one sensor's readings over a held pose.

    Returns ``(mean, spread_deg)`` where spread is the largest angle
    between any sample and the mean.
    """
    r = so3.as_rotation(rotations)
    if r.ndim != 3 or len(r) < min_samples:
        raise TooFewSamples(f"need at least {min_samples} samples, got {len(r) if r.ndim == 3 else 0}")
    mean = so3.average_rotation(r)
    spread = float(np.degrees(np.max(so3.geodesic_angle(r, mean))))
    if spread >= max_spread_deg:
        raise ExcessiveSpread(f"spread {spread:.2f} deg is not below {max_spread_deg} deg")
    return mean, spread


@dataclass
class ReferenceCapture:
    kind: str
    rotations: np.ndarray  # (N, 3, 3) mean world-frame reading per sensor
    n_samples: int
    spread_deg: np.ndarray  # (N,)

    @classmethod
    def from_samples(cls, kind: str, samples, **kw) -> "ReferenceCapture":
        """``samples`` has shape (T, N, 3, 3): T ticks of N sensors."""
        s = so3.as_rotation(samples)
        means, spreads = [], []
        for i in range(s.shape[1]):
            try:
                m, sp = aggregate_static_segment(s[:, i], **kw)
            except CalibrationError as exc:
                raise type(exc)(f"{kind}, sensor {i}: {exc}") from None
            means.append(m)
            spreads.append(sp)
        return cls(kind, np.array(means), s.shape[0], np.array(spreads))


# ----------------------------------------------------------------------
# world alignment and mounting errors


@dataclass
class CalibrationResult:
    A: np.ndarray
    C: np.ndarray
    residuals_deg: np.ndarray  # (N, K) sensor x pose kind
    kinds: list[str]
    n_iter: int
    converged: bool
    objective: list[float] = field(default_factory=list)

    @property
    def max_residual_deg(self) -> float:
        return float(self.residuals_deg.max())

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "C": self.C.tolist(),
            "residuals_deg": self.residuals_deg.tolist(),
            "kinds": list(self.kinds),
            "n_iter": self.n_iter,
            "converged": self.converged,
            "objective": list(self.objective),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        return cls(np.asarray(d["A"], float), np.asarray(d["C"], float), np.asarray(d["residuals_deg"], float),
                   list(d["kinds"]), int(d["n_iter"]), bool(d["converged"]), list(d.get("objective", [])))


def alignment_objective(A, C, virtual, measured) -> float:
    """Sum over sensors and poses of the squared Frobenius misfit."""
    diff = virtual @ C[None] - A @ measured
    return float(np.sum(diff * diff))


def solve_alignment(captures, virtual_refs, tol: float = ALIGN_TOL, max_iter: int = ALIGN_MAX_ITER) -> CalibrationResult:
    """Estimate ``A`` and every ``C_i`` by alternating closed-form updates.

    ``captures`` maps pose kind to measured world-frame rotations (N, 3, 3)
    (or ReferenceCapture objects); ``virtual_refs`` maps the same kinds to
    the model-frame link rotations of the reference pose.
    """
    kinds = [k for k in captures]
    if len(kinds) < 2:
        raise InsufficientPoses(f"need at least 2 reference poses, got {len(kinds)}")
    missing = [k for k in kinds if k not in virtual_refs]
    if missing:
        raise InsufficientPoses(f"no virtual reference for {missing}")
    meas = np.stack([getattr(captures[k], "rotations", captures[k]) for k in kinds]).astype(float)
    virt = np.stack([np.asarray(virtual_refs[k], float) for k in kinds])
    if meas.shape != virt.shape or meas.shape[-2:] != (3, 3):
        raise ValueError(f"capture shape {meas.shape} does not match reference shape {virt.shape}")
    n = meas.shape[1]
    if all(np.array_equal(virt[0], v) for v in virt[1:]):
        raise so3.DegenerateMatrix("all reference poses are identical")
    virt_t = np.swapaxes(virt, -1, -2)
    meas_t = np.swapaxes(meas, -1, -2)

    C = np.tile(np.eye(3), (n, 1, 1))
    A = np.eye(3)
    trace = [alignment_objective(A, C, virt, meas)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        A_new = so3.project_to_so3(np.sum(virt @ C[None] @ meas_t, axis=(0, 1)))
        C_new = so3.project_to_so3(np.sum(virt_t @ A_new @ meas, axis=0))
        change = max(so3.geodesic_angle(A, A_new), float(np.max(so3.geodesic_angle(C, C_new))))
        A, C = A_new, C_new
        trace.append(alignment_objective(A, C, virt, meas))
        if change < tol:
            converged = True
            break
    residuals = so3.geodesic_angle(virt @ C[None], A @ meas)
    return CalibrationResult(A, C, np.degrees(np.asarray(residuals).T), kinds, it, converged, trace)


def corrected_link_rotation(world_rotation, A, C) -> np.ndarray:
    """Model-frame link rotation ``A R C^T`` (broadcasts over leading axes)."""
    return A @ so3.as_rotation(world_rotation) @ np.swapaxes(so3.as_rotation(C), -1, -2)


def joint_rotation(link, parent, world_frame: bool = False) -> np.ndarray:
    """Relative rotation of a link with respect to its parent.

    The default is the parent-local form ``parent^T link`` used by
    PoseParams; ``world_frame=True`` gives ``link parent^T`` instead.
    """
    link = so3.as_rotation(link)
    parent = so3.as_rotation(parent)
    if world_frame:
        return link @ np.swapaxes(parent, -1, -2)
    return np.swapaxes(parent, -1, -2) @ link


# ----------------------------------------------------------------------
# dorsal tracker alignment


@dataclass
class DorsalAlignment:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def apply(self, rotation, translation) -> tuple[np.ndarray, np.ndarray]:
        """Map tracker-frame poses into the model frame."""
        t = np.asarray(translation, float)
        return self.rotation @ so3.as_rotation(rotation), t @ self.rotation.T + self.translation

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DorsalAlignment":
        return cls(np.asarray(d["rotation"], float), np.asarray(d["translation"], float))


def solve_dorsal_alignment(pairs) -> DorsalAlignment:
    """Align tracker and model frames from ``(R_d, t_d, R_m, t_m)`` pose pairs."""
    pairs = list(pairs)
    if len(pairs) < 2:
        raise InsufficientPoses(f"need at least 2 pose pairs, got {len(pairs)}")
    rd = np.array([p[0] for p in pairs], float)
    td = np.array([p[1] for p in pairs], float)
    rm = np.array([p[2] for p in pairs], float)
    tm = np.array([p[3] for p in pairs], float)
    if max(so3.geodesic_angle(rd[0], r) for r in rd[1:]) < 1e-9:
        raise InsufficientPoses("dorsal pose pairs must include distinct rotations")
    rot = so3.average_rotation(rm @ np.swapaxes(rd, -1, -2))
    trans = np.mean(tm - td @ rot.T, axis=0)
    return DorsalAlignment(rot, trans)


# ----------------------------------------------------------------------
# reconstruction


def reconstruct_links(world_rotations, calib: CalibrationResult) -> np.ndarray:
    return corrected_link_rotation(world_rotations, calib.A, calib.C)


def reconstruct_pose(model: HandModel, frame, calib: CalibrationResult, dorsal: DorsalAlignment | None = None,
                     dorsal_translation=None) -> PoseParams:
    """Pose of one synchronized frame.

    ``frame`` is either an (N, 3, 3) array of world-frame readings or a
    mapping from sensor id to reading.
    """
    if isinstance(frame, dict):
        missing = set(range(N_LINKS)) - set(frame)
        if missing:
            raise MissingSensor(missing)
        frame = np.stack([frame[i] for i in range(N_LINKS)])
    frame = so3.as_rotation(frame)
    if frame.shape[0] != N_LINKS:
        raise MissingSensor(set(range(frame.shape[0], N_LINKS)))
    links = reconstruct_links(frame, calib)
    root_t = np.zeros(3)
    if dorsal_translation is not None:
        dorsal = dorsal or DorsalAlignment()
        root_t = np.asarray(dorsal_translation, float) @ dorsal.rotation.T + dorsal.translation
    return PoseParams(links[0], root_t, joint_rotations_from_links(model, links))


def reconstruct_poses(model: HandModel, frames, calib: CalibrationResult, dorsal: DorsalAlignment | None = None,
                      dorsal_translations=None):
    """Vectorized reconstruction of (T, N, 3, 3) readings.

    Returns root rotations (T, 3, 3), root translations (T, 3) and joint
    rotations (T, 15, 3, 3).
    """
    links = reconstruct_links(frames, calib)
    T = links.shape[0]
    if dorsal_translations is None:
        trans = np.zeros((T, 3))
    else:
        dorsal = dorsal or DorsalAlignment()
        trans = np.asarray(dorsal_translations, float) @ dorsal.rotation.T + dorsal.translation
    return links[:, 0], trans, joint_rotations_from_links(model, links)


# ----------------------------------------------------------------------
# shape


@dataclass
class ShapeResult:
    beta: np.ndarray
    energy: float
    trace: list[float]
    n_iter: int
    converged: bool
    skipped: bool = False

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "energy": self.energy,
            "trace": list(self.trace),
            "n_iter": self.n_iter,
            "converged": self.converged,
            "skipped": self.skipped,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShapeResult":
        return cls(np.asarray(d["beta"], float), float(d["energy"]), list(d["trace"]), int(d["n_iter"]),
                   bool(d["converged"]), bool(d.get("skipped", False)))


class ContactEnergy:
    """Contact energy for fixed poses, with the pose-dependent parts cached.

    With the pose held fixed every link transform is affine in beta, so a
    vertex is ``c + J beta + L(beta) a + r(beta) b`` where only the capsule
    length ``L`` is non-linear. Agrees with :func:`shape_energy`.
    """

    def __init__(self, model: HandModel, captures):
        self.model = model
        const, lin, len_vec, rad_vec, links = [], [], [], [], []
        for pose, pairs in captures:
            idx = [v for pair in pairs for v in pair]
            rot, pos, dpos = _link_frames(model, pose)
            for v in idx:
                link, k = divmod(int(v), VERTS_PER_LINK)
                if not 0 <= link < N_LINKS:
                    raise IndexError(f"vertex index {v} out of range")
                const.append(pos[link])
                lin.append(dpos[link])
                len_vec.append(rot[link] @ model._len_dir[link, k])
                rad_vec.append(rot[link] @ model._rad_dir[link, k])
                links.append(link)
        reflect = model._reflect
        self.const = np.array(const) @ reflect.T
        self.lin = reflect @ np.array(lin)
        self.len_vec = np.array(len_vec) @ reflect.T
        self.rad_vec = np.array(rad_vec) @ reflect.T
        self.links = np.array(links)

    def __call__(self, beta) -> tuple[float, np.ndarray]:
        m = self.model
        length, dlength = m.capsule_lengths(beta)
        radius = m.capsule_radii(beta)
        L, dL = length[self.links], dlength[self.links]
        r, dr = radius[self.links], m.radius_regressors[self.links]
        verts = self.const + self.lin @ beta + L[:, None] * self.len_vec + r[:, None] * self.rad_vec
        jacs = self.lin + self.len_vec[:, :, None] * dL[:, None, :] + self.rad_vec[:, :, None] * dr[:, None, :]
        d = verts[0::2] - verts[1::2]
        dj = jacs[0::2] - jacs[1::2]
        energy = float(np.sum(d * d))
        grad = 2.0 * np.einsum("pi,pib->b", d, dj)
        return energy, grad


def _link_frames(model: HandModel, pose: PoseParams):
    """World rotations, beta-independent position parts and position
    Jacobians of every link for a fixed pose."""
    local = pose.link_local_rotations()
    rot = np.empty((N_LINKS, 3, 3))
    pos = np.empty((N_LINKS, 3))
    dpos = np.empty((N_LINKS, 3, model.n_shape))
    rot[0], pos[0], dpos[0] = pose.root_rotation, pose.root_translation, 0.0
    for i in range(1, N_LINKS):
        p = model.parents[i]
        pos[i] = pos[p] + rot[p] @ model.rest_offsets[i]
        dpos[i] = dpos[p] + rot[p] @ model.offset_regressors[i]
        rot[i] = rot[p] @ local[i]
    return rot, pos, dpos


def calibrate_shape(model: HandModel, captures, beta0=None, grad_tol: float = SHAPE_GRAD_TOL,
                    max_iter: int = SHAPE_MAX_ITER, bound: float | None = None) -> ShapeResult:
    """Fit shape coefficients so that declared contact pairs touch.

    ``captures`` is a list of ``(PoseParams, pairs)``. Projected gradient
    descent on the box ``|beta| <= bound`` with an Armijo backtracking
    line search; after the first iteration the trial step is the
    Barzilai-Borwein step, falling back to backtracking when it overshoots.
    """
    captures = list(captures)
    if not captures:
        raise NoCaptures("shape calibration needs at least one contact capture")
    bound = BETA_BOUND if bound is None else bound
    beta = np.zeros(model.n_shape) if beta0 is None else model.check_beta(beta0).copy()
    beta = np.clip(beta, -bound, bound)
    objective = ContactEnergy(model, captures)
    energy, grad = objective(beta)
    trace = [energy]

    def projected_gradient(b, g):
        return b - np.clip(b - g, -bound, bound)

    step = 1.0 / max(np.linalg.norm(grad), 1e-12)
    converged = False
    while len(trace) <= max_iter:
        pg_norm = np.linalg.norm(projected_gradient(beta, grad))
        if pg_norm < grad_tol:
            converged = True
            break
        accepted = False
        for _ in range(60):
            trial = np.clip(beta - step * grad, -bound, bound)
            e_trial, g_trial = objective(trial)
            if e_trial <= energy - 1e-4 * float(grad @ (beta - trial)):
                accepted = True
                break
            step *= 0.5
        if not accepted or not np.any(trial != beta):
            # stationary to machine precision: no representable decrease remains
            converged = bool(pg_norm < max(grad_tol, 1e-6 * max(energy, 1.0)))
            break
        s = trial - beta
        y = g_trial - grad
        beta, energy, grad = trial, e_trial, g_trial
        trace.append(energy)
        sy = float(s @ y)
        step = float(np.clip(float(s @ s) / sy, 1e-12, 1e12)) if sy > 0 else 2.0 * step
    return ShapeResult(beta, energy, trace, len(trace) - 1, converged)


def contact_captures(model: HandModel, poses: dict) -> list:
    """Pair each reconstructed pinch pose with its contact table entry."""
    out = []
    for contact in model.contacts:
        if contact.name in poses:
            out.append((poses[contact.name], contact.pairs))
    return out


def fingertip_error(model: HandModel, beta, beta_true) -> np.ndarray:
    """Rest-pose fingertip displacement (mm) between two shapes, per finger."""
    return np.linalg.norm(fingertip_positions(model, beta) - fingertip_positions(model, beta_true), axis=1)


# ----------------------------------------------------------------------
# persistence


def save_calibration(path, model: HandModel, calib: CalibrationResult, shape: ShapeResult | None = None,
                     dorsal: DorsalAlignment | None = None) -> None:
    doc = calibration_document(model, calib, shape, dorsal)
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def calibration_document(model: HandModel, calib, shape=None, dorsal=None) -> dict:
    return {
        "schema_version": RESULT_SCHEMA_VERSION,
        "model_hash": model_hash(model),
        "pose": calib.to_dict(),
        "shape": shape.to_dict() if shape is not None else None,
        "dorsal": (dorsal or DorsalAlignment()).to_dict(),
    }


def load_calibration(path, model: HandModel | None = None):
    """Read a calibration file; checks the model hash when a model is given."""
    with open(path) as f:
        doc = json.load(f)
    if doc.get("schema_version") != RESULT_SCHEMA_VERSION:
        raise CalibrationError(f"unsupported calibration schema {doc.get('schema_version')!r}")
    if model is not None and doc.get("model_hash") != model_hash(model):
        raise ModelHashMismatch(f"calibration was made for model {doc.get('model_hash')}, not {model_hash(model)}")
    calib = CalibrationResult.from_dict(doc["pose"])
    shape = ShapeResult.from_dict(doc["shape"]) if doc.get("shape") else None
    dorsal = DorsalAlignment.from_dict(doc["dorsal"]) if doc.get("dorsal") else DorsalAlignment()
    return calib, shape, dorsal
