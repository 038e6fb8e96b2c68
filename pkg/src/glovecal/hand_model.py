"""Capsule-based parametric hand model ``(V, E) = M(pose, beta)``.

Sixteen rigid links: the palm (link 0) and three phalanges per finger,
ordered thumb, index, middle, ring, little and proximal to distal within
each finger. Every link carries one tessellated capsule. Bone offsets and
capsule radii are affine in the shape vector ``beta``; vertices are
rigidly attached to their link, so with the pose held fixed each vertex
is a smooth function of ``beta`` with an exact analytic Jacobian.

Lengths are millimetres, rotations are ``(3, 3)`` arrays.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .so3 import is_rotation

SCHEMA_VERSION = 1
N_LINKS = 16
N_JOINTS = 15
BETA_BOUND = 5.0

FINGERS = ("thumb", "index", "middle", "ring", "little")
FINGER_LINKS = {name: (1 + 3 * k, 2 + 3 * k, 3 + 3 * k) for k, name in enumerate(FINGERS)}
DISTAL_LINKS = tuple(links[2] for links in FINGER_LINKS.values())
LINK_NAMES = ("palm",) + tuple(f"{f}_{seg}" for f in FINGERS for seg in ("proximal", "middle", "distal"))

# capsule tessellation: 8 rings of 8 vertices plus two poles
N_RINGS = 8
N_SEGMENTS = 8
VERTS_PER_LINK = N_RINGS * N_SEGMENTS + 2
TIP_VERTEX = VERTS_PER_LINK - 1


class ModelError(ValueError):
    """Base class for model file problems."""


class ParseError(ModelError):
    pass


class SchemaError(ModelError):
    pass


class VersionError(ModelError):
    pass


class IndexOutOfRange(IndexError):
    pass


@dataclass
class PoseParams:
    """Root rigid transform plus 15 parent-local joint rotations."""

    root_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    root_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    joint_rotations: np.ndarray = field(default_factory=lambda: np.tile(np.eye(3), (N_JOINTS, 1, 1)))

    def __post_init__(self):
        self.root_rotation = np.asarray(self.root_rotation, dtype=float).reshape(3, 3)
        self.root_translation = np.asarray(self.root_translation, dtype=float).reshape(3)
        self.joint_rotations = np.asarray(self.joint_rotations, dtype=float).reshape(N_JOINTS, 3, 3)

    @classmethod
    def identity(cls) -> "PoseParams":
        return cls()

    def link_local_rotations(self) -> np.ndarray:
        """(16, 3, 3) array: root rotation followed by the joint rotations."""
        return np.concatenate([self.root_rotation[None], self.joint_rotations], axis=0)

    def copy(self) -> "PoseParams":
        return PoseParams(self.root_rotation.copy(), self.root_translation.copy(), self.joint_rotations.copy())

    def to_dict(self) -> dict:
        return {
            "root_rotation": self.root_rotation.tolist(),
            "root_translation": self.root_translation.tolist(),
            "joint_rotations": self.joint_rotations.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PoseParams":
        return cls(d["root_rotation"], d["root_translation"], d["joint_rotations"])

    def __eq__(self, other):
        if not isinstance(other, PoseParams):
            return NotImplemented
        return (
            np.array_equal(self.root_rotation, other.root_rotation)
            and np.array_equal(self.root_translation, other.root_translation)
            and np.array_equal(self.joint_rotations, other.joint_rotations)
        )


@dataclass
class HandMesh:
    vertices: np.ndarray
    faces: np.ndarray
    vertex_link: np.ndarray

    def to_obj(self) -> str:
        lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in self.vertices.tolist()]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in self.faces.tolist()]
        return "\n".join(lines) + "\n"


@dataclass
class ContactPose:
    """A named reference pose whose contact pairs should coincide."""

    name: str
    finger: str
    pose: PoseParams
    pairs: list[tuple[int, int]]


def _capsule_template():
    """Per-vertex (axial length coefficient, axial radius coefficient,
    radial radius coefficient, ring angle) for one capsule, plus faces.

    Vertex order: bottom pole, rings bottom to top, top pole.
    """
    # two hemisphere rings at each end, four cylinder rings in between
    rings = [
        (0.0, -np.sin(np.pi / 3), np.cos(np.pi / 3)),
        (0.0, -np.sin(np.pi / 6), np.cos(np.pi / 6)),
        (0.0, 0.0, 1.0),
        (1.0 / 3.0, 0.0, 1.0),
        (2.0 / 3.0, 0.0, 1.0),
        (1.0, 0.0, 1.0),
        (1.0, np.sin(np.pi / 6), np.cos(np.pi / 6)),
        (1.0, np.sin(np.pi / 3), np.cos(np.pi / 3)),
    ]
    assert len(rings) == N_RINGS
    coeffs = [(0.0, -1.0, 0.0, 0.0)]
    for len_c, ax_c, rad_c in rings:
        for m in range(N_SEGMENTS):
            coeffs.append((len_c, ax_c, rad_c, 2.0 * np.pi * m / N_SEGMENTS))
    coeffs.append((1.0, 1.0, 0.0, 0.0))
    coeffs = np.array(coeffs)

    faces = []
    bottom, top = 0, VERTS_PER_LINK - 1

    def ring(k, m):
        return 1 + k * N_SEGMENTS + (m % N_SEGMENTS)

    for m in range(N_SEGMENTS):
        faces.append((bottom, ring(0, m + 1), ring(0, m)))
    for k in range(N_RINGS - 1):
        for m in range(N_SEGMENTS):
            a, b = ring(k, m), ring(k, m + 1)
            c, d = ring(k + 1, m), ring(k + 1, m + 1)
            faces.append((a, b, d))
            faces.append((a, d, c))
    for m in range(N_SEGMENTS):
        faces.append((top, ring(N_RINGS - 1, m), ring(N_RINGS - 1, m + 1)))
    return coeffs, np.array(faces, dtype=np.int64)


_TEMPLATE_COEFFS, _TEMPLATE_FACES = _capsule_template()


def _axis_frame(axis: np.ndarray) -> np.ndarray:
    a = axis / np.linalg.norm(axis)
    helper = np.array([0.0, 0.0, 1.0]) if abs(a[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(helper, a)
    u /= np.linalg.norm(u)
    w = np.cross(a, u)
    return np.stack([a, u, w])


class HandModel:
    """Immutable skeleton, shape regressors, capsule mesh and contact tables.

    Parameters mirror the model file. ``capsule_child[i]`` names the child
    link whose offset sets the length of link ``i``'s capsule; terminal
    links use ``tip_offsets[i]`` / ``tip_regressors[i]`` instead.
    """

    def __init__(
        self,
        parents,
        rest_offsets,
        offset_regressors,
        radii,
        radius_regressors,
        capsule_child,
        tip_offsets,
        tip_regressors,
        contacts: list[ContactPose] | None = None,
        fingertips=None,
        mirror: bool = False,
        name: str = "hand",
        validate: bool = True,
    ):
        self.parents = np.asarray(parents, dtype=np.int64)
        self.rest_offsets = np.asarray(rest_offsets, dtype=float)
        self.offset_regressors = np.asarray(offset_regressors, dtype=float)
        self.radii = np.asarray(radii, dtype=float)
        self.radius_regressors = np.asarray(radius_regressors, dtype=float)
        self.capsule_child = np.asarray(capsule_child, dtype=np.int64)
        self.tip_offsets = np.asarray(tip_offsets, dtype=float)
        self.tip_regressors = np.asarray(tip_regressors, dtype=float)
        self.contacts = list(contacts or [])
        self.fingertips = np.asarray(
            fingertips if fingertips is not None else [VERTS_PER_LINK * d + TIP_VERTEX for d in DISTAL_LINKS],
            dtype=np.int64,
        )
        self.mirror = bool(mirror)
        self.name = name
        for arr in (self.parents, self.rest_offsets, self.offset_regressors, self.radii,
                    self.radius_regressors, self.capsule_child, self.tip_offsets, self.tip_regressors,
                    self.fingertips):
            arr.setflags(write=False)
        if validate:
            self.validate()
        self._prepare_mesh()

    @property
    def n_shape(self) -> int:
        return self.offset_regressors.shape[2]

    @property
    def n_vertices(self) -> int:
        return N_LINKS * VERTS_PER_LINK

    def contact(self, name: str) -> ContactPose:
        for c in self.contacts:
            if c.name == name or c.finger == name:
                return c
        raise KeyError(name)

    # ------------------------------------------------------------------
    # validation

    def validate(self) -> None:
        B = self.offset_regressors.shape[-1] if self.offset_regressors.ndim == 3 else -1
        expected = {
            "parents": (self.parents, (N_LINKS,)),
            "rest_offsets": (self.rest_offsets, (N_LINKS, 3)),
            "offset_regressors": (self.offset_regressors, (N_LINKS, 3, B)),
            "radii": (self.radii, (N_LINKS,)),
            "radius_regressors": (self.radius_regressors, (N_LINKS, B)),
            "capsule_child": (self.capsule_child, (N_LINKS,)),
            "tip_offsets": (self.tip_offsets, (N_LINKS, 3)),
            "tip_regressors": (self.tip_regressors, (N_LINKS, 3, B)),
            "fingertips": (self.fingertips, (len(FINGERS),)),
        }
        for key, (arr, shape) in expected.items():
            if arr.shape != shape:
                raise SchemaError(f"{key} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise SchemaError(f"{key} contains non-finite values")
        if B < 1:
            raise SchemaError("shape dimension must be at least 1")
        if self.parents[0] != -1:
            raise SchemaError("link 0 must not have a parent")
        for i in range(1, N_LINKS):
            if not 0 <= self.parents[i] < i:
                raise SchemaError(f"link {i} has parent {self.parents[i]}; parents must precede children")
        if np.any(np.all(self.rest_offsets[1:] == 0.0, axis=1)):
            raise SchemaError("rest offsets must be nonzero for links 1..15")
        for i in range(N_LINKS):
            child = self.capsule_child[i]
            if child >= 0:
                if child >= N_LINKS or self.parents[child] != i:
                    raise SchemaError(f"capsule child {child} of link {i} is not a child of it")
            elif np.all(self.tip_offsets[i] == 0.0):
                raise SchemaError(f"terminal link {i} needs a nonzero tip offset")
        # radii positive over the whole beta box
        worst_r = self.radii - BETA_BOUND * np.abs(self.radius_regressors).sum(axis=1)
        if np.any(worst_r <= 0.0):
            raise SchemaError(f"capsule radius can reach zero within |beta| <= {BETA_BOUND} (links {np.where(worst_r <= 0)[0].tolist()})")
        # bone lengths positive over the box: some component interval must exclude zero
        for i in range(N_LINKS):
            vecs = []
            if i > 0:
                vecs.append((self.rest_offsets[i], self.offset_regressors[i], f"offset of link {i}"))
            if self.capsule_child[i] < 0:
                vecs.append((self.tip_offsets[i], self.tip_regressors[i], f"tip of link {i}"))
            for o, s, what in vecs:
                spread = BETA_BOUND * np.abs(s).sum(axis=1)
                if not np.any((o - spread > 0.0) | (o + spread < 0.0)):
                    raise SchemaError(f"{what} may vanish within the beta box")
        n_vert = self.n_vertices
        for k, f in enumerate(FINGERS):
            v = int(self.fingertips[k])
            if not 0 <= v < n_vert or v // VERTS_PER_LINK != DISTAL_LINKS[k]:
                raise SchemaError(f"fingertip vertex {v} is not on the {f} distal link")
        names = set()
        for c in self.contacts:
            if c.name in names:
                raise SchemaError(f"duplicate contact pose {c.name!r}")
            names.add(c.name)
            if c.finger not in FINGERS:
                raise SchemaError(f"contact pose {c.name!r} names unknown finger {c.finger!r}")
            if not is_rotation(c.pose.root_rotation, 1e-9) or not is_rotation(c.pose.joint_rotations, 1e-9):
                raise SchemaError(f"contact pose {c.name!r} has an invalid rotation")
            if not c.pairs:
                raise SchemaError(f"contact pose {c.name!r} has no pairs")
            for j, k in c.pairs:
                if not (0 <= j < n_vert and 0 <= k < n_vert):
                    raise SchemaError(f"contact pair ({j}, {k}) out of range")
                if j // VERTS_PER_LINK == k // VERTS_PER_LINK:
                    raise SchemaError(f"contact pair ({j}, {k}) lies on a single link")

    def check_beta(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float).reshape(-1)
        if beta.shape != (self.n_shape,):
            raise ValueError(f"beta must have length {self.n_shape}")
        if np.any(np.abs(beta) > BETA_BOUND):
            raise ValueError(f"beta outside the box |beta| <= {BETA_BOUND}")
        return beta

    # ------------------------------------------------------------------
    # geometry

    def _prepare_mesh(self) -> None:
        len_dir = np.zeros((N_LINKS, VERTS_PER_LINK, 3))
        rad_dir = np.zeros((N_LINKS, VERTS_PER_LINK, 3))
        len_c, ax_c, rad_c, psi = _TEMPLATE_COEFFS.T
        for i in range(N_LINKS):
            child = self.capsule_child[i]
            axis = self.rest_offsets[child] if child >= 0 else self.tip_offsets[i]
            a, u, w = _axis_frame(axis)
            ring = np.cos(psi)[:, None] * u + np.sin(psi)[:, None] * w
            len_dir[i] = len_c[:, None] * a
            rad_dir[i] = ax_c[:, None] * a + rad_c[:, None] * ring
        self._len_dir = len_dir
        self._rad_dir = rad_dir
        faces = np.concatenate([_TEMPLATE_FACES + VERTS_PER_LINK * i for i in range(N_LINKS)])
        if self.mirror:
            faces = faces[:, ::-1]
        self._faces = np.ascontiguousarray(faces)
        self._vertex_link = np.repeat(np.arange(N_LINKS), VERTS_PER_LINK)
        self._faces.setflags(write=False)
        self._vertex_link.setflags(write=False)
        self._reflect = np.diag([1.0, -1.0, 1.0]) if self.mirror else np.eye(3)

    @property
    def faces(self) -> np.ndarray:
        return self._faces

    @property
    def vertex_link(self) -> np.ndarray:
        return self._vertex_link

    def offsets(self, beta) -> np.ndarray:
        """Shaped bone offsets ``o0 + S beta``, (16, 3)."""
        return self.rest_offsets + self.offset_regressors @ beta

    def capsule_lengths(self, beta) -> tuple[np.ndarray, np.ndarray]:
        """Capsule lengths (16,) and their derivative in beta (16, B)."""
        vec = np.where((self.capsule_child >= 0)[:, None], 0.0, self.tip_offsets + self.tip_regressors @ beta)
        reg = np.where((self.capsule_child >= 0)[:, None, None], 0.0, self.tip_regressors)
        off = self.offsets(beta)
        for i in np.where(self.capsule_child >= 0)[0]:
            vec[i] = off[self.capsule_child[i]]
            reg[i] = self.offset_regressors[self.capsule_child[i]]
        length = np.linalg.norm(vec, axis=1)
        dlength = np.einsum("ij,ijb->ib", vec, reg) / length[:, None]
        return length, dlength

    def capsule_radii(self, beta) -> np.ndarray:
        return self.radii + self.radius_regressors @ beta


def forward_kinematics(model: HandModel, beta, pose: PoseParams) -> tuple[np.ndarray, np.ndarray]:
    """World rotations (16, 3, 3) and positions (16, 3) of every link."""
    beta = model.check_beta(beta)
    offsets = model.offsets(beta)
    local = pose.link_local_rotations()
    rot = np.empty((N_LINKS, 3, 3))
    pos = np.empty((N_LINKS, 3))
    rot[0] = pose.root_rotation
    pos[0] = pose.root_translation
    for i in range(1, N_LINKS):
        p = model.parents[i]
        pos[i] = pos[p] + rot[p] @ offsets[i]
        rot[i] = rot[p] @ local[i]
    return rot, pos


def link_rotations(model: HandModel, root_rotations, joint_rotations) -> np.ndarray:
    """World link rotations for a batch of poses; shape-independent.

    ``root_rotations`` is (..., 3, 3), ``joint_rotations`` (..., 15, 3, 3);
    returns (..., 16, 3, 3).
    """
    root = np.asarray(root_rotations, dtype=float)
    joints = np.asarray(joint_rotations, dtype=float)
    out = np.empty(root.shape[:-2] + (N_LINKS, 3, 3))
    out[..., 0, :, :] = root
    for i in range(1, N_LINKS):
        out[..., i, :, :] = out[..., model.parents[i], :, :] @ joints[..., i - 1, :, :]
    return out


def joint_rotations_from_links(model: HandModel, link_rot) -> np.ndarray:
    """Inverse of :func:`link_rotations`: parent-local joint rotations."""
    link_rot = np.asarray(link_rot, dtype=float)
    parents = model.parents[1:]
    return np.swapaxes(link_rot[..., parents, :, :], -1, -2) @ link_rot[..., 1:, :, :]


def _local_vertices(model: HandModel, beta) -> np.ndarray:
    length, _ = model.capsule_lengths(beta)
    radius = model.capsule_radii(beta)
    return length[:, None, None] * model._len_dir + radius[:, None, None] * model._rad_dir


def build_mesh(model: HandModel, beta, pose: PoseParams) -> HandMesh:
    rot, pos = forward_kinematics(model, beta, pose)
    local = _local_vertices(model, beta)
    verts = np.einsum("lij,lvj->lvi", rot, local) + pos[:, None, :]
    verts = verts.reshape(-1, 3)
    if model.mirror:
        verts = verts @ model._reflect.T
    return HandMesh(verts, model.faces, model.vertex_link)


def _check_index(model: HandModel, vertex_index: int) -> tuple[int, int]:
    v = int(vertex_index)
    if not 0 <= v < model.n_vertices:
        raise IndexOutOfRange(f"vertex index {vertex_index} outside [0, {model.n_vertices})")
    return v // VERTS_PER_LINK, v % VERTS_PER_LINK


def _chain(model: HandModel, link: int) -> list[int]:
    chain = []
    while link >= 0:
        chain.append(link)
        link = int(model.parents[link])
    return chain[::-1]


def _chain_transforms(model: HandModel, beta, pose: PoseParams, link: int):
    """World rotation, position, and d(position)/d(beta) of ``link``."""
    offsets = model.offsets(beta)
    local = pose.link_local_rotations()
    rot = pose.root_rotation
    pos = pose.root_translation.copy()
    dpos = np.zeros((3, model.n_shape))
    for i in _chain(model, link)[1:]:
        pos = pos + rot @ offsets[i]
        dpos = dpos + rot @ model.offset_regressors[i]
        rot = rot @ local[i]
    return rot, pos, dpos


def vertex_position(model: HandModel, beta, pose: PoseParams, vertex_index: int) -> np.ndarray:
    link, k = _check_index(model, vertex_index)
    beta = model.check_beta(beta)
    rot, pos, _ = _chain_transforms(model, beta, pose, link)
    length, _ = model.capsule_lengths(beta)
    radius = model.capsule_radii(beta)
    local = length[link] * model._len_dir[link, k] + radius[link] * model._rad_dir[link, k]
    v = rot @ local + pos
    return model._reflect @ v if model.mirror else v


def vertex_jacobian_beta(model: HandModel, beta, pose: PoseParams, vertex_index: int) -> np.ndarray:
    """Exact d(vertex)/d(beta), shape (3, B), in mm per unit beta."""
    link, k = _check_index(model, vertex_index)
    beta = model.check_beta(beta)
    rot, _, dpos = _chain_transforms(model, beta, pose, link)
    _, dlength = model.capsule_lengths(beta)
    dlocal = np.outer(model._len_dir[link, k], dlength[link]) + np.outer(
        model._rad_dir[link, k], model.radius_regressors[link]
    )
    jac = dpos + rot @ dlocal
    return model._reflect @ jac if model.mirror else jac


def vertex_positions_and_jacobians(model: HandModel, beta, pose: PoseParams, indices) -> tuple[np.ndarray, np.ndarray]:
    """Positions (n, 3) and Jacobians (n, 3, B) for several vertices at once."""
    beta = model.check_beta(beta)
    offsets = model.offsets(beta)
    local_rot = pose.link_local_rotations()
    length, dlength = model.capsule_lengths(beta)
    radius = model.capsule_radii(beta)
    rot = np.empty((N_LINKS, 3, 3))
    pos = np.empty((N_LINKS, 3))
    dpos = np.empty((N_LINKS, 3, model.n_shape))
    rot[0], pos[0], dpos[0] = pose.root_rotation, pose.root_translation, 0.0
    for i in range(1, N_LINKS):
        p = model.parents[i]
        pos[i] = pos[p] + rot[p] @ offsets[i]
        dpos[i] = dpos[p] + rot[p] @ model.offset_regressors[i]
        rot[i] = rot[p] @ local_rot[i]
    out_v, out_j = [], []
    for v in indices:
        link, k = _check_index(model, v)
        local = length[link] * model._len_dir[link, k] + radius[link] * model._rad_dir[link, k]
        dlocal = np.outer(model._len_dir[link, k], dlength[link]) + np.outer(
            model._rad_dir[link, k], model.radius_regressors[link]
        )
        out_v.append(model._reflect @ (rot[link] @ local + pos[link]))
        out_j.append(model._reflect @ (dpos[link] + rot[link] @ dlocal))
    return np.array(out_v), np.array(out_j)


def vertex_trajectories(model: HandModel, beta, root_rotations, root_translations, joint_rotations, indices) -> np.ndarray:
    """Positions (T, n, 3) of selected vertices over a stream of poses."""
    beta = model.check_beta(beta)
    rot = link_rotations(model, root_rotations, joint_rotations)
    offsets = model.offsets(beta)
    pos = np.empty(rot.shape[:-2] + (3,))
    pos[..., 0, :] = root_translations
    for i in range(1, N_LINKS):
        p = model.parents[i]
        pos[..., i, :] = pos[..., p, :] + rot[..., p, :, :] @ offsets[i]
    local = _local_vertices(model, beta)
    out = []
    for v in indices:
        link, k = _check_index(model, v)
        out.append(rot[..., link, :, :] @ local[link, k] + pos[..., link, :])
    out = np.stack(out, axis=-2)
    return out @ model._reflect.T if model.mirror else out


def fingertip_positions(model: HandModel, beta, pose: PoseParams | None = None) -> np.ndarray:
    """(5, 3) fingertip endpoints, rest pose by default."""
    pose = pose or PoseParams.identity()
    verts, _ = vertex_positions_and_jacobians(model, beta, pose, model.fingertips)
    return verts


def shape_energy(model: HandModel, beta, captures) -> tuple[float, np.ndarray]:
    """Contact energy and its gradient over ``captures``.

    ``captures`` is an iterable of ``(PoseParams, pairs)``; the energy is the
    sum over all pairs of ``|v_j - v_k|^2`` in mm^2.
    """
    energy = 0.0
    grad = np.zeros(model.n_shape)
    for pose, pairs in captures:
        idx = [v for pair in pairs for v in pair]
        verts, jacs = vertex_positions_and_jacobians(model, beta, pose, idx)
        for n in range(len(pairs)):
            d = verts[2 * n] - verts[2 * n + 1]
            energy += float(d @ d)
            grad += 2.0 * d @ (jacs[2 * n] - jacs[2 * n + 1])
    return energy, grad


# ----------------------------------------------------------------------
# serialization


def model_to_dict(model: HandModel) -> dict:
    links = []
    for i in range(N_LINKS):
        terminal = model.capsule_child[i] < 0
        links.append(
            {
                "name": LINK_NAMES[i],
                "parent": int(model.parents[i]),
                "offset": model.rest_offsets[i].tolist(),
                "offset_regressor": model.offset_regressors[i].tolist(),
                "radius": float(model.radii[i]),
                "radius_regressor": model.radius_regressors[i].tolist(),
                "capsule_child": None if terminal else int(model.capsule_child[i]),
                "tip_offset": model.tip_offsets[i].tolist() if terminal else None,
                "tip_regressor": model.tip_regressors[i].tolist() if terminal else None,
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "name": model.name,
        "mirror": model.mirror,
        "shape_dim": model.n_shape,
        "links": links,
        "fingertips": [int(v) for v in model.fingertips],
        "contacts": [
            {"name": c.name, "finger": c.finger, "pose": c.pose.to_dict(), "pairs": [list(map(int, p)) for p in c.pairs]}
            for c in model.contacts
        ],
    }


def model_from_dict(doc: dict) -> HandModel:
    if not isinstance(doc, dict):
        raise ParseError("model document must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise VersionError(f"unsupported model schema version {version!r}")
    try:
        B = int(doc["shape_dim"])
        links = doc["links"]
        if len(links) != N_LINKS:
            raise SchemaError(f"expected {N_LINKS} links, found {len(links)}")
        zeros3 = [0.0, 0.0, 0.0]
        zerosR = [[0.0] * B for _ in range(3)]
        contacts = [
            ContactPose(c["name"], c["finger"], PoseParams.from_dict(c["pose"]), [tuple(p) for p in c["pairs"]])
            for c in doc.get("contacts", [])
        ]
        return HandModel(
            parents=[l["parent"] for l in links],
            rest_offsets=[l["offset"] for l in links],
            offset_regressors=[l["offset_regressor"] for l in links],
            radii=[l["radius"] for l in links],
            radius_regressors=[l["radius_regressor"] for l in links],
            capsule_child=[-1 if l["capsule_child"] is None else l["capsule_child"] for l in links],
            tip_offsets=[l["tip_offset"] if l["tip_offset"] is not None else zeros3 for l in links],
            tip_regressors=[l["tip_regressor"] if l["tip_regressor"] is not None else zerosR for l in links],
            contacts=contacts,
            fingertips=doc["fingertips"],
            mirror=doc.get("mirror", False),
            name=doc.get("name", "hand"),
        )
    except ModelError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed model document: {exc}") from exc


def load_model(path) -> HandModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError:
        raise
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return model_from_dict(doc)


def save_model(model: HandModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def model_hash(model: HandModel) -> str:
    canon = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def default_model_path() -> Path:
    return Path(str(resources.files("glovecal") / "models" / "default_hand.json"))


def load_default_model() -> HandModel:
    return load_model(default_model_path())


def models_equal(a: HandModel, b: HandModel) -> bool:
    return model_to_dict(a) == model_to_dict(b)


def solve_contact_pose(
    model: HandModel,
    beta,
    pose: PoseParams,
    pairs,
    joints,
    tol: float = 1e-9,
    max_iter: int = 100,
    max_step: float = 0.2,
) -> PoseParams:
    """Adjust the listed joints so that every contact pair coincides.

    Damped minimum-norm Gauss-Newton on right-multiplied rotation-vector
    increments ``J_i <- J_i exp(d_i)``; the Jacobian is taken by central
    differences. Returns a new pose; raises RuntimeError if the contact
    distance does not drop below ``tol`` mm.
    """
    from .so3 import exp_map

    beta = model.check_beta(beta)
    joints = list(joints)
    idx = [v for pair in pairs for v in pair]
    n = len(pairs)

    def residual(p: PoseParams) -> np.ndarray:
        verts, _ = vertex_positions_and_jacobians(model, beta, p, idx)
        return np.concatenate([verts[2 * k] - verts[2 * k + 1] for k in range(n)])

    def perturbed(p: PoseParams, delta: np.ndarray) -> PoseParams:
        q = p.copy()
        for m, j in enumerate(joints):
            q.joint_rotations[j - 1] = q.joint_rotations[j - 1] @ exp_map(delta[3 * m : 3 * m + 3])
        return q

    current = pose.copy()
    h = 1e-6
    for _ in range(max_iter):
        r = residual(current)
        if np.max(np.abs(r)) < tol:
            return current
        jac = np.empty((r.size, 3 * len(joints)))
        for c in range(jac.shape[1]):
            e = np.zeros(jac.shape[1])
            e[c] = h
            jac[:, c] = (residual(perturbed(current, e)) - residual(perturbed(current, -e))) / (2 * h)
        step = -np.linalg.pinv(jac) @ r
        norm = np.linalg.norm(step)
        if norm > max_step:
            step *= max_step / norm
        current = perturbed(current, step)
    r = residual(current)
    if np.max(np.abs(r)) < tol:
        return current
    raise RuntimeError(f"contact pose did not converge (residual {np.max(np.abs(r)):.3g} mm)")
