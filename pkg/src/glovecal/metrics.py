"""Evaluation metrics, each with an exhaustive reference implementation.

Accelerated geometric queries must agree with their brute-force twins
bit for bit, so both compute squared distances with the same explicit
elementwise arithmetic and differ only in which candidates they visit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import kendalltau

from . import so3
from .hand_model import FINGERS, HandModel, vertex_trajectories


class MetricError(ValueError):
    pass


class LengthMismatch(MetricError):
    pass


class ZeroRange(MetricError):
    pass


class EmptyInput(MetricError):
    pass


class EmptyMesh(MetricError):
    pass


def _mean(values) -> float:
    """Order-fixed mean used by every reduction in this module."""
    values = np.asarray(values, dtype=float).ravel()
    return math.fsum(values.tolist()) / len(values)


# ----------------------------------------------------------------------
# single-joint error statistics


@dataclass
class JointErrorStats:
    bias: float
    std: float
    non_linearity: float
    bin_centers: np.ndarray
    bin_residuals: np.ndarray
    bin_counts: np.ndarray
    residuals: np.ndarray
    slope: float
    intercept: float

    def to_dict(self) -> dict:
        return {
            "bias_deg": self.bias,
            "std_deg": self.std,
            "non_linearity_pct": self.non_linearity,
            "fit_slope": self.slope,
            "fit_intercept_deg": self.intercept,
            "bins": [
                {"angle_deg": float(c), "mean_residual_deg": float(r), "count": int(n)}
                for c, r, n in zip(self.bin_centers, self.bin_residuals, self.bin_counts)
            ],
        }


def joint_error_stats(measured, reference, n_bins: int = 10) -> JointErrorStats:
    """Bias, spread and non-linearity of a measured joint angle (degrees).

    Samples are grouped into ``n_bins`` equal-width bins of reference angle.
    Bias is the largest absolute mean residual over the bins, std the
    population standard deviation of all residuals. Non-linearity is the
    largest deviation of a bin mean from the least-squares line of measured
    against reference, as a percentage of the reference range.
    """
    m = np.asarray(measured, dtype=float).ravel()
    r = np.asarray(reference, dtype=float).ravel()
    if m.shape != r.shape:
        raise LengthMismatch(f"{m.size} measured vs {r.size} reference samples")
    if m.size < 2:
        raise LengthMismatch("need at least two samples")
    lo, hi = float(r.min()), float(r.max())
    span = hi - lo
    if span <= 0:
        raise ZeroRange("reference angles span no range")
    resid = m - r
    edges = np.linspace(lo, hi, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, r, side="right") - 1, 0, n_bins - 1)
    slope, intercept = np.polyfit(r, m, 1)
    dev = m - (slope * r + intercept)
    centers, means, devs, counts = [], [], [], []
    for b in range(n_bins):
        sel = idx == b
        if not np.any(sel):
            continue
        centers.append(0.5 * (edges[b] + edges[b + 1]))
        means.append(_mean(resid[sel]))
        devs.append(_mean(dev[sel]))
        counts.append(int(sel.sum()))
    means = np.array(means)
    std = float(np.sqrt(_mean((resid - _mean(resid)) ** 2)))
    return JointErrorStats(
        bias=float(np.max(np.abs(means))),
        std=std,
        non_linearity=float(np.max(np.abs(devs)) / span * 100.0),
        bin_centers=np.array(centers),
        bin_residuals=means,
        bin_counts=np.array(counts),
        residuals=resid,
        slope=float(slope),
        intercept=float(intercept),
    )


# ----------------------------------------------------------------------
# unidirectional chamfer


def _points(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[1] != 3 or len(a) == 0:
        raise EmptyInput(f"{name} must be a non-empty (n, 3) array")
    if not np.all(np.isfinite(a)):
        raise MetricError(f"{name} has non-finite coordinates")
    return a


def _sq_dist(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Squared distances between rows of ``p`` (n, 3) and ``v`` (m, 3)."""
    dx = p[:, None, 0] - v[None, :, 0]
    dy = p[:, None, 1] - v[None, :, 1]
    dz = p[:, None, 2] - v[None, :, 2]
    return dx * dx + dy * dy + dz * dz


def nearest_sq_brute(points, vertices, chunk: int = 256) -> np.ndarray:
    p = _points(points, "points")
    v = _points(vertices, "vertices")
    out = np.empty(len(p))
    for s in range(0, len(p), chunk):
        out[s:s + chunk] = _sq_dist(p[s:s + chunk], v).min(axis=1)
    return out


def nearest_sq_tree(points, vertices, tree: cKDTree | None = None) -> np.ndarray:
    """Same values as :func:`nearest_sq_brute` using a k-d tree.

    The tree proposes a nearest distance; every vertex within a slightly
    inflated radius is then rescored with the exact arithmetic above.
    """
    p = _points(points, "points")
    v = _points(vertices, "vertices")
    tree = tree or cKDTree(v)
    dist, _ = tree.query(p, k=1)
    radius = dist * (1.0 + 1e-9) + 1e-9
    out = np.empty(len(p))
    for k, cand in enumerate(tree.query_ball_point(p, radius)):
        out[k] = _sq_dist(p[k:k + 1], v[cand]).min()
    return out


def chamfer_unidirectional(points, vertices, accelerated: bool = True) -> float:
    """Mean squared nearest-vertex distance from ``points`` to ``vertices``, mm^2."""
    sq = nearest_sq_tree(points, vertices) if accelerated else nearest_sq_brute(points, vertices)
    return _mean(sq)


def chamfer_rms(points, vertices, accelerated: bool = True) -> float:
    """Root of the chamfer value, in mm."""
    return math.sqrt(chamfer_unidirectional(points, vertices, accelerated))


# ----------------------------------------------------------------------
# point to mesh


def _triangle_sq_dist(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Squared distance from point ``p`` (3,) to triangles (m, 3) x3.

    Voronoi-region case analysis of the closest point on a triangle,
    evaluated for all triangles at once.
    """
    def dot(u, w):
        return u[..., 0] * w[..., 0] + u[..., 1] * w[..., 1] + u[..., 2] * w[..., 2]

    ab = b - a
    ac = c - a
    ap = p - a
    d1, d2 = dot(ab, ap), dot(ac, ap)
    bp = p - b
    d3, d4 = dot(ab, bp), dot(ac, bp)
    cp = p - c
    d5, d6 = dot(ab, cp), dot(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = 1.0 / (va + vb + vc)
        v_in = vb * denom
        w_in = vc * denom

    # default: interior of the face
    q = a + ab * v_in[:, None] + ac * w_in[:, None]
    region_bc = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
    q = np.where(region_bc[:, None], b + (c - b) * t_bc[:, None], q)
    region_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    q = np.where(region_ac[:, None], a + ac * t_ac[:, None], q)
    region_c = (d6 >= 0) & (d5 <= d6)
    q = np.where(region_c[:, None], c, q)
    region_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    q = np.where(region_ab[:, None], a + ab * t_ab[:, None], q)
    region_b = (d3 >= 0) & (d4 <= d3)
    q = np.where(region_b[:, None], b, q)
    region_a = (d1 <= 0) & (d2 <= 0)
    q = np.where(region_a[:, None], a, q)
    diff = p - q
    return dot(diff, diff)


def _mesh_arrays(vertices, faces):
    v = np.asarray(vertices, dtype=float)
    f = np.asarray(faces, dtype=np.int64)
    if f.ndim != 2 or f.shape[1] != 3 or len(f) == 0:
        raise EmptyMesh("mesh has no triangles")
    if f.min() < 0 or f.max() >= len(v):
        raise MetricError("face index out of range")
    return v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]


def point_to_mesh_brute(point, vertices, faces) -> float:
    a, b, c = _mesh_arrays(vertices, faces)
    p = np.asarray(point, dtype=float)
    return math.sqrt(float(_triangle_sq_dist(p, a, b, c).min()))


class TriangleBVH:
    """Bounding-volume hierarchy over triangles (median splits, AABB nodes)."""

    def __init__(self, vertices, faces, leaf_size: int = 16):
        self.a, self.b, self.c = _mesh_arrays(vertices, faces)
        tri = np.stack([self.a, self.b, self.c], axis=1)
        self.lo_tri = tri.min(axis=1)
        self.hi_tri = tri.max(axis=1)
        centroid = tri.mean(axis=1)
        self.order = []
        self.nodes = []  # (lo, hi, left, right, start, stop)
        self.leaf_size = leaf_size
        self._build(np.arange(len(tri)), centroid)
        self.order = np.array(self.order)
        # plain tuples: per-node box tests are cheaper in Python floats than in numpy
        self._boxes = [tuple(n[0].tolist()) + tuple(n[1].tolist()) for n in self.nodes]
        self._links = [(n[2], n[3], self.order[n[4]:n[5]] if n[2] < 0 else None) for n in self.nodes]

    def _build(self, idx, centroid) -> int:
        node = len(self.nodes)
        lo = self.lo_tri[idx].min(axis=0)
        hi = self.hi_tri[idx].max(axis=0)
        self.nodes.append(None)
        if len(idx) <= self.leaf_size:
            start = len(self.order)
            self.order.extend(idx.tolist())
            self.nodes[node] = (lo, hi, -1, -1, start, len(self.order))
            return node
        axis = int(np.argmax(hi - lo))
        idx = idx[np.argsort(centroid[idx, axis], kind="stable")]
        half = len(idx) // 2
        left = self._build(idx[:half], centroid)
        right = self._build(idx[half:], centroid)
        self.nodes[node] = (lo, hi, left, right, -1, -1)
        return node

    def _box_sq_dist(self, p, node) -> float:
        x, y, z = p
        x0, y0, z0, x1, y1, z1 = self._boxes[node]
        dx = x0 - x if x < x0 else (x - x1 if x > x1 else 0.0)
        dy = y0 - y if y < y0 else (y - y1 if y > y1 else 0.0)
        dz = z0 - z if z < z0 else (z - z1 if z > z1 else 0.0)
        return dx * dx + dy * dy + dz * dz

    def query_sq(self, point) -> float:
        p = np.asarray(point, dtype=float)
        pt = tuple(p.tolist())
        best = math.inf
        stack = [(0, self._box_sq_dist(pt, 0))]
        while stack:
            node, lb = stack.pop()
            # boxes contain their triangles; the slack keeps rounding from pruning a true minimum
            if lb * (1.0 - 1e-12) > best:
                continue
            left, right, sel = self._links[node]
            if sel is not None:
                best = min(best, float(_triangle_sq_dist(p, self.a[sel], self.b[sel], self.c[sel]).min()))
                continue
            dl, dr = self._box_sq_dist(pt, left), self._box_sq_dist(pt, right)
            if dl <= dr:
                stack.extend([(right, dr), (left, dl)])
            else:
                stack.extend([(left, dl), (right, dr)])
        return best

    def query(self, point) -> float:
        return math.sqrt(self.query_sq(point))


def point_to_mesh(point, vertices, faces, bvh: TriangleBVH | None = None) -> float:
    """Exact distance (mm) from ``point`` to a triangle mesh."""
    bvh = bvh or TriangleBVH(vertices, faces)
    return bvh.query(point)


# ----------------------------------------------------------------------
# pinch distance


def pinch_distance(model: HandModel, beta, root_rotations, joint_rotations, fingers=FINGERS[1:]) -> dict:
    """Mean thumb-to-fingertip distance (mm) per finger over a pose stream."""
    root = np.asarray(root_rotations, dtype=float)
    if root.ndim != 3 or len(root) == 0:
        raise EmptyInput("pose stream is empty")
    tips = model.fingertips
    idx = [int(tips[0])] + [int(tips[FINGERS.index(f)]) for f in fingers]
    pos = vertex_trajectories(model, beta, root, np.zeros((len(root), 3)), joint_rotations, idx)
    out = {}
    for k, f in enumerate(fingers, start=1):
        out[f] = _mean(np.linalg.norm(pos[:, k] - pos[:, 0], axis=-1))
    return out


# ----------------------------------------------------------------------
# drift


@dataclass
class DriftReport:
    minutes: np.ndarray
    mean_error_deg: np.ndarray
    kendall_tau: float
    p_value: float

    @property
    def final(self) -> float:
        return float(self.mean_error_deg[-1])

    def to_dict(self) -> dict:
        return {
            "minutes": [int(m) for m in self.minutes],
            "mean_error_deg": [float(e) for e in self.mean_error_deg],
            "kendall_tau": self.kendall_tau,
            "p_value": self.p_value,
        }


def drift_report(measured, truth, timestamps_ns) -> DriftReport:
    """Mean geodesic error per elapsed minute, plus Kendall's tau of the
    per-minute series against time.

    ``measured`` and ``truth`` are (T, 3, 3) or (T, N, 3, 3); minute ``m``
    covers samples with elapsed time in ``[m - 1, m)`` minutes.
    """
    m = so3.as_rotation(measured)
    g = so3.as_rotation(truth)
    ts = np.asarray(timestamps_ns, dtype=np.int64)
    if m.shape != g.shape or len(ts) != len(m):
        raise LengthMismatch("measured, truth and timestamps must align")
    if len(ts) == 0:
        raise EmptyInput("empty stream")
    err = np.degrees(so3.geodesic_angle(m, g)).reshape(len(ts), -1)
    minute = (ts - ts[0]) // 60_000_000_000
    minutes, values = [], []
    for k in np.unique(minute):
        minutes.append(int(k) + 1)
        values.append(_mean(err[minute == k]))
    values = np.array(values)
    if len(values) >= 2 and np.ptp(values) > 0:
        res = kendalltau(minutes, values)
        tau, pv = float(res.statistic), float(res.pvalue)
    else:
        tau, pv = 0.0, 1.0
    return DriftReport(np.array(minutes), values, tau, pv)
