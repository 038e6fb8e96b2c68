"""scikit-learn style wrappers around the calibration solvers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import so3
from .calibration import (
    ALIGN_MAX_ITER,
    ALIGN_TOL,
    SHAPE_GRAD_TOL,
    SHAPE_MAX_ITER,
    calibrate_shape,
    corrected_link_rotation,
    solve_alignment,
    solve_dorsal_alignment,
)
from .hand_model import HandModel, PoseParams, fingertip_positions, load_default_model


def check_rotations(x, name: str = "X", tol: float = 1e-6, ndim: int | None = None) -> np.ndarray:
    """Validate an array of rotation matrices and return it as float64."""
    r = np.asarray(x, dtype=float)
    if r.ndim < 2 or r.shape[-2:] != (3, 3):
        raise ValueError(f"{name} must have shape (..., 3, 3), got {r.shape}")
    if ndim is not None and r.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got {r.ndim}")
    if not so3.is_rotation(r, tol):
        raise ValueError(f"{name} contains matrices that are not rotations (tolerance {tol})")
    return r


def check_quaternions(q, name: str = "q", tol: float = 1e-6) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim < 1 or q.shape[-1] != 4:
        raise ValueError(f"{name} must have shape (..., 4)")
    if not np.all(np.abs(np.linalg.norm(q, axis=-1) - 1.0) <= tol):
        raise ValueError(f"{name} contains non-unit quaternions")
    return so3.canonical_quat(q)


class PoseCalibrator(TransformerMixin, BaseEstimator):
    """Fits the world alignment ``A`` and mounting corrections ``C``.

    ``fit(X, y)`` takes measured readings ``X`` and model-frame reference
    rotations ``y``, both (K poses, N sensors, 3, 3). ``transform`` maps
    readings (..., N, 3, 3) to model-frame link rotations.
    """

    def __init__(self, tol: float = ALIGN_TOL, max_iter: int = ALIGN_MAX_ITER):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X = check_rotations(X, "X", ndim=4)
        y = check_rotations(y, "y", ndim=4)
        if X.shape != y.shape:
            raise ValueError(f"X {X.shape} and y {y.shape} differ in shape")
        kinds = [f"pose{k}" for k in range(len(X))]
        res = solve_alignment(dict(zip(kinds, X)), dict(zip(kinds, y)), tol=self.tol, max_iter=self.max_iter)
        self.A_ = res.A
        self.C_ = res.C
        self.residuals_deg_ = res.residuals_deg
        self.n_iter_ = res.n_iter
        self.converged_ = res.converged
        self.n_sensors_ = X.shape[1]
        self.result_ = res
        return self

    def transform(self, X):
        check_is_fitted(self, "A_")
        X = check_rotations(X, "X")
        if X.shape[-3] != self.n_sensors_:
            raise ValueError(f"expected {self.n_sensors_} sensors, got {X.shape[-3]}")
        return corrected_link_rotation(X, self.A_, self.C_)

    def score(self, X, y):
        """Negative mean residual angle (radians) on held-out poses."""
        pred = self.transform(X)
        return -float(np.mean(so3.geodesic_angle(pred, check_rotations(y, "y"))))


class ShapeCalibrator(BaseEstimator):
    """Fits shape coefficients from contact poses.

    ``fit(X)`` takes a list of PoseParams, one per contact entry of the
    model (or ``(pose, pairs)`` tuples). ``predict`` returns rest-pose
    fingertip positions (5, 3) of the fitted shape.
    """

    def __init__(self, model: HandModel | None = None, grad_tol: float = SHAPE_GRAD_TOL,
                 max_iter: int = SHAPE_MAX_ITER, beta0=None):
        self.model = model
        self.grad_tol = grad_tol
        self.max_iter = max_iter
        self.beta0 = beta0

    def _model(self) -> HandModel:
        return self.model if self.model is not None else load_default_model()

    def _captures(self, X, model):
        caps = []
        for k, item in enumerate(X):
            if isinstance(item, PoseParams):
                if k >= len(model.contacts):
                    raise ValueError("more poses than contact entries in the model")
                caps.append((item, model.contacts[k].pairs))
            else:
                pose, pairs = item
                caps.append((pose, pairs))
        return caps

    def fit(self, X, y=None):
        model = self._model()
        res = calibrate_shape(model, self._captures(X, model), beta0=self.beta0,
                              grad_tol=self.grad_tol, max_iter=self.max_iter)
        self.model_ = model
        self.beta_ = res.beta
        self.energy_ = res.energy
        self.trace_ = res.trace
        self.n_iter_ = res.n_iter
        self.converged_ = res.converged
        return self

    def predict(self, X=None):
        check_is_fitted(self, "beta_")
        return fingertip_positions(self.model_, self.beta_)


class DorsalAligner(TransformerMixin, BaseEstimator):
    """Fits the rigid transform from tracker frame to model frame.

    ``fit(X, y)``: ``X`` is a sequence of tracker poses ``(R, t)`` and
    ``y`` the matching model root poses. ``transform`` maps ``(R, t)``
    pairs into the model frame.
    """

    def fit(self, X, y):
        pairs = [(np.asarray(rd), np.asarray(td), np.asarray(rm), np.asarray(tm)) for (rd, td), (rm, tm) in zip(X, y)]
        res = solve_dorsal_alignment(pairs)
        self.rotation_ = res.rotation
        self.translation_ = res.translation
        self.alignment_ = res
        return self

    def transform(self, X):
        check_is_fitted(self, "rotation_")
        return [self.alignment_.apply(r, t) for r, t in X]
