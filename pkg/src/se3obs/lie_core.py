"""Matrix Lie-group primitives for SO(3) and SE(3).

Conventions used throughout the package:

* SE(3) elements are stored as a ``Pose`` with rotation matrix ``R`` and
  translation ``p``; the homogeneous 4x4 matrix is ``[[R, p], [0, 1]]``.
* Algebra coordinates are rotation-first 6-vectors ``(w, v)``: the first
  three entries are the angular part, the last three the translational
  part.  All 6x6 block matrices in this package assume that ordering.
* Tangent vectors at a pose are expressed in the right-translated basis
  (basis elements of the algebra multiplied by the pose on the right),
  so the coordinates of a tangent ``(Rdot, pdot)`` are
  ``w = vee3(Rdot R^T)`` and ``v = pdot - w x p``.

Angles are radians, translations are meters.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Series fallbacks kick in below this rotation angle to avoid 0/0.
SMALL_ANGLE = 1e-4
# Tolerance on ||S + S^T||_F for accepting a matrix as skew-symmetric.
SKEW_TOL = 1e-9
# Orthonormality drift above which renormalization re-projects a rotation.
ORTHO_TOL = 1e-9
# log is rejected for rotation angles within this margin of pi.
LOG_ANGLE_MARGIN = 1e-6


def hat3(v: np.ndarray) -> np.ndarray:
    """Cross-product (skew) matrix: ``hat3(v) @ w == cross(v, w)``."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee3(S: np.ndarray, tol: float = SKEW_TOL) -> np.ndarray:
    """Inverse of :func:`hat3`.

    Raises ``ValueError`` when the input is not skew-symmetric to within
    ``tol`` in Frobenius norm.
    """
    S = np.asarray(S, dtype=float)
    defect = np.linalg.norm(S + S.T)
    if not defect < tol:
        raise ValueError(f"matrix is not skew-symmetric: ||S + S^T|| = {defect:.3e}")
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


@dataclass
class AlgebraVec6:
    """Coordinates ``(omega, vel)`` of an se(3) element.

    ``omega`` is the angular part (rad/s when used as a velocity),
    ``vel`` the translational part (m/s).
    """

    omega: np.ndarray
    vel: np.ndarray

    def __post_init__(self) -> None:
        self.omega = np.asarray(self.omega, dtype=float).reshape(3)
        self.vel = np.asarray(self.vel, dtype=float).reshape(3)

    @classmethod
    def zero(cls) -> "AlgebraVec6":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vec(cls, u: np.ndarray) -> "AlgebraVec6":
        u = np.asarray(u, dtype=float).reshape(6)
        return cls(u[:3], u[3:])

    def as_vec(self) -> np.ndarray:
        return np.concatenate([self.omega, self.vel])

    def norm(self) -> float:
        return float(np.sqrt(self.omega @ self.omega + self.vel @ self.vel))


@dataclass
class Pose:
    """Element of SE(3): rotation matrix ``R`` and translation ``p``."""

    R: np.ndarray
    p: np.ndarray

    def __post_init__(self) -> None:
        self.R = np.asarray(self.R, dtype=float).reshape(3, 3)
        self.p = np.asarray(self.p, dtype=float).reshape(3)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 matrix ``[[R, p], [0, 1]]``."""
        M = np.eye(4)
        M[:3, :3] = self.R
        M[:3, 3] = self.p
        return M

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "Pose":
        M = np.asarray(M, dtype=float)
        return cls(M[:3, :3].copy(), M[:3, 3].copy())


@dataclass
class TangentIncrement:
    """A tangent vector at a pose: rate of the rotation block (3x3 matrix)
    and rate of the translation (3-vector)."""

    rot_rate: np.ndarray
    trans_rate: np.ndarray

    def __post_init__(self) -> None:
        self.rot_rate = np.asarray(self.rot_rate, dtype=float).reshape(3, 3)
        self.trans_rate = np.asarray(self.trans_rate, dtype=float).reshape(3)


def compose(a: Pose, b: Pose) -> Pose:
    """Group product: ``(Ra, pa) * (Rb, pb) = (Ra Rb, pa + Ra pb)``."""
    return Pose(a.R @ b.R, a.p + a.R @ b.p)


def inverse(a: Pose) -> Pose:
    """Group inverse: ``(R, p)^-1 = (R^T, -R^T p)``."""
    return Pose(a.R.T, -(a.R.T @ a.p))


def rotation_defect(R: np.ndarray) -> float:
    """Frobenius norm of ``R^T R - I`` (orthonormality drift)."""
    R = np.asarray(R, dtype=float)
    return float(np.linalg.norm(R.T @ R - np.eye(3)))


def project_rotation(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in Frobenius norm (polar projection)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt))
    return U @ D @ Vt


def renormalize(a: Pose, tol: float = ORTHO_TOL) -> Pose:
    """Re-project the rotation block when its orthonormality drift
    exceeds ``tol``; otherwise return the pose unchanged."""
    if rotation_defect(a.R) > tol:
        return Pose(project_rotation(a.R), a.p)
    return a


def exp_so3(w: np.ndarray) -> np.ndarray:
    """Rotation-matrix exponential (Rodrigues formula with series fallback)."""
    w = np.asarray(w, dtype=float).reshape(3)
    theta = float(np.linalg.norm(w))
    W = hat3(w)
    t2 = theta * theta
    if theta < SMALL_ANGLE:
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / t2
    return np.eye(3) + a * W + b * (W @ W)


def log_so3(R: np.ndarray) -> np.ndarray:
    """Rotation-vector logarithm.

    Raises ``ValueError`` for rotation angles within ``LOG_ANGLE_MARGIN``
    of pi, where the logarithm is ill-conditioned (axis sign ambiguity).
    """
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    if theta >= np.pi - LOG_ANGLE_MARGIN:
        raise ValueError(
            f"rotation angle {theta:.9f} is within {LOG_ANGLE_MARGIN:g} of pi; "
            "logarithm rejected as ill-conditioned"
        )
    axis_vec = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        scale = 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
    else:
        scale = theta / np.sin(theta)
    return scale * axis_vec


def _v_matrix(w: np.ndarray) -> np.ndarray:
    """Left Jacobian of SO(3): integrates a body translation under rotation."""
    w = np.asarray(w, dtype=float).reshape(3)
    theta = float(np.linalg.norm(w))
    W = hat3(w)
    t2 = theta * theta
    if theta < SMALL_ANGLE:
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    else:
        b = (1.0 - np.cos(theta)) / t2
        c = (theta - np.sin(theta)) / (t2 * theta)
    return np.eye(3) + b * W + c * (W @ W)


def _v_matrix_inv(w: np.ndarray) -> np.ndarray:
    """Inverse of :func:`_v_matrix`, via the closed form with series fallback."""
    w = np.asarray(w, dtype=float).reshape(3)
    theta = float(np.linalg.norm(w))
    W = hat3(w)
    t2 = theta * theta
    if theta < SMALL_ANGLE:
        d = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        d = (1.0 - theta * np.sin(theta) / (2.0 * (1.0 - np.cos(theta)))) / t2
    return np.eye(3) - 0.5 * W + d * (W @ W)


def exp_se3(u) -> Pose:
    """Group exponential of an algebra element ``(w, v)``."""
    if isinstance(u, AlgebraVec6):
        u = u.as_vec()
    u = np.asarray(u, dtype=float).reshape(6)
    w, v = u[:3], u[3:]
    return Pose(exp_so3(w), _v_matrix(w) @ v)


def log_se3(X: Pose) -> AlgebraVec6:
    """Group logarithm; rejects rotations too close to a half turn."""
    w = log_so3(X.R)
    v = _v_matrix_inv(w) @ X.p
    return AlgebraVec6(w, v)


def adjoint_matrix(X: Pose) -> np.ndarray:
    """6x6 matrix of the adjoint map of ``X`` in rotation-first coordinates:
    ``[[R, 0], [hat3(p) R, R]]``."""
    A = np.zeros((6, 6))
    A[:3, :3] = X.R
    A[3:, :3] = hat3(X.p) @ X.R
    A[3:, 3:] = X.R
    return A


def left_translation_matrix(X: Pose) -> np.ndarray:
    """6x6 matrix of left translation by ``X`` mapping algebra coordinates to
    right-translated-basis coordinates at ``X``.

    Column ``j`` holds the coordinates of ``X * e_j`` (basis element ``e_j``
    left-translated by ``X``) in the basis ``{e_i X}``; the closed form is
    the same block matrix ``[[R, 0], [hat3(p) R, R]]`` as the adjoint,
    because right-basis coordinates of ``X e_j`` are the algebra coordinates
    of ``(X e_j) X^-1``.
    """
    A = np.zeros((6, 6))
    A[:3, :3] = X.R
    A[3:, :3] = hat3(X.p) @ X.R
    A[3:, 3:] = X.R
    return A


def vec6_to_tangent(w, X: Pose) -> TangentIncrement:
    """Map right-translated-basis coordinates ``(w_w, w_v)`` to the tangent
    at ``X``: rotation rate ``hat3(w_w) R`` and translation rate
    ``w_w x p + w_v``."""
    if isinstance(w, AlgebraVec6):
        w = w.as_vec()
    w = np.asarray(w, dtype=float).reshape(6)
    ww, wv = w[:3], w[3:]
    return TangentIncrement(hat3(ww) @ X.R, np.cross(ww, X.p) + wv)


def tangent_to_vec6(inc: TangentIncrement, X: Pose, tol: float = SKEW_TOL) -> np.ndarray:
    """Inverse of :func:`vec6_to_tangent`: right-translated-basis coordinates
    of a tangent at ``X``."""
    ww = vee3(inc.rot_rate @ X.R.T, tol=tol)
    wv = inc.trans_rate - np.cross(ww, X.p)
    return np.concatenate([ww, wv])


def se3_bracket(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Lie bracket of two algebra coordinate vectors:
    ``([w_a x w_b], [w_a x v_b - w_b x v_a])``."""
    a = np.asarray(a, dtype=float).reshape(6)
    b = np.asarray(b, dtype=float).reshape(6)
    wa, va = a[:3], a[3:]
    wb, vb = b[:3], b[3:]
    return np.concatenate([np.cross(wa, wb), np.cross(wa, vb) - np.cross(wb, va)])


def frobenius_distance(E: Pose) -> float:
    """Frobenius distance of the 4x4 matrix of ``E`` to the identity matrix.

    Zero exactly when ``E`` is the identity pose; for a pure translation it
    equals the translation norm.
    """
    dR = np.eye(3) - E.R
    return float(np.sqrt(np.sum(dR * dR) + E.p @ E.p))


def condition_number(X: Pose) -> float:
    """2-norm condition number of the homogeneous 4x4 matrix of ``X``."""
    s = np.linalg.svd(X.matrix(), compute_uv=False)
    return float(s[0] / s[-1])
