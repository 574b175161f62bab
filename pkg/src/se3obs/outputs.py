"""Measurement models on SE(3) and observability checks.

Two output families are provided:

* landmark outputs: body-frame positions of known inertial points,
  ``y_i = R^T yr_i - R^T p``;
* direction outputs: body-frame images of known inertial vectors,
  ``z_j = R^T zr_j`` for all but the last output, and the distinguished
  last output ``z_n = R^T zr_n + R^T p`` which retains the translation.

A full-rank difference transform converts a landmark measurement list
into a direction measurement list (differences kill the translation in
all but the averaged last entry), so the same scene can drive either
observer flavor.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lie_core import Pose, exp_se3, inverse

# Minimum singular value for the difference-transform coefficients to count
# as full rank (no measurement information may be lost).
COEFF_RANK_TOL = 1e-9
# Scaled cross-product threshold below which reference vectors count as
# collinear. Surfaced as a parameter on the checks; this is the default.
COLLINEARITY_TOL = 1e-9


@dataclass
class LandmarkSet:
    """Known inertial-frame landmark positions with positive weights."""

    references: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.references = np.atleast_2d(np.asarray(self.references, dtype=float))
        n = self.references.shape[0]
        if n < 1 or self.references.shape[1] != 3:
            raise ValueError("references must be an (n, 3) array with n >= 1")
        if self.weights is None:
            self.weights = np.ones(n)
        self.weights = np.asarray(self.weights, dtype=float).reshape(n)
        if not np.all(self.weights > 0):
            raise ValueError("all weights must be strictly positive")

    def __len__(self) -> int:
        return self.references.shape[0]


@dataclass
class DirectionOutputSet:
    """Reference direction outputs derived from a difference transform.

    ``coefficients`` is the (n-1)x(n-1) transform matrix; ``references``
    holds the n derived reference outputs, the last of which is the
    distinguished translation-bearing one.
    """

    coefficients: np.ndarray
    references: np.ndarray

    def __post_init__(self) -> None:
        self.coefficients = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        self.references = np.atleast_2d(np.asarray(self.references, dtype=float))
        n = self.references.shape[0]
        if self.coefficients.shape != (n - 1, n - 1):
            raise ValueError("coefficients must be (n-1, n-1) for n reference outputs")
        smin = np.linalg.svd(self.coefficients, compute_uv=False)[-1] if n > 1 else 0.0
        if not smin > COEFF_RANK_TOL:
            raise ValueError(
                f"transform coefficients are rank deficient (smallest singular value {smin:.3e})"
            )

    def __len__(self) -> int:
        return self.references.shape[0]


@dataclass
class Measurement:
    """A list of simultaneous 3-vector outputs at one time instant."""

    values: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))


@dataclass
class ObservabilityReport:
    passed: bool
    detail: str

    def __bool__(self) -> bool:
        return self.passed


def measure_landmark(X: Pose, ref: np.ndarray) -> np.ndarray:
    """Body-frame landmark output ``R^T ref - R^T p``."""
    ref = np.asarray(ref, dtype=float).reshape(3)
    return X.R.T @ (ref - X.p)


def measure_landmarks(X: Pose, refs: np.ndarray) -> np.ndarray:
    """Vectorized :func:`measure_landmark` over an (n, 3) reference array."""
    refs = np.atleast_2d(np.asarray(refs, dtype=float))
    return (refs - X.p) @ X.R


def measure_direction(X: Pose, ref: np.ndarray, is_last: bool = False) -> np.ndarray:
    """Direction output ``R^T ref``; the distinguished last output adds
    the body-frame translation: ``R^T ref + R^T p``."""
    ref = np.asarray(ref, dtype=float).reshape(3)
    if is_last:
        return X.R.T @ (ref + X.p)
    return X.R.T @ ref


def measure_directions(X: Pose, refs: np.ndarray) -> np.ndarray:
    """Vectorized direction outputs; the final row is the distinguished one."""
    refs = np.atleast_2d(np.asarray(refs, dtype=float))
    out = refs @ X.R
    out[-1] += X.R.T @ X.p
    return out


def z_transform(y: Measurement, A: np.ndarray) -> Measurement:
    """Difference transform of a landmark measurement list.

    Output ``j`` (for ``j < n``) is ``sum_i A[i, j] (y[i+1] - y[i])``; the
    last output is ``-mean(y)``. ``A`` must be full rank so that no
    measurement information is lost.
    """
    values = np.atleast_2d(y.values)
    n = values.shape[0]
    if n < 2:
        raise ValueError("difference transform needs at least two outputs")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape != (n - 1, n - 1):
        raise ValueError(f"coefficient matrix must be {(n - 1, n - 1)}, got {A.shape}")
    smin = np.linalg.svd(A, compute_uv=False)[-1]
    if not smin > COEFF_RANK_TOL:
        raise ValueError(
            f"coefficient matrix is rank deficient (smallest singular value {smin:.3e})"
        )
    diffs = np.diff(values, axis=0)
    out = np.empty((n, 3))
    out[: n - 1] = A.T @ diffs
    out[n - 1] = -values.mean(axis=0)
    return Measurement(out, y.timestamp)


def direction_set_from_landmarks(
    landmarks: LandmarkSet, A: np.ndarray | None = None
) -> DirectionOutputSet:
    """Derive the direction reference set of a landmark scene.

    Applying the same difference transform to reference positions and to
    landmark measurements commutes with the group action, so these derived
    references are consistent with transformed measurement streams.
    """
    n = len(landmarks)
    if A is None:
        A = np.eye(n - 1)
    refs = z_transform(Measurement(landmarks.references), A).values
    return DirectionOutputSet(A, refs)


def check_observability_landmarks(
    refs, tol: float = COLLINEARITY_TOL
) -> ObservabilityReport:
    """Pass when at least three landmarks are not on one line.

    A triple counts as non-collinear when the cross product of its
    difference vectors exceeds ``tol`` times the product of their norms.
    """
    if isinstance(refs, LandmarkSet):
        refs = refs.references
    refs = np.atleast_2d(np.asarray(refs, dtype=float))
    n = refs.shape[0]
    if n < 3:
        return ObservabilityReport(False, f"only {n} landmark(s); at least 3 required")
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                d1 = refs[i] - refs[j]
                d2 = refs[j] - refs[k]
                scale = np.linalg.norm(d1) * np.linalg.norm(d2)
                if scale > 0 and np.linalg.norm(np.cross(d1, d2)) > tol * scale:
                    return ObservabilityReport(
                        True, f"landmarks ({i}, {j}, {k}) span a plane"
                    )
    return ObservabilityReport(False, "all landmarks are collinear")


def check_observability_directions(
    refs, tol: float = COLLINEARITY_TOL
) -> ObservabilityReport:
    """Pass when some pair of reference directions is non-collinear.

    ``refs`` should contain the plain direction references only; the
    distinguished translation-bearing output is excluded by callers.
    """
    refs = np.atleast_2d(np.asarray(refs, dtype=float))
    m = refs.shape[0]
    for j in range(m):
        for k in range(j + 1, m):
            scale = np.linalg.norm(refs[j]) * np.linalg.norm(refs[k])
            if scale > 0 and np.linalg.norm(np.cross(refs[j], refs[k])) > tol * scale:
                return ObservabilityReport(True, f"directions ({j}, {k}) are independent")
    return ObservabilityReport(False, "no non-collinear direction pair")


def _output_at_inverse_exp(eps: np.ndarray, ref: np.ndarray, kind: str, is_last: bool) -> np.ndarray:
    X = inverse(exp_se3(eps))
    if kind == "landmark":
        return measure_landmark(X, ref)
    return measure_direction(X, ref, is_last=is_last)


def stabilizer_kernel_dimension(
    refs,
    kind: str = "landmark",
    weights: np.ndarray | None = None,
    fd_step: float = 1e-6,
    rank_tol: float = 1e-7,
) -> int:
    """Dimension of the joint stabilizer algebra of a reference set.

    Builds ``M = sum_i k_i J_i^T J_i`` where ``J_i`` is the central
    finite-difference Jacobian of ``eps -> output_i(exp(eps)^-1, ref_i)``
    at ``eps = 0`` (the per-output cost Hessian at a zero residual is the
    identity), and returns ``6 - rank(M)``. Singular values below
    ``rank_tol`` times the largest count as zero. Zero kernel dimension is
    the algebraic observability condition.
    """
    if isinstance(refs, LandmarkSet):
        if weights is None:
            weights = refs.weights
        refs = refs.references
    elif isinstance(refs, DirectionOutputSet):
        refs = refs.references
    refs = np.atleast_2d(np.asarray(refs, dtype=float))
    n = refs.shape[0]
    if weights is None:
        weights = np.ones(n)
    if kind not in ("landmark", "direction"):
        raise ValueError(f"unknown output kind {kind!r}")

    M = np.zeros((6, 6))
    for i in range(n):
        is_last = kind == "direction" and i == n - 1
        J = np.empty((3, 6))
        for j in range(6):
            eps = np.zeros(6)
            eps[j] = fd_step
            plus = _output_at_inverse_exp(eps, refs[i], kind, is_last)
            minus = _output_at_inverse_exp(-eps, refs[i], kind, is_last)
            J[:, j] = (plus - minus) / (2.0 * fd_step)
        M += weights[i] * J.T @ J
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 6
    rank = int(np.sum(s > rank_tol * s[0]))
    return 6 - rank
