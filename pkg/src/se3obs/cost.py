"""Invariant state-estimation costs on SE(3) and their differentials.

A cost aggregates squared-Euclidean output residuals,

    phi(xhat, y) = 1/2 * sum_i k_i || predicted_i(xhat, y_i) - ref_i ||^2,

where the prediction maps the body-frame measurement back through the
estimate. The cost is right invariant: shifting both the estimate and the
measurement source by a common group element leaves it unchanged. Its
differential with respect to the estimate, expressed as a coordinate row
against the right-translated basis at the estimate, drives the observer
innovation; because of right invariance the same coordinate row evaluated
at the group error with reference measurements is identical (a bookkeeping
identity that :func:`lemma1_check` verifies numerically).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lie_core import Pose, compose, exp_se3, inverse
from .outputs import (
    DirectionOutputSet,
    LandmarkSet,
    Measurement,
    check_observability_directions,
    check_observability_landmarks,
)

FD_STEP_FIRST = 1e-6
FD_STEP_SECOND = 1e-4


@dataclass
class InvariantCost:
    """Weighted sum of squared output residuals.

    ``kind`` is ``"landmark"`` or ``"direction"``; ``references`` holds the
    reference outputs (for the direction kind the last row is the
    distinguished translation-bearing output); ``weights`` are the strictly
    positive per-output weights; ``observable`` records the reference-set
    observability verdict at construction time.
    """

    kind: str
    references: np.ndarray
    weights: np.ndarray
    observable: bool

    def __post_init__(self) -> None:
        self.references = np.atleast_2d(np.asarray(self.references, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).reshape(len(self.references))
        if not np.all(self.weights > 0):
            raise ValueError("all cost weights must be strictly positive")
        if self.kind not in ("landmark", "direction"):
            raise ValueError(f"unknown cost kind {self.kind!r}")


@dataclass
class CovectorAtPose:
    """Coordinate row of a cotangent vector in the right-translated dual
    basis at ``base``."""

    base: Pose
    row: np.ndarray

    def __post_init__(self) -> None:
        self.row = np.asarray(self.row, dtype=float).reshape(6)


def landmark_cost(landmarks: LandmarkSet) -> InvariantCost:
    return InvariantCost(
        kind="landmark",
        references=landmarks.references,
        weights=landmarks.weights,
        observable=check_observability_landmarks(landmarks).passed,
    )


def direction_cost(
    directions: DirectionOutputSet, weights: np.ndarray | None = None
) -> InvariantCost:
    refs = directions.references
    if weights is None:
        weights = np.ones(len(refs))
    return InvariantCost(
        kind="direction",
        references=refs,
        weights=weights,
        observable=check_observability_directions(refs[:-1]).passed,
    )


def _check_cardinality(y: Measurement, cost: InvariantCost) -> np.ndarray:
    values = np.atleast_2d(y.values)
    if values.shape[0] != len(cost.references):
        raise ValueError(
            f"measurement has {values.shape[0]} outputs, cost expects {len(cost.references)}"
        )
    return values


def residuals(xhat: Pose, y: Measurement, cost: InvariantCost) -> np.ndarray:
    """Per-output residuals ``predicted - reference`` in the inertial frame."""
    return predicted_outputs(xhat, y, cost) - cost.references


def predicted_outputs(xhat: Pose, y: Measurement, cost: InvariantCost) -> np.ndarray:
    """Measurements mapped back through the estimate.

    For landmark outputs this is ``Rhat y_i + phat``; for direction outputs
    ``Rhat z_j`` except the last, which is ``Rhat z_n - phat``.
    """
    values = _check_cardinality(y, cost)
    pred = values @ xhat.R.T
    if cost.kind == "landmark":
        pred += xhat.p
    else:
        pred[-1] -= xhat.p
    return pred


def phi_eval(xhat: Pose, y: Measurement, cost: InvariantCost) -> float:
    """Evaluate the cost: half the weighted sum of squared residuals."""
    r = residuals(xhat, y, cost)
    return float(0.5 * np.sum(cost.weights * np.sum(r * r, axis=1)))


def d1_phi_row(xhat: Pose, y: Measurement, cost: InvariantCost) -> CovectorAtPose:
    """Analytic differential of the cost in the estimate slot.

    Returned as the coordinate row in the right-translated dual basis at
    ``xhat``. The rotational block is the weighted sum of moments
    ``pred_i x resid_i``; the translational block collects the residuals
    whose prediction depends on the translation (all of them for the
    landmark kind, only the distinguished last one -- negated -- for the
    direction kind).
    """
    r = residuals(xhat, y, cost)
    pred = predicted_outputs(xhat, y, cost)
    k = cost.weights
    rot = np.sum(k[:, None] * np.cross(pred, r), axis=0)
    if cost.kind == "landmark":
        trans = np.sum(k[:, None] * r, axis=0)
    else:
        trans = -k[-1] * r[-1]
    return CovectorAtPose(xhat, np.concatenate([rot, trans]))


def d1_phi_fd(
    xhat: Pose, y: Measurement, cost: InvariantCost, step: float = FD_STEP_FIRST
) -> CovectorAtPose:
    """Central finite-difference differential along right-translated basis
    directions; the independent oracle for :func:`d1_phi_row`."""
    if not 1e-8 <= step <= 1e-4:
        raise ValueError("finite-difference step must lie in [1e-8, 1e-4]")
    row = np.empty(6)
    for j in range(6):
        eps = np.zeros(6)
        eps[j] = step
        plus = phi_eval(compose(exp_se3(eps), xhat), y, cost)
        minus = phi_eval(compose(exp_se3(-eps), xhat), y, cost)
        row[j] = (plus - minus) / (2.0 * step)
    return CovectorAtPose(xhat, row)


def lemma1_check(X: Pose, xhat: Pose, y: Measurement, cost: InvariantCost) -> float:
    """Residual of the right-invariance bookkeeping identity.

    The coordinate row of the differential at ``(xhat, y)`` (measurements
    taken at ``X``) must coincide with the row at ``(E, refs)`` where
    ``E = xhat X^-1`` is the group error. Returns the max-norm difference.
    """
    E = compose(xhat, inverse(X))
    row_state = d1_phi_row(xhat, y, cost).row
    row_error = d1_phi_row(E, Measurement(cost.references), cost).row
    return float(np.max(np.abs(row_state - row_error)))


@dataclass
class HessianResult:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    asymmetry: float


def hessian_at_identity(cost: InvariantCost, step: float = FD_STEP_SECOND) -> HessianResult:
    """Second derivative of ``eps -> phi(exp(eps), refs)`` at ``eps = 0``.

    Computed with second-order central differences, symmetrized, and
    returned together with its eigenvalue spectrum. Strict positive
    definiteness is the observability certificate; each kernel dimension
    matches a stabilizer direction of the reference set.
    """
    refs = Measurement(cost.references)

    def f(eps: np.ndarray) -> float:
        return phi_eval(exp_se3(eps), refs, cost)

    H = np.empty((6, 6))
    f0 = f(np.zeros(6))
    for j in range(6):
        ej = np.zeros(6)
        ej[j] = step
        H[j, j] = (f(ej) - 2.0 * f0 + f(-ej)) / (step * step)
    for j in range(6):
        for k in range(j + 1, 6):
            ej = np.zeros(6)
            ej[j] = step
            ek = np.zeros(6)
            ek[k] = step
            H[j, k] = (f(ej + ek) - f(ej - ek) - f(-ej + ek) + f(-ej - ek)) / (
                4.0 * step * step
            )
            H[k, j] = H[j, k]
    asymmetry = float(np.linalg.norm(H - H.T))
    H = 0.5 * (H + H.T)
    return HessianResult(H, np.linalg.eigvalsh(H), asymmetry)


def positivity_radius_probe(
    cost: InvariantCost,
    rng: np.random.Generator,
    radii: tuple[float, ...] = (0.1, 0.3, 1.0, 2.0),
    samples: int = 200,
) -> float:
    """Largest tested error-ball radius on which the cost stays positive.

    The cost is only locally positive definite around the identity; no
    analytic radius is available, so this reports empirical evidence:
    the largest radius in ``radii`` for which ``phi(exp(eps), refs) > 0``
    at every sampled ``eps`` with ``||eps||`` equal to that radius.
    """
    refs = Measurement(cost.references)
    largest = 0.0
    for radius in sorted(radii):
        ok = True
        for _ in range(samples):
            eps = rng.normal(size=6)
            eps *= radius / np.linalg.norm(eps)
            if not phi_eval(exp_se3(eps), refs, cost) > 0.0:
                ok = False
                break
        if not ok:
            break
        largest = radius
    return largest
