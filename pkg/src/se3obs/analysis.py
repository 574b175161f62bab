"""Error coordinates, Lyapunov diagnostics, linearization, and rate fitting.

Everything in this module works on the right-invariant error pair

    E = Xhat X^-1,   btilde = bhat - b,

so that a converging observer corresponds to (E, btilde) -> (identity, 0).
The error dynamics are evaluated in right-trivialized coordinates, the
12x12 linearization is assembled from the gain, Hessian, and adjoint
matrices, and a persistency-of-excitation check integrates the coupling
block along a pose trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cost import InvariantCost, d1_phi_row, hessian_at_identity, phi_eval
from .lie_core import (
    AlgebraVec6,
    Pose,
    TangentIncrement,
    adjoint_matrix,
    compose,
    condition_number,
    frobenius_distance,
    inverse,
    tangent_to_vec6,
    vec6_to_tangent,
)
from .observer import GainGamma, GainK
from .outputs import Measurement

__all__ = [
    "ErrorState",
    "CompoundDistance",
    "LinearizedSystem",
    "AutonomyReport",
    "PEReport",
    "FitResult",
    "error",
    "compound_distance",
    "lyapunov",
    "lyapunov_dot_analytic",
    "error_dynamics_rhs",
    "autonomy_probe",
    "assemble_linearized",
    "linearize",
    "pe_check",
    "fit_rate",
]


# ---------------------------------------------------------------------------
# error coordinates


@dataclass(frozen=True)
class ErrorState:
    """Right-invariant estimation error: group part ``E`` and bias part."""

    E: Pose
    btilde: AlgebraVec6

    def is_zero(self, tol: float = 0.0) -> bool:
        return float(compound_distance(self)) <= tol


@dataclass(frozen=True)
class CompoundDistance:
    """Distance of the error pair to (identity, 0).

    ``value**2 = pose_part**2 + bias_part**2`` where the pose part is the
    Frobenius distance of ``E`` to the identity.  Zero exactly when the
    error is zero.
    """

    pose_part: float
    bias_part: float

    @property
    def value(self) -> float:
        return math.hypot(self.pose_part, self.bias_part)

    def __float__(self) -> float:
        return self.value


def _as_vec6(b: AlgebraVec6 | np.ndarray) -> np.ndarray:
    if isinstance(b, AlgebraVec6):
        return b.as_vec()
    return np.asarray(b, dtype=float).reshape(6)


def error(
    X: Pose,
    xhat: Pose,
    b: AlgebraVec6 | np.ndarray,
    bhat: AlgebraVec6 | np.ndarray,
) -> ErrorState:
    """Form the right-invariant error ``(Xhat X^-1, bhat - b)``.

    Unchanged when both poses are right-shifted by the same group element,
    and equal to ``(identity, 0)`` exactly when the estimates are exact.
    Bias arguments may be 6-vectors or algebra elements.
    """
    E = compose(xhat, inverse(X))
    btilde = AlgebraVec6.from_vec(_as_vec6(bhat) - _as_vec6(b))
    return ErrorState(E, btilde)


def compound_distance(err: ErrorState) -> CompoundDistance:
    return CompoundDistance(
        pose_part=frobenius_distance(err.E),
        bias_part=float(err.btilde.norm()),
    )


# ---------------------------------------------------------------------------
# Lyapunov diagnostics


def lyapunov(err: ErrorState, gamma: GainGamma, cost: InvariantCost) -> float:
    """Value of ``phi(E, refs) + 0.5 * btilde^T Gamma^-1 btilde``.

    Zero exactly at zero error; non-increasing along noise-free closed-loop
    trajectories with validated gains (up to integration error).
    """
    refs = Measurement(cost.references)
    quad = gamma.inverse_quadratic(err.btilde.as_vec())
    return phi_eval(err.E, refs, cost) + 0.5 * quad


def lyapunov_dot_analytic(
    X: Pose | None,
    xhat: Pose | None,
    y: Measurement | None,
    K: GainK,
    cost: InvariantCost,
) -> float:
    """Analytic time derivative of the Lyapunov value: ``-row K row^T``.

    The row is the first-slot cost differential in right-translated
    coordinates.  It can be produced from the measured pair ``(xhat, y)``
    or, equivalently, from the error pose against the references (the two
    agree identically for consistent measurements); pass ``y=None`` with
    both poses to use the error route.  The skew part of a "vasconcelos"
    gain cancels in the quadratic form, so only the symmetric part
    ``diag(k_w I, k_v I)`` enters and the result is never positive.
    """
    if y is not None:
        if xhat is None:
            raise ValueError("measured route needs the estimated pose")
        row = d1_phi_row(xhat, y, cost).row
    else:
        if X is None or xhat is None:
            raise ValueError("error route needs both poses")
        E = compose(xhat, inverse(X))
        row = d1_phi_row(E, Measurement(cost.references), cost).row
    Ksym = K.symmetric_part()
    return -float(row @ Ksym @ row)


# ---------------------------------------------------------------------------
# error dynamics


def error_dynamics_rhs(
    err: ErrorState,
    X: Pose,
    K: GainK,
    gamma: GainGamma,
    cost: InvariantCost,
    omega_body_rate: np.ndarray | None = None,
) -> tuple[TangentIncrement, AlgebraVec6]:
    """Closed-loop error dynamics evaluated directly in error coordinates.

    With ``row`` the cost differential at ``(E, refs)`` in right coordinates
    and ``AdXhat`` the adjoint of ``Xhat = E X``:

        xi_E      = -K row - AdXhat btilde      (right-trivialized rate of E)
        btilde'   = Gamma AdXhat^T row

    The group rate is returned as a tangent increment at ``E``.  For the
    "vasconcelos" gain kind, the skew block of ``K`` depends on the
    world-frame angular rate ``Rhat (W_y - bhat_w)``; supply it via
    ``omega_body_rate`` (defaults to zero).
    """
    E, btilde = err.E, err.btilde.as_vec()
    row = d1_phi_row(E, Measurement(cost.references), cost).row
    if K.kind == "vasconcelos":
        rate = np.zeros(3) if omega_body_rate is None else np.asarray(omega_body_rate, float)
        Kmat = K.matrix(Pose.identity(), rate, np.zeros(3))
    else:
        Kmat = K.matrix()
    ad_xhat = adjoint_matrix(compose(E, X))
    xi = -(Kmat @ row) - ad_xhat @ btilde
    btilde_dot = gamma.matrix() @ (ad_xhat.T @ row)
    return vec6_to_tangent(xi, E), AlgebraVec6.from_vec(btilde_dot)


# ---------------------------------------------------------------------------
# autonomy probe


@dataclass(frozen=True)
class AutonomyReport:
    """Max pairwise right-hand-side discrepancy over base-point samples."""

    group: str
    pose_discrepancy: float
    bias_discrepancy: float

    @property
    def max_discrepancy(self) -> float:
        return max(self.pose_discrepancy, self.bias_discrepancy)


def _translation_adjoint(t: np.ndarray) -> np.ndarray:
    """Adjoint of a pure translation, computed by matrix conjugation.

    For the translation group the conjugation ``M(t) v M(t)^-1`` leaves the
    algebra element untouched, so this returns the identity exactly; it is
    evaluated numerically rather than assumed so the probe below exercises
    the same machinery on both groups.
    """
    M = np.eye(4)
    M[:3, 3] = t
    Minv = np.eye(4)
    Minv[:3, 3] = -t
    out = np.empty((3, 3))
    for i in range(3):
        V = np.zeros((4, 4))
        V[i, 3] = 1.0
        out[:, i] = (M @ V @ Minv)[:3, 3]
    return out


def _r3_error_rhs(
    p_err: np.ndarray,
    btilde_v: np.ndarray,
    t_base: np.ndarray,
    k_v: float,
    gamma_v: float,
    total_weight: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Translation-group counterpart of :func:`error_dynamics_rhs`.

    Landmark outputs on the translation group read ``y_i = ref_i - p``, so
    every residual at error ``p_err`` equals ``p_err`` and the cost row is
    ``total_weight * p_err``.  The adjoint factors are computed by honest
    conjugation; on this Abelian group they are identities, which is what
    makes the result independent of the base point.
    """
    row = total_weight * p_err
    ad_hat = _translation_adjoint(p_err + t_base)
    xi = -k_v * row - ad_hat @ btilde_v
    bdot = gamma_v * (ad_hat.T @ row)
    return xi, bdot


def autonomy_probe(
    group: str,
    err: ErrorState,
    base_points: list[Pose],
    K: GainK,
    gamma: GainGamma,
    cost: InvariantCost,
) -> AutonomyReport:
    """Evaluate the error dynamics at one error but many base trajectories.

    Returns the maximum pairwise discrepancy in the group-rate and
    bias-rate parts separately.  On the translation group ("r3") the
    dynamics are autonomous and the discrepancy vanishes; on "se3" the
    adjoint of the base point enters whenever ``btilde`` is nonzero (group
    part) and whenever the cost row is nonzero (bias part).
    """
    if group not in ("se3", "r3"):
        raise ValueError(f"unknown group kind {group!r}")
    if len(base_points) < 2:
        raise ValueError("need at least two base-point samples")

    if group == "r3":
        total_weight = float(np.sum(cost.weights))
        samples = [
            _r3_error_rhs(
                err.E.p, err.btilde.vel, X.p, K.k_v, gamma.gamma_v, total_weight
            )
            for X in base_points
        ]
        pose_rates = [np.concatenate([np.zeros(3), xi]) for xi, _ in samples]
        bias_rates = [np.concatenate([np.zeros(3), bd]) for _, bd in samples]
    else:
        samples_se3 = [
            error_dynamics_rhs(err, X, K, gamma, cost) for X in base_points
        ]
        pose_rates = [tangent_to_vec6(inc, err.E) for inc, _ in samples_se3]
        bias_rates = [bd.as_vec() for _, bd in samples_se3]

    def max_pairwise(vecs: list[np.ndarray]) -> float:
        worst = 0.0
        for a in range(len(vecs)):
            for b in range(a + 1, len(vecs)):
                worst = max(worst, float(np.linalg.norm(vecs[a] - vecs[b])))
        return worst

    return AutonomyReport(
        group=group,
        pose_discrepancy=max_pairwise(pose_rates),
        bias_discrepancy=max_pairwise(bias_rates),
    )


# ---------------------------------------------------------------------------
# linearization


@dataclass(frozen=True)
class LinearizedSystem:
    """First-order model of the error dynamics about zero error.

    ``matrix`` is the 12x12 block matrix

        [ -K H     -Ad_X ]
        [ Gamma Ad_X^T H     0 ]

    acting on stacked (group, bias) error coordinates.  The transformed
    blocks use the factor ``Gamma = L^T L``:

        A = -L K H L^-1,   B = -L Ad_X L^T,   P = L^-T H L^-1,

    which put the coupled system in the standard adaptive form
    ``eps' = A eps + B delta``, ``delta' = -B^T P eps``.
    """

    matrix: np.ndarray
    A: np.ndarray
    B: np.ndarray
    P: np.ndarray
    L: np.ndarray
    H: np.ndarray
    K: np.ndarray
    ad_x: np.ndarray
    gamma: np.ndarray = field(repr=False)

    def q_matrix(self) -> np.ndarray:
        """``Q = -(A^T P + P A)`` for frozen base point (so ``P' = 0``)."""
        return -(self.A.T @ self.P + self.P @ self.A)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix)

    def is_hurwitz(self, margin: float = 0.0) -> bool:
        return bool(np.all(self.eigenvalues().real < -margin))


def assemble_linearized(
    Kmat: np.ndarray,
    Hmat: np.ndarray,
    ad_x: np.ndarray,
    gamma_mat: np.ndarray,
) -> LinearizedSystem:
    """Build the 12x12 block matrix and its transformed coordinates.

    ``gamma_mat`` must be symmetric positive definite; its Cholesky factor
    (upper-triangular ``L`` with ``Gamma = L^T L``) defines the coordinate
    change.  Raises if the factorization fails.
    """
    Kmat = np.asarray(Kmat, dtype=float)
    Hmat = np.asarray(Hmat, dtype=float)
    ad_x = np.asarray(ad_x, dtype=float)
    gamma_mat = np.asarray(gamma_mat, dtype=float)
    n = Kmat.shape[0]
    try:
        L = np.linalg.cholesky(gamma_mat).T
    except np.linalg.LinAlgError as exc:
        raise ValueError("bias gain matrix is not positive definite") from exc

    top = np.hstack([-Kmat @ Hmat, -ad_x])
    bottom = np.hstack([gamma_mat @ ad_x.T @ Hmat, np.zeros((n, n))])
    matrix = np.vstack([top, bottom])

    Linv = np.linalg.inv(L)
    A = -L @ Kmat @ Hmat @ Linv
    B = -L @ ad_x @ L.T
    P = Linv.T @ Hmat @ Linv
    P = 0.5 * (P + P.T)
    return LinearizedSystem(
        matrix=matrix, A=A, B=B, P=P, L=L, H=Hmat, K=Kmat, ad_x=ad_x, gamma=gamma_mat
    )


def linearize(
    X: Pose,
    K: GainK,
    gamma: GainGamma,
    cost: InvariantCost,
    omega_body_rate: np.ndarray | None = None,
) -> LinearizedSystem:
    """Linearize the error dynamics at zero error over base point ``X``.

    Samples the gain matrix at zero error (for the "vasconcelos" kind the
    skew block needs the world-frame angular rate, zero by default), takes
    the cost Hessian at the identity, and assembles the blocks.
    """
    if K.kind == "vasconcelos":
        rate = np.zeros(3) if omega_body_rate is None else np.asarray(omega_body_rate, float)
        Kmat = K.matrix(Pose.identity(), rate, np.zeros(3))
    else:
        Kmat = K.matrix()
    Hmat = hessian_at_identity(cost).matrix
    return assemble_linearized(Kmat, Hmat, adjoint_matrix(X), gamma.matrix())


# ---------------------------------------------------------------------------
# persistency of excitation


@dataclass(frozen=True)
class PEReport:
    """Minimum eigenvalue of the excitation integral and its lower bound."""

    min_eigenvalue: float
    bound: float
    window: float
    max_condition: float

    @property
    def satisfied(self) -> bool:
        return self.min_eigenvalue >= self.bound

    def __bool__(self) -> bool:
        return self.satisfied


def pe_check(
    trajectory: list[Pose],
    gamma: GainGamma,
    window: float,
) -> PEReport:
    """Integrate ``B(t) B(t)^T`` over a pose trajectory spanning ``window``.

    ``B(t) = -L Ad_X(t) L^T`` is the coupling block of the transformed
    linearization.  The integral is trapezoidal over uniformly spaced
    samples.  The reported lower bound is

        c0 * window,   c0 = sigma_min(Gamma) sigma_min(L)^2 / max_cond^2,

    with ``max_cond`` the largest condition number of the homogeneous 4x4
    pose matrix along the trajectory.  The bound holds with slack because
    ``sigma_min(Ad_X)^2`` equals ``1 / cond`` exactly for rigid poses.
    """
    if window <= 0.0:
        raise ValueError("window must be positive")
    if len(trajectory) < 2:
        raise ValueError("need at least two trajectory samples")

    gamma_mat = gamma.matrix()
    L = np.linalg.cholesky(gamma_mat).T
    dt = window / (len(trajectory) - 1)

    products = np.empty((len(trajectory), 6, 6))
    max_cond = 0.0
    for idx, X in enumerate(trajectory):
        B = -L @ adjoint_matrix(X) @ L.T
        products[idx] = B @ B.T
        max_cond = max(max_cond, condition_number(X))

    integral = np.trapezoid(products, dx=dt, axis=0)
    integral = 0.5 * (integral + integral.T)
    min_eig = float(np.linalg.eigvalsh(integral)[0])

    sig_gamma = float(np.linalg.eigvalsh(gamma_mat)[0])
    sig_l = float(np.linalg.svd(L, compute_uv=False)[-1])
    c0 = sig_gamma * sig_l**2 / max_cond**2
    return PEReport(
        min_eigenvalue=min_eig,
        bound=c0 * window,
        window=window,
        max_condition=max_cond,
    )


# ---------------------------------------------------------------------------
# convergence-rate fitting


@dataclass(frozen=True)
class FitResult:
    """Least-squares exponential fit of a positive decay trace."""

    slope: float
    r_squared: float
    n_used: int

    @property
    def rate(self) -> float:
        return -self.slope


def fit_rate(
    times: np.ndarray,
    values: np.ndarray,
    floor: float = 1e-10,
) -> FitResult:
    """Fit ``log(values)`` against time over the tail half of the trace.

    Samples at or below ``floor`` (a converged noise plateau) are excluded
    from the fit window.  Requires at least 50 samples and strictly
    positive values.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.ndim != 1:
        raise ValueError("times and values must be 1-d arrays of equal length")
    if times.size < 50:
        raise ValueError("need at least 50 samples to fit a rate")
    if np.any(values <= 0.0):
        raise ValueError("trace must be strictly positive to fit a log-slope")

    start = times.size // 2
    t_tail = times[start:]
    v_tail = values[start:]
    keep = v_tail > floor
    if np.count_nonzero(keep) < 2:
        raise ValueError("tail of the trace sits entirely at the floor")
    t_fit = t_tail[keep]
    v_fit = np.log(v_tail[keep])

    slope, intercept = np.polyfit(t_fit, v_fit, 1)
    predicted = slope * t_fit + intercept
    ss_res = float(np.sum((v_fit - predicted) ** 2))
    ss_tot = float(np.sum((v_fit - np.mean(v_fit)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return FitResult(slope=float(slope), r_squared=r2, n_used=int(t_fit.size))
