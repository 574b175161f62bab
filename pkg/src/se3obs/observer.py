"""Pose observers on SE(3) with input-bias estimation.

The observer state is an estimated pose plus an estimated input bias.
Its dynamics combine a copy of the plant driven by the bias-corrected
input measurement with a gradient-like innovation: the differential of an
invariant cost, mapped through a gain, is subtracted from the copy term,
while the bias estimate integrates the cost differential pulled back to
the algebra through the left-translation map and a positive gain.

Two concrete flavors are provided:

* :func:`landmark_observer_rhs` -- landmark outputs, diagonal gain;
* :func:`direction_observer_rhs` -- transformed direction outputs, with a
  velocity-coupled skew augmentation on the translational gain block
  (kind ``"vasconcelos"``).

Both are written in closed form (no 6x6 products). The generic assembly
``gain matrix x differential row`` lives in :func:`innovation_group` /
:func:`innovation_bias`; equality of the two routes is part of the test
suite and must never be collapsed into a single code path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .cost import InvariantCost, d1_phi_row
from .lie_core import (
    AlgebraVec6,
    Pose,
    TangentIncrement,
    compose,
    exp_se3,
    hat3,
    se3_bracket,
    tangent_to_vec6,
    vec6_to_tangent,
)
from .outputs import Measurement

RhsFn = Callable[[float, "ObserverState"], Tuple[TangentIncrement, AlgebraVec6]]


@dataclass
class ObserverState:
    xhat: Pose
    bhat: AlgebraVec6

    def copy(self) -> "ObserverState":
        return ObserverState(
            Pose(self.xhat.R.copy(), self.xhat.p.copy()),
            AlgebraVec6(self.bhat.omega.copy(), self.bhat.vel.copy()),
        )


@dataclass
class GainK:
    """Gain acting on the cost differential row.

    ``kind`` is ``"diagonal"`` (blocks ``k_w I`` and ``k_v I``) or
    ``"vasconcelos"`` (the translational block gains an additional skew
    term built from the current rotated bias-corrected angular rate, so
    the symmetric part stays ``diag(k_w I, k_v I)``).
    """

    kind: str = "diagonal"
    k_w: float = 1.0
    k_v: float = 1.0

    def matrix(
        self,
        xhat: Pose | None = None,
        omega_y: np.ndarray | None = None,
        bhat_w: np.ndarray | None = None,
    ) -> np.ndarray:
        K = np.zeros((6, 6))
        K[:3, :3] = self.k_w * np.eye(3)
        K[3:, 3:] = self.k_v * np.eye(3)
        if self.kind == "vasconcelos":
            if xhat is None or omega_y is None or bhat_w is None:
                raise ValueError(
                    "the vasconcelos gain needs the current estimate and angular input"
                )
            K[3:, 3:] += hat3(xhat.R @ (np.asarray(omega_y) - np.asarray(bhat_w)))
        elif self.kind != "diagonal":
            raise ValueError(f"unknown gain kind {self.kind!r}")
        return K

    def symmetric_part(self) -> np.ndarray:
        """Symmetric part of the gain matrix (state independent: the skew
        augmentation of the vasconcelos kind cancels)."""
        S = np.zeros((6, 6))
        S[:3, :3] = self.k_w * np.eye(3)
        S[3:, 3:] = self.k_v * np.eye(3)
        return S


@dataclass
class GainGamma:
    """Diagonal symmetric positive definite bias-adaptation gain."""

    gamma_w: float = 1.0
    gamma_v: float = 1.0

    def matrix(self) -> np.ndarray:
        return np.diag([self.gamma_w] * 3 + [self.gamma_v] * 3)

    def inverse_quadratic(self, b: np.ndarray) -> float:
        """Quadratic form ``b^T Gamma^-1 b``."""
        b = np.asarray(b, dtype=float).reshape(6)
        return float(b[:3] @ b[:3] / self.gamma_w + b[3:] @ b[3:] / self.gamma_v)


@dataclass
class GainReport:
    k_lower: float
    k_upper: float
    gamma_eigenvalues: np.ndarray


def validate_gains(
    K: GainK,
    gamma: GainGamma,
    rng: np.random.Generator | None = None,
    samples: int = 50,
) -> GainReport:
    """Check uniform positive definiteness of the symmetric part of the
    gain over sampled states, and positive definiteness of the bias gain.

    Raises ``ValueError`` with the offending sample on violation; returns
    the observed symmetric-part eigenvalue bounds otherwise.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    k_lower, k_upper = math.inf, -math.inf
    for _ in range(samples):
        xhat = Pose(
            exp_se3(np.concatenate([rng.normal(size=3), np.zeros(3)])).R,
            3.0 * rng.normal(size=3),
        )
        omega_y = rng.normal(size=3)
        bhat_w = rng.normal(size=3)
        if K.kind == "vasconcelos":
            M = K.matrix(xhat, omega_y, bhat_w)
        else:
            M = K.matrix()
        eigs = np.linalg.eigvalsh(0.5 * (M + M.T))
        if eigs[0] <= 0:
            raise ValueError(
                f"gain symmetric part is not positive definite (min eigenvalue "
                f"{eigs[0]:.3e}) at sample xhat={xhat}, omega_y={omega_y}, bhat_w={bhat_w}"
            )
        k_lower = min(k_lower, float(eigs[0]))
        k_upper = max(k_upper, float(eigs[-1]))
    gamma_eigs = np.linalg.eigvalsh(gamma.matrix())
    if gamma_eigs[0] <= 0:
        raise ValueError(
            f"bias gain is not positive definite (min eigenvalue {gamma_eigs[0]:.3e})"
        )
    return GainReport(k_lower, k_upper, gamma_eigs)


def _require_positive_gain(K: GainK) -> None:
    if not (K.k_w > 0 and K.k_v > 0):
        raise ValueError(f"gain scalars must be positive, got k_w={K.k_w}, k_v={K.k_v}")


def innovation_group(
    xhat: Pose,
    y: Measurement,
    K: GainK,
    cost: InvariantCost,
    omega_y: np.ndarray | None = None,
    bhat_w: np.ndarray | None = None,
) -> TangentIncrement:
    """Generic innovation: gain matrix times differential row, mapped into
    the tangent space at the estimate.

    This is the term the observer subtracts from its copy dynamics.
    """
    _require_positive_gain(K)
    row = d1_phi_row(xhat, y, cost).row
    if K.kind == "vasconcelos":
        w = K.matrix(xhat, omega_y, bhat_w) @ row
    else:
        w = K.matrix() @ row
    return vec6_to_tangent(w, xhat)


def innovation_bias(
    xhat: Pose, y: Measurement, gamma: GainGamma, cost: InvariantCost
) -> AlgebraVec6:
    """Generic bias-estimator right-hand side: the differential row pulled
    back through the left-translation map, scaled by the bias gain."""
    row = d1_phi_row(xhat, y, cost).row
    R, p = xhat.R, xhat.p
    # transpose of [[R, 0], [hat3(p) R, R]] applied to the row
    bw = gamma.gamma_w * (R.T @ (row[:3] - np.cross(p, row[3:])))
    bv = gamma.gamma_v * (R.T @ row[3:])
    return AlgebraVec6(bw, bv)


def _copy_term(xhat: Pose, u_y: np.ndarray, bhat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Plant-copy rates: rotation rate matrix and translation rate."""
    w_body = u_y[:3] - bhat[:3]
    v_body = u_y[3:] - bhat[3:]
    return xhat.R @ hat3(w_body), xhat.R @ v_body


def landmark_observer_rhs(
    state: ObserverState,
    u_y: AlgebraVec6,
    y: Measurement,
    K: GainK,
    gamma: GainGamma,
    cost: InvariantCost,
) -> tuple[TangentIncrement, AlgebraVec6]:
    """Closed-form right-hand side of the landmark observer.

    With predictions ``v_i = Rhat y_i + phat`` and residuals
    ``a_i = v_i - ref_i``:

    * rotation:    ``Rhat (W_y - bhat_w)x  -  (k_w m)x Rhat``
    * translation: ``Rhat (V_y - bhat_v)   -  (k_w m) x phat  -  k_v s``
    * bias w:      ``gamma_w sum_i k_i (Rhat^T (ref_i - phat)) x y_i``
    * bias v:      ``gamma_v sum_i k_i Rhat^T a_i``

    where ``m = sum_i k_i v_i x a_i`` and ``s = sum_i k_i a_i``. The ODE is
    well defined regardless of reference-set observability (convergence
    guarantees are void without it).
    """
    if cost.kind != "landmark":
        raise ValueError("landmark observer needs a landmark cost")
    if K.kind != "diagonal":
        raise ValueError("landmark observer uses the diagonal gain kind")
    _require_positive_gain(K)
    xhat, bhat = state.xhat, state.bhat.as_vec()
    uy = u_y.as_vec() if isinstance(u_y, AlgebraVec6) else np.asarray(u_y, dtype=float)
    vals = np.atleast_2d(y.values)
    k = cost.weights
    refs = cost.references
    R, p = xhat.R, xhat.p

    pred = vals @ R.T + p
    resid = pred - refs
    m = np.sum(k[:, None] * np.cross(pred, resid), axis=0)
    s = np.sum(k[:, None] * resid, axis=0)
    w_w = K.k_w * m
    w_v = K.k_v * s

    rot_copy, trans_copy = _copy_term(xhat, uy, bhat)
    rot_rate = rot_copy - hat3(w_w) @ R
    trans_rate = trans_copy - np.cross(w_w, p) - w_v

    bw = gamma.gamma_w * np.sum(
        k[:, None] * np.cross((refs - p) @ R, vals), axis=0
    )
    bv = gamma.gamma_v * (R.T @ s)
    return TangentIncrement(rot_rate, trans_rate), AlgebraVec6(bw, bv)


def direction_observer_rhs(
    state: ObserverState,
    u_y: AlgebraVec6,
    z: Measurement,
    K: GainK,
    gamma: GainGamma,
    cost: InvariantCost,
) -> tuple[TangentIncrement, AlgebraVec6]:
    """Closed-form right-hand side of the transformed-direction observer.

    Predictions are ``a_j = Rhat z_j`` for the plain directions and
    ``a_n = Rhat z_n - phat`` for the distinguished last output; residuals
    ``b_j = a_j - ref_j``. With ``m = sum_j k_j a_j x b_j``:

    * rotation:    ``Rhat (W_y - bhat_w)x - (k_w m)x Rhat``
    * translation: ``Rhat (V_y - bhat_v) - (k_w m) x phat
                     + k_n (k_v I + (Rhat (W_y - bhat_w))x) b_n``
    * bias w:      ``gamma_w (sum_j k_j (Rhat^T ref_j) x z_j
                     + k_n (Rhat^T phat) x z_n)`` (sum over all outputs;
                     at zero estimation error the two ``z_n`` terms cancel)
    * bias v:      ``-gamma_v k_n Rhat^T b_n``

    The gain on the translational block is the ``"vasconcelos"`` kind:
    diagonal plus a skew term, whose symmetric part stays ``k_v I``.
    """
    if cost.kind != "direction":
        raise ValueError("direction observer needs a direction cost")
    _require_positive_gain(K)
    if K.kind != "vasconcelos":
        raise ValueError("direction observer uses the vasconcelos gain kind")
    xhat, bhat = state.xhat, state.bhat.as_vec()
    uy = u_y.as_vec() if isinstance(u_y, AlgebraVec6) else np.asarray(u_y, dtype=float)
    vals = np.atleast_2d(z.values)
    k = cost.weights
    refs = cost.references
    kn = k[-1]
    R, p = xhat.R, xhat.p

    pred = vals @ R.T
    pred[-1] -= p
    resid = pred - refs
    m = np.sum(k[:, None] * np.cross(pred, resid), axis=0)
    w_w = K.k_w * m
    rotated_rate = R @ (uy[:3] - bhat[:3])
    # gain row for the translation block: (k_v I + rotated_rate x) (-k_n b_n)
    w_v = -kn * (K.k_v * resid[-1] + np.cross(rotated_rate, resid[-1]))

    rot_copy, trans_copy = _copy_term(xhat, uy, bhat)
    rot_rate = rot_copy - hat3(w_w) @ R
    trans_rate = trans_copy - np.cross(w_w, p) - w_v

    bw = gamma.gamma_w * (
        np.sum(k[:, None] * np.cross(refs @ R, vals), axis=0)
        + kn * np.cross(R.T @ p, vals[-1])
    )
    bv = -gamma.gamma_v * kn * (R.T @ resid[-1])
    return TangentIncrement(rot_rate, trans_rate), AlgebraVec6(bw, bv)


def assemble_rhs_generic(
    state: ObserverState,
    u_y: AlgebraVec6,
    y: Measurement,
    K: GainK,
    gamma: GainGamma,
    cost: InvariantCost,
) -> tuple[TangentIncrement, AlgebraVec6]:
    """Observer right-hand side via the generic matrix assembly.

    Copy term minus :func:`innovation_group`, with :func:`innovation_bias`
    for the bias estimate. Kept as an independent route for two-path
    verification against the closed forms.
    """
    xhat, bhat = state.xhat, state.bhat.as_vec()
    uy = u_y.as_vec() if isinstance(u_y, AlgebraVec6) else np.asarray(u_y, dtype=float)
    inc = innovation_group(xhat, y, K, cost, omega_y=uy[:3], bhat_w=bhat[:3])
    rot_copy, trans_copy = _copy_term(xhat, uy, bhat)
    tangent = TangentIncrement(rot_copy - inc.rot_rate, trans_copy - inc.trans_rate)
    return tangent, innovation_bias(xhat, y, gamma, cost)


def _dexpinv_rt(sigma: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Right-trivialized inverse differential of exp, truncated to the
    commutator order sufficient for fourth-order stepping."""
    b1 = se3_bracket(sigma, xi)
    return xi - 0.5 * b1 + se3_bracket(sigma, b1) / 12.0


def step(
    state: ObserverState,
    rhs: RhsFn,
    t: float,
    dt: float,
    method: str = "lie-euler",
) -> ObserverState:
    """Advance the observer one step while staying on the group.

    ``rhs(t, state)`` returns the tangent increment at the current
    estimate and the bias rate. ``lie-euler`` applies the exponential of
    the right-trivialized rate once; ``rk4-mk`` runs a four-stage
    Munthe-Kaas update in the algebra with the same retraction. Raises
    ``ValueError`` on a non-finite right-hand side.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")

    def eval_coords(time: float, st: ObserverState) -> tuple[np.ndarray, np.ndarray]:
        inc, bdot = rhs(time, st)
        bd = bdot.as_vec()
        if not (
            np.all(np.isfinite(inc.rot_rate))
            and np.all(np.isfinite(inc.trans_rate))
            and np.all(np.isfinite(bd))
        ):
            raise ValueError(f"non-finite observer right-hand side at t={time}")
        xi = tangent_to_vec6(inc, st.xhat)
        return xi, bd

    x0, b0 = state.xhat, state.bhat.as_vec()

    if method == "lie-euler":
        xi, bd = eval_coords(t, state)
        xhat = compose(exp_se3(dt * xi), x0)
        return ObserverState(xhat, AlgebraVec6.from_vec(b0 + dt * bd))

    if method != "rk4-mk":
        raise ValueError(f"unknown stepping method {method!r}")

    half = 0.5 * dt
    xi1, bd1 = eval_coords(t, state)
    k1 = xi1  # dexpinv at sigma = 0 is the identity

    sigma2 = half * k1
    st2 = ObserverState(compose(exp_se3(sigma2), x0), AlgebraVec6.from_vec(b0 + half * bd1))
    xi2, bd2 = eval_coords(t + half, st2)
    k2 = _dexpinv_rt(sigma2, xi2)

    sigma3 = half * k2
    st3 = ObserverState(compose(exp_se3(sigma3), x0), AlgebraVec6.from_vec(b0 + half * bd2))
    xi3, bd3 = eval_coords(t + half, st3)
    k3 = _dexpinv_rt(sigma3, xi3)

    sigma4 = dt * k3
    st4 = ObserverState(compose(exp_se3(sigma4), x0), AlgebraVec6.from_vec(b0 + dt * bd3))
    xi4, bd4 = eval_coords(t + dt, st4)
    k4 = _dexpinv_rt(sigma4, xi4)

    sigma = dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    bnew = b0 + dt / 6.0 * (bd1 + 2.0 * bd2 + 2.0 * bd3 + bd4)
    return ObserverState(compose(exp_se3(sigma), x0), AlgebraVec6.from_vec(bnew))
