"""Tests for error coordinates, Lyapunov diagnostics, linearization, PE,
and rate fitting."""

import numpy as np
import pytest

from se3obs.analysis import (
    AutonomyReport,
    ErrorState,
    FitResult,
    assemble_linearized,
    autonomy_probe,
    compound_distance,
    error,
    error_dynamics_rhs,
    fit_rate,
    linearize,
    lyapunov,
    lyapunov_dot_analytic,
    pe_check,
)
from se3obs.cost import d1_phi_row, direction_cost, landmark_cost, phi_eval
from se3obs.lie_core import (
    AlgebraVec6,
    Pose,
    adjoint_matrix,
    compose,
    condition_number,
    exp_se3,
    frobenius_distance,
    inverse,
    log_se3,
    tangent_to_vec6,
)
from se3obs.observer import (
    GainGamma,
    GainK,
    ObserverState,
    landmark_observer_rhs,
    step,
)
from se3obs.outputs import (
    LandmarkSet,
    Measurement,
    direction_set_from_landmarks,
    measure_landmarks,
)

from conftest import random_pose, random_vec6

DEFAULT_REFS = np.array(
    [
        [0.0, 0.0, 0.0],
        [2.0, 0.0, 0.0],
        [0.0, 2.0, 0.0],
        [0.0, 0.0, 2.0],
    ]
)
LM_COST = landmark_cost(LandmarkSet(DEFAULT_REFS))
DIR_COST = direction_cost(direction_set_from_landmarks(LandmarkSet(DEFAULT_REFS)))
DIAG = GainK(kind="diagonal", k_w=2.0, k_v=2.0)
VASC = GainK(kind="vasconcelos", k_w=2.0, k_v=2.0)
GAMMA = GainGamma(gamma_w=1.0, gamma_v=1.0)


def random_error(rng, angle=1.0, trans=1.0, bias=0.5) -> ErrorState:
    E = random_pose(rng, max_angle=angle, trans_scale=trans)
    btilde = AlgebraVec6(
        rng.uniform(-bias, bias, 3), rng.uniform(-bias, bias, 3)
    )
    return ErrorState(E, btilde)


class TestErrorState:
    def test_exact_estimates_give_zero_error(self, rng):
        X = random_pose(rng)
        b = random_vec6(rng)
        err = error(X, X, b, b)
        assert frobenius_distance(err.E) < 1e-12
        assert err.btilde.norm() < 1e-15
        assert err.is_zero(tol=1e-12)

    def test_right_shift_invariance(self, rng):
        for _ in range(100):
            X, xhat, Z = random_pose(rng), random_pose(rng), random_pose(rng)
            b, bhat = random_vec6(rng), random_vec6(rng)
            e1 = error(X, xhat, b, bhat)
            e2 = error(compose(X, Z), compose(xhat, Z), b, bhat)
            assert np.max(np.abs(e1.E.matrix() - e2.E.matrix())) < 1e-12

    def test_identity_base_recovers_estimate(self, rng):
        xhat = random_pose(rng)
        err = error(Pose.identity(), xhat, AlgebraVec6.zero(), AlgebraVec6.zero())
        assert np.allclose(err.E.matrix(), xhat.matrix(), atol=1e-15)

    def test_compound_distance_components(self):
        E = Pose(np.eye(3), np.array([3.0, 0.0, 4.0]))
        btilde = AlgebraVec6(np.zeros(3), np.array([0.0, 12.0, 0.0]))
        dist = compound_distance(ErrorState(E, btilde))
        assert dist.pose_part == pytest.approx(5.0)
        assert dist.bias_part == pytest.approx(12.0)
        assert float(dist) == pytest.approx(13.0)

    def test_compound_distance_zero_only_at_zero(self, rng):
        zero = ErrorState(Pose.identity(), AlgebraVec6.zero())
        assert float(compound_distance(zero)) == 0.0
        err = random_error(rng)
        assert float(compound_distance(err)) > 0.0


class TestLyapunov:
    def test_zero_at_zero_error(self):
        err = ErrorState(Pose.identity(), AlgebraVec6.zero())
        assert lyapunov(err, GAMMA, LM_COST) == pytest.approx(0.0, abs=1e-15)

    def test_pure_bias_quadratic(self, rng):
        bw = rng.standard_normal(3)
        bv = rng.standard_normal(3)
        gamma = GainGamma(gamma_w=0.5, gamma_v=4.0)
        err = ErrorState(Pose.identity(), AlgebraVec6(bw, bv))
        expected = 0.5 * (bw @ bw / 0.5 + bv @ bv / 4.0)
        assert lyapunov(err, gamma, LM_COST) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("cost", [LM_COST, DIR_COST], ids=["landmark", "direction"])
    def test_matches_direct_sum(self, rng, cost):
        gamma = GainGamma(gamma_w=2.0, gamma_v=0.3)
        for _ in range(50):
            err = random_error(rng)
            got = lyapunov(err, gamma, cost)
            b = err.btilde.as_vec()
            expected = phi_eval(err.E, Measurement(cost.references), cost)
            expected += 0.5 * b @ np.linalg.solve(gamma.matrix(), b)
            assert got == pytest.approx(expected, rel=1e-12, abs=1e-15)
            assert got >= 0.0


class TestLyapunovDot:
    def test_zero_at_zero_error(self, rng):
        X = random_pose(rng)
        y = Measurement(measure_landmarks(X, DEFAULT_REFS))
        val = lyapunov_dot_analytic(X, X, y, DIAG, LM_COST)
        assert abs(val) < 1e-24

    def test_diagonal_quadratic_expansion(self, rng):
        for _ in range(50):
            X, xhat = random_pose(rng), random_pose(rng)
            y = Measurement(measure_landmarks(X, DEFAULT_REFS))
            row = d1_phi_row(xhat, y, LM_COST).row
            expected = -(2.0 * row[:3] @ row[:3] + 2.0 * row[3:] @ row[3:])
            got = lyapunov_dot_analytic(X, xhat, y, DIAG, LM_COST)
            assert got == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("K", [DIAG, VASC], ids=["diagonal", "vasconcelos"])
    def test_never_positive(self, rng, K):
        for _ in range(300):
            X, xhat = random_pose(rng), random_pose(rng)
            y = Measurement(measure_landmarks(X, DEFAULT_REFS))
            row = d1_phi_row(xhat, y, LM_COST).row
            val = lyapunov_dot_analytic(X, xhat, y, K, LM_COST)
            assert val <= 1e-12 * (1.0 + row @ row)

    def test_error_route_matches_measured_route(self, rng):
        for _ in range(200):
            X, xhat = random_pose(rng), random_pose(rng)
            y = Measurement(measure_landmarks(X, DEFAULT_REFS))
            measured = lyapunov_dot_analytic(X, xhat, y, DIAG, LM_COST)
            via_error = lyapunov_dot_analytic(X, xhat, None, DIAG, LM_COST)
            assert measured == pytest.approx(via_error, rel=1e-9, abs=1e-12)

    def test_route_argument_validation(self, rng):
        X = random_pose(rng)
        y = Measurement(measure_landmarks(X, DEFAULT_REFS))
        with pytest.raises(ValueError, match="estimated pose"):
            lyapunov_dot_analytic(X, None, y, DIAG, LM_COST)
        with pytest.raises(ValueError, match="both poses"):
            lyapunov_dot_analytic(X, None, None, DIAG, LM_COST)

    def test_matches_finite_difference_along_run(self, rng):
        u = AlgebraVec6(np.array([0.2, -0.1, 0.3]), np.array([0.1, 0.2, -0.1]))
        b = AlgebraVec6(np.array([0.02, -0.01, 0.03]), np.array([0.1, -0.05, 0.07]))
        u_y = AlgebraVec6.from_vec(u.as_vec() + b.as_vec())
        x0 = random_pose(rng, max_angle=0.5, trans_scale=0.5)
        offset = exp_se3(np.array([0.1, -0.2, 0.15, 0.1, 0.05, -0.1]))
        state = ObserverState(compose(offset, x0), AlgebraVec6.zero())

        dt, n_steps = 1e-3, 400

        def truth_at(t: float) -> Pose:
            return compose(x0, exp_se3(t * u.as_vec()))

        def rhs(t, st):
            y = Measurement(measure_landmarks(truth_at(t), DEFAULT_REFS))
            return landmark_observer_rhs(st, u_y, y, DIAG, GAMMA, LM_COST)

        lyap, ldot = [], []
        for k in range(n_steps + 1):
            t = k * dt
            X = truth_at(t)
            err = error(X, state.xhat, b, state.bhat)
            lyap.append(lyapunov(err, GAMMA, LM_COST))
            y = Measurement(measure_landmarks(X, DEFAULT_REFS))
            ldot.append(lyapunov_dot_analytic(X, state.xhat, y, DIAG, LM_COST))
            state = step(state, rhs, t, dt, method="rk4-mk")

        lyap_arr, ldot_arr = np.array(lyap), np.array(ldot)
        centered = (lyap_arr[2:] - lyap_arr[:-2]) / (2.0 * dt)
        resid = np.abs(centered - ldot_arr[1:-1])
        assert np.max(resid) < 5e-4 * (1.0 + np.max(np.abs(ldot_arr)))
        # the trace itself must be non-increasing for validated gains
        assert np.max(np.diff(lyap_arr)) <= 1e-12 * (1.0 + np.max(lyap_arr))


class TestErrorDynamics:
    def test_zero_at_zero_error(self, rng):
        err = ErrorState(Pose.identity(), AlgebraVec6.zero())
        inc, bdot = error_dynamics_rhs(err, random_pose(rng), DIAG, GAMMA, LM_COST)
        assert np.max(np.abs(inc.rot_rate)) < 1e-12
        assert np.max(np.abs(inc.trans_rate)) < 1e-12
        assert bdot.norm() < 1e-12

    def test_pure_bias_drift_with_zero_gains(self, rng):
        zero_k = GainK(kind="diagonal", k_w=0.0, k_v=0.0)
        zero_g = GainGamma(gamma_w=0.0, gamma_v=0.0)
        for _ in range(50):
            err = random_error(rng)
            X = random_pose(rng)
            inc, bdot = error_dynamics_rhs(err, X, zero_k, zero_g, LM_COST)
            xi = tangent_to_vec6(inc, err.E)
            xhat = compose(err.E, X)
            expected = -adjoint_matrix(xhat) @ err.btilde.as_vec()
            assert np.max(np.abs(xi - expected)) < 1e-12
            assert bdot.norm() == 0.0

    def test_tracks_separately_integrated_pair(self, rng):
        u = AlgebraVec6(np.array([0.3, -0.2, 0.25]), np.array([0.2, 0.1, -0.15]))
        b = AlgebraVec6(np.array([0.02, -0.01, 0.03]), np.array([0.1, -0.05, 0.07]))
        u_y = AlgebraVec6.from_vec(u.as_vec() + b.as_vec())
        x0 = random_pose(rng, max_angle=0.5, trans_scale=0.5)
        offset = exp_se3(np.array([0.15, -0.1, 0.2, 0.2, -0.1, 0.1]))
        xhat0 = compose(offset, x0)

        def truth_at(t: float) -> Pose:
            return compose(x0, exp_se3(t * u.as_vec()))

        def observer_rhs(t, st):
            y = Measurement(measure_landmarks(truth_at(t), DEFAULT_REFS))
            return landmark_observer_rhs(st, u_y, y, DIAG, GAMMA, LM_COST)

        def error_rhs(t, st):
            err = ErrorState(st.xhat, st.bhat)
            return error_dynamics_rhs(err, truth_at(t), DIAG, GAMMA, LM_COST)

        dt, n_steps = 1e-3, 1000
        obs = ObserverState(xhat0, AlgebraVec6.zero())
        err_state = ObserverState(
            compose(xhat0, inverse(x0)),
            AlgebraVec6.from_vec(-b.as_vec()),
        )
        for k in range(n_steps):
            t = k * dt
            obs = step(obs, observer_rhs, t, dt, method="rk4-mk")
            err_state = step(err_state, error_rhs, t, dt, method="rk4-mk")

        X_end = truth_at(n_steps * dt)
        direct = error(X_end, obs.xhat, b, obs.bhat)
        gap_E = np.max(np.abs(direct.E.matrix() - err_state.xhat.matrix()))
        gap_b = np.max(np.abs(direct.btilde.as_vec() - err_state.bhat.as_vec()))
        assert gap_E < 1e-6
        assert gap_b < 1e-6


class TestAutonomyProbe:
    def test_translation_group_is_autonomous(self, rng):
        err = ErrorState(
            Pose(np.eye(3), rng.uniform(-1, 1, 3)),
            AlgebraVec6(np.zeros(3), rng.uniform(-1, 1, 3)),
        )
        bases = [Pose(np.eye(3), rng.uniform(-5, 5, 3)) for _ in range(6)]
        report = autonomy_probe("r3", err, bases, DIAG, GAMMA, LM_COST)
        assert report.group == "r3"
        assert report.max_discrepancy < 1e-12

    def test_rigid_group_depends_on_base_point(self, rng):
        btilde = AlgebraVec6(np.array([0.2, -0.1, 0.15]), np.array([0.1, 0.2, -0.1]))
        err = ErrorState(random_pose(rng, max_angle=0.5), btilde)
        quarter_turn = Pose(
            np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]),
            np.zeros(3),
        )
        bases = [random_pose(rng), None]
        bases[1] = compose(bases[0], quarter_turn)
        report = autonomy_probe("se3", err, bases, DIAG, GAMMA, LM_COST)
        assert report.max_discrepancy > 0.1 * btilde.norm()

    def test_bias_free_group_part_is_base_independent(self, rng):
        err = ErrorState(random_pose(rng, max_angle=0.8), AlgebraVec6.zero())
        bases = [random_pose(rng) for _ in range(5)]
        report = autonomy_probe("se3", err, bases, DIAG, GAMMA, LM_COST)
        assert report.pose_discrepancy < 1e-10
        assert report.bias_discrepancy > 1e-6

    def test_rejects_bad_inputs(self, rng):
        err = random_error(rng)
        bases = [random_pose(rng), random_pose(rng)]
        with pytest.raises(ValueError, match="group"):
            autonomy_probe("so3", err, bases, DIAG, GAMMA, LM_COST)
        with pytest.raises(ValueError, match="two"):
            autonomy_probe("se3", err, bases[:1], DIAG, GAMMA, LM_COST)


class TestLinearize:
    def test_identity_blocks_analytic_eigenvalues(self):
        eye = np.eye(6)
        sys6 = assemble_linearized(eye, eye, eye, eye)
        expected = np.block([[-eye, -eye], [eye, np.zeros((6, 6))]])
        assert np.allclose(sys6.matrix, expected, atol=1e-15)
        eigs = np.sort_complex(sys6.eigenvalues())
        expected_eigs = np.sort_complex(
            np.array([-0.5 + 1j * np.sqrt(3) / 2] * 6 + [-0.5 - 1j * np.sqrt(3) / 2] * 6)
        )
        assert np.max(np.abs(eigs - expected_eigs)) < 1e-12
        assert sys6.is_hurwitz()

    def test_block_layout_and_symmetry(self, rng):
        X = random_pose(rng)
        sys12 = linearize(X, DIAG, GAMMA, LM_COST)
        assert sys12.matrix.shape == (12, 12)
        assert np.max(np.abs(sys12.matrix[6:, 6:])) == 0.0
        assert np.max(np.abs(sys12.P - sys12.P.T)) < 1e-12
        assert np.all(np.linalg.eigvalsh(sys12.P) > 0.0)

    def test_transformed_blocks_against_factor_identities(self, rng):
        gamma = GainGamma(gamma_w=0.7, gamma_v=2.5)
        X = random_pose(rng)
        sys12 = linearize(X, DIAG, gamma, LM_COST)
        L = sys12.L
        assert np.allclose(L.T @ L, gamma.matrix(), atol=1e-12)
        Linv = np.linalg.inv(L)
        assert np.allclose(sys12.A, -L @ sys12.K @ sys12.H @ Linv, atol=1e-12)
        assert np.allclose(sys12.B, -L @ sys12.ad_x @ L.T, atol=1e-12)
        assert np.allclose(sys12.P, Linv.T @ sys12.H @ Linv, atol=1e-12)

    def test_q_matrix_is_spd(self, rng):
        X = random_pose(rng)
        sys12 = linearize(X, DIAG, GainGamma(0.8, 1.7), LM_COST)
        Q = sys12.q_matrix()
        L, K, H = sys12.L, sys12.K, sys12.H
        Linv = np.linalg.inv(L)
        expected = Linv.T @ H @ (K + K.T) @ H @ Linv
        assert np.allclose(Q, expected, atol=1e-10)
        assert np.all(np.linalg.eigvalsh(0.5 * (Q + Q.T)) > 0.0)

    @pytest.mark.parametrize("kind", ["diagonal", "vasconcelos"])
    def test_matches_numeric_jacobian_at_zero_error(self, rng, kind):
        if kind == "diagonal":
            K, cost, rate = DIAG, LM_COST, None
        else:
            K, cost, rate = VASC, DIR_COST, np.array([0.3, -0.2, 0.4])
        X = random_pose(rng, max_angle=1.0, trans_scale=1.0)
        sys12 = linearize(X, K, GAMMA, cost, omega_body_rate=rate)

        h = 1e-5
        numeric = np.zeros((12, 12))
        for col in range(12):
            delta = np.zeros(12)
            delta[col] = h
            plus = _rhs_coords(delta, X, K, GAMMA, cost, rate)
            minus = _rhs_coords(-delta, X, K, GAMMA, cost, rate)
            numeric[:, col] = (plus - minus) / (2.0 * h)
        assert np.max(np.abs(numeric - sys12.matrix)) < 1e-5

    def test_hurwitz_at_representative_pose(self, rng):
        X = random_pose(rng, max_angle=1.5, trans_scale=2.0)
        sys12 = linearize(X, DIAG, GAMMA, LM_COST)
        assert sys12.is_hurwitz()

    def test_rejects_indefinite_bias_gain(self):
        eye = np.eye(6)
        bad = np.diag([1.0, 1.0, 1.0, 1.0, 1.0, -1.0])
        with pytest.raises(ValueError, match="positive definite"):
            assemble_linearized(eye, eye, eye, bad)

    def test_small_perturbations_track_linear_model(self, rng):
        scipy_linalg = pytest.importorskip("scipy.linalg")
        X = random_pose(rng, max_angle=0.8, trans_scale=1.0)
        sys12 = linearize(X, DIAG, GAMMA, LM_COST)
        eigs = sys12.eigenvalues()
        tau = 1.0 / np.min(np.abs(eigs.real))

        x0 = rng.standard_normal(12)
        x0 *= 1e-4 / np.linalg.norm(x0)
        state = ObserverState(
            exp_se3(x0[:6]), AlgebraVec6.from_vec(x0[6:])
        )

        def rhs(t, st):
            err = ErrorState(st.xhat, st.bhat)
            return error_dynamics_rhs(err, X, DIAG, GAMMA, LM_COST)

        n_steps = 200
        dt = tau / n_steps
        for k in range(n_steps):
            state = step(state, rhs, k * dt, dt, method="rk4-mk")

        nonlinear = np.concatenate(
            [log_se3(state.xhat).as_vec(), state.bhat.as_vec()]
        )
        linear = scipy_linalg.expm(tau * sys12.matrix) @ x0
        divergence = np.linalg.norm(nonlinear - linear) / np.linalg.norm(linear)
        assert divergence < 1e-2


class TestPECheck:
    def test_identity_trajectory_exact_integral(self):
        gamma = GainGamma(gamma_w=1.7, gamma_v=1.7)
        trajectory = [Pose.identity()] * 11
        report = pe_check(trajectory, gamma, window=2.5)
        expected = 1.7**2 * 2.5
        assert report.min_eigenvalue == pytest.approx(expected, rel=1e-12)
        assert report.bound == pytest.approx(expected, rel=1e-12)
        assert report.satisfied
        assert bool(report)

    def test_identity_trajectory_scales_linearly_in_window(self):
        gamma = GainGamma(1.0, 1.0)
        trajectory = [Pose.identity()] * 21
        full = pe_check(trajectory, gamma, window=1.0)
        half = pe_check(trajectory, gamma, window=0.5)
        assert half.min_eigenvalue == pytest.approx(0.5 * full.min_eigenvalue, rel=1e-12)

    def test_adjoint_conditioning_identity(self, rng):
        # smallest singular value of the 6x6 adjoint squared equals the
        # reciprocal condition number of the 4x4 pose matrix
        for _ in range(200):
            X = random_pose(rng, max_angle=2.5, trans_scale=4.0)
            smin = np.linalg.svd(adjoint_matrix(X), compute_uv=False)[-1]
            assert smin**2 * condition_number(X) == pytest.approx(1.0, rel=1e-9)

    def test_moving_trajectory_meets_bound(self, rng):
        gamma = GainGamma(gamma_w=1.0, gamma_v=1.0)
        u = np.array([0.3, -0.2, 0.4, 0.2, 0.1, -0.3])
        x0 = random_pose(rng, max_angle=1.0, trans_scale=1.5)
        times = np.linspace(0.0, 1.0, 101)
        trajectory = [compose(x0, exp_se3(t * u)) for t in times]
        report = pe_check(trajectory, gamma, window=1.0)
        assert report.min_eigenvalue >= report.bound - 1e-9
        assert report.max_condition >= 1.0

    def test_rejects_degenerate_inputs(self):
        gamma = GainGamma(1.0, 1.0)
        with pytest.raises(ValueError, match="window"):
            pe_check([Pose.identity()] * 3, gamma, window=0.0)
        with pytest.raises(ValueError, match="samples"):
            pe_check([Pose.identity()], gamma, window=1.0)


class TestFitRate:
    def test_exact_exponential(self):
        t = np.linspace(0.0, 5.0, 500)
        fit = fit_rate(t, np.exp(-2.0 * t))
        assert fit.rate == pytest.approx(2.0, abs=1e-10)
        assert fit.slope == pytest.approx(-2.0, abs=1e-10)
        assert fit.r_squared > 0.999

    def test_algebraic_decay_scores_lower(self):
        t = np.arange(0.0, 60.0, 0.01)
        fit = fit_rate(t, 1.0 / (1.0 + t))
        assert fit.rate > 0.0
        assert 0.98 < fit.r_squared < 0.999

    def test_floor_excludes_converged_plateau(self):
        t = np.linspace(0.0, 8.0, 2000)
        values = np.maximum(np.exp(-5.0 * t), 1e-12)
        fit = fit_rate(t, values)
        assert 4.5 < fit.rate < 5.5
        assert fit.n_used < t.size // 4

    def test_rejects_short_or_nonpositive_traces(self):
        t = np.linspace(0.0, 1.0, 49)
        with pytest.raises(ValueError, match="50"):
            fit_rate(t, np.exp(-t))
        t = np.linspace(0.0, 1.0, 100)
        bad = np.exp(-t)
        bad[60] = 0.0
        with pytest.raises(ValueError, match="positive"):
            fit_rate(t, bad)
        with pytest.raises(ValueError, match="equal length"):
            fit_rate(t, np.exp(-t[:-1]))

    def test_rejects_all_floor_tail(self):
        t = np.linspace(0.0, 1.0, 100)
        values = np.full(100, 1e-13)
        values[:10] = 1.0
        with pytest.raises(ValueError, match="floor"):
            fit_rate(t, values)


def _rhs_coords(delta, X, K, gamma, cost, rate):
    """Stacked right-trivialized coordinates of the error dynamics at a
    perturbed error state, for numeric differentiation."""
    err = ErrorState(exp_se3(delta[:6]), AlgebraVec6.from_vec(delta[6:]))
    inc, bdot = error_dynamics_rhs(err, X, K, gamma, cost, omega_body_rate=rate)
    return np.concatenate([tangent_to_vec6(inc, err.E), bdot.as_vec()])
