"""Command-line entry points: closed-loop runs and self-diagnostics.

``se3obs run`` executes a configured scenario and writes the trace CSV
(optionally with an SVG plot rendered from that CSV).  The remaining
subcommands print ``[PASS]``/``[FAIL]`` lines for the package's internal
identities — gain and scene validity (``check``), the invariance and
derivative identities (``lemmas``), base-trajectory (in)dependence of the
error dynamics (``autonomy``), the linearized error system
(``linearize``), and a convergence-rate sweep over randomized initial
conditions (``sweep``).  The exit status is nonzero when any line fails.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    ErrorState,
    autonomy_probe,
    error_dynamics_rhs,
    linearize,
)
from .cost import (
    InvariantCost,
    d1_phi_fd,
    d1_phi_row,
    hessian_at_identity,
    lemma1_check,
)
from .lie_core import (
    AlgebraVec6,
    Pose,
    exp_se3,
    exp_so3,
    tangent_to_vec6,
)
from .observer import (
    GainGamma,
    GainK,
    ObserverState,
    assemble_rhs_generic,
    direction_observer_rhs,
    landmark_observer_rhs,
    validate_gains,
)
from .outputs import Measurement, z_transform
from .simulate import (
    Scenario,
    default_scenario,
    run,
    scenario_from_dict,
    sweep,
    write_csv,
)

__all__ = ["main"]


class _CheckLog:
    """Collects pass/fail lines and the resulting exit status."""

    def __init__(self) -> None:
        self.failures = 0

    def record(self, ok: bool, name: str, detail: str) -> None:
        tag = "PASS" if ok else "FAIL"
        print(f"[{tag}] {name}: {detail}")
        if not ok:
            self.failures += 1

    def exit_code(self) -> int:
        return 0 if self.failures == 0 else 1


def _load_scenario(config_path: str | None) -> Scenario:
    if config_path is None:
        return default_scenario()
    with open(config_path) as f:
        return scenario_from_dict(json.load(f))


def _random_pose(rng: np.random.Generator) -> Pose:
    w = rng.normal(size=3)
    w *= rng.uniform(0.0, 2.5) / np.linalg.norm(w)
    return Pose(exp_so3(w), 2.0 * rng.normal(size=3))


# ---------------------------------------------------------------------------
# run


def _emit_plot(csv_path: Path) -> Path:
    """Render d(E), bias errors (log scale), and L from the CSV itself."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = np.genfromtxt(csv_path, delimiter=",", names=True)
    svg_path = csv_path.with_suffix(".svg")

    fig, (ax_err, ax_lyap) = plt.subplots(
        2, 1, figsize=(8.0, 7.0), sharex=True, constrained_layout=True
    )
    ax_err.semilogy(data["t"], data["dE"], label="d(E)")
    ax_err.semilogy(data["t"], data["btilde_w"], label="|btilde_w|")
    ax_err.semilogy(data["t"], data["btilde_v"], label="|btilde_v|")
    ax_err.set_ylabel("error (log)")
    ax_err.legend(loc="upper right")
    ax_err.grid(True, which="both", alpha=0.3)

    ax_lyap.plot(data["t"], data["lyap"], color="tab:red")
    ax_lyap.set_xlabel("t [s]")
    ax_lyap.set_ylabel("L")
    ax_lyap.grid(True, alpha=0.3)

    fig.savefig(svg_path, format="svg")
    plt.close(fig)
    return svg_path


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args.config)
    trace, summary = run(scenario)
    out_path = Path(args.out)
    write_csv(trace, out_path)

    print(f"wrote {out_path} ({len(trace)} rows)")
    print(f"observer            : {summary.observer}")
    print(f"final d(E)          : {summary.final_dE:.6e}")
    print(
        f"final bias error    : {summary.final_btilde_w:.6e} (w), "
        f"{summary.final_btilde_v:.6e} (v)"
    )
    if summary.fit is not None:
        print(
            f"fitted decay rate   : {summary.fit.rate:.4f} "
            f"(r^2 = {summary.fit.r_squared:.5f}, tail n = {summary.fit.n_used})"
        )
    else:
        print("fitted decay rate   : unavailable (trace at the floor)")
    print(
        f"lyapunov violations : {summary.lyap_violations} "
        f"(observed C = {summary.c_observed:.3e})"
    )
    print(f"reference set       : {'observable' if summary.observable else 'NOT observable'}")
    print(
        f"observed bounds     : max |p| = {summary.max_translation:.3f} m, "
        f"max cond(X) = {summary.max_condition:.3f}"
    )
    print(f"wall time           : {summary.wall_time:.2f} s")
    if summary.aborted:
        print(
            f"ABORTED after {summary.n_steps} steps: the state left the "
            "finite range; trace truncated to the last good step",
            file=sys.stderr,
        )
        return 1
    if args.plot:
        print(f"wrote {_emit_plot(out_path)}")
    return 0


# ---------------------------------------------------------------------------
# check


def _cmd_check(args: argparse.Namespace) -> int:
    log = _CheckLog()
    try:
        scenario = _load_scenario(args.config)
    except (ValueError, KeyError) as exc:
        log.record(False, "scenario", str(exc))
        return log.exit_code()
    log.record(
        True,
        "scenario",
        f"{scenario.observer} observer, {scenario.n_steps} steps of dt = {scenario.dt}",
    )

    K = scenario.gains.gain_k(scenario.observer)
    gamma = scenario.gains.gain_gamma()
    try:
        report = validate_gains(K, gamma)
        log.record(
            True,
            "gains",
            f"symmetric part in [{report.k_lower:.3f}, {report.k_upper:.3f}], "
            f"bias gain eigenvalues {report.gamma_eigenvalues}",
        )
    except ValueError as exc:
        log.record(False, "gains", str(exc))

    try:
        cost = scenario.build_cost()
    except ValueError as exc:
        log.record(False, "cost", str(exc))
        return log.exit_code()
    log.record(
        cost.observable,
        "observability",
        f"{cost.kind} reference set with {len(cost.references)} outputs",
    )

    hess = hessian_at_identity(cost)
    lam = hess.eigenvalues
    ok = lam[0] > 1e-6 * lam[-1]
    log.record(
        ok,
        "cost positivity",
        f"hessian eigenvalues in [{lam[0]:.3e}, {lam[-1]:.3e}]",
    )
    return log.exit_code()


# ---------------------------------------------------------------------------
# lemmas


def _sample_cost_state(
    rng: np.random.Generator, cost: InvariantCost, z_mode: bool
) -> tuple[Pose, Pose, Measurement]:
    """Random truth/estimate pair with the matching measurement."""
    X, xhat = _random_pose(rng), _random_pose(rng)
    if z_mode:
        y = (LEMMA_LANDMARKS - X.p) @ X.R
        meas = z_transform(Measurement(y), np.eye(len(LEMMA_LANDMARKS) - 1))
    else:
        meas = Measurement((cost.references - X.p) @ X.R)
    return X, xhat, meas


LEMMA_LANDMARKS = np.array(
    [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]]
)


def _cmd_lemmas(args: argparse.Namespace) -> int:
    log = _CheckLog()
    rng = np.random.default_rng(20240817)
    n = args.samples

    costs = {
        False: default_scenario("md").build_cost(),
        True: default_scenario("vasconcelos").build_cost(),
    }

    # invariance of the differential row under right shifts of the state
    worst = 0.0
    for z_mode, cost in costs.items():
        for _ in range(n // 2):
            X, xhat, meas = _sample_cost_state(rng, cost, z_mode)
            worst = max(worst, lemma1_check(X, xhat, meas, cost))
    log.record(
        worst < 1e-9,
        "row shift-invariance",
        f"max residual {worst:.3e} over {n} state pairs (tol 1e-09)",
    )

    # analytic differential against central finite differences
    worst = 0.0
    for z_mode, cost in costs.items():
        for _ in range(n // 2):
            _, xhat, meas = _sample_cost_state(rng, cost, z_mode)
            row = d1_phi_row(xhat, meas, cost).row
            ref = d1_phi_fd(xhat, meas, cost).row
            scale = max(1.0, float(np.max(np.abs(ref))))
            worst = max(worst, float(np.max(np.abs(row - ref))) / scale)
    log.record(
        worst < 1e-6,
        "analytic gradient",
        f"max relative deviation {worst:.3e} over {n} states (tol 1e-06)",
    )

    # closed-form observer rates against the generic matrix assembly
    K_md = GainK("diagonal", 2.0, 2.0)
    K_dir = GainK("vasconcelos", 2.0, 2.0)
    gamma = GainGamma(1.0, 1.0)
    worst = 0.0
    for z_mode, cost in costs.items():
        rhs_fn = direction_observer_rhs if z_mode else landmark_observer_rhs
        K = K_dir if z_mode else K_md
        for _ in range(n // 2):
            X, xhat, meas = _sample_cost_state(rng, cost, z_mode)
            state = ObserverState(xhat, AlgebraVec6.from_vec(0.1 * rng.normal(size=6)))
            u_y = AlgebraVec6.from_vec(rng.normal(size=6))
            inc_a, bd_a = rhs_fn(state, u_y, meas, K, gamma, cost)
            inc_b, bd_b = assemble_rhs_generic(state, u_y, meas, K, gamma, cost)
            worst = max(
                worst,
                float(np.max(np.abs(inc_a.rot_rate - inc_b.rot_rate))),
                float(np.max(np.abs(inc_a.trans_rate - inc_b.trans_rate))),
                float(np.max(np.abs(bd_a.as_vec() - bd_b.as_vec()))),
            )
    log.record(
        worst < 1e-12,
        "closed-form rates",
        f"max deviation from matrix assembly {worst:.3e} over {n} states (tol 1e-12)",
    )
    return log.exit_code()


# ---------------------------------------------------------------------------
# autonomy


def _cmd_autonomy(args: argparse.Namespace) -> int:
    log = _CheckLog()
    rng = np.random.default_rng(7)
    K = GainK("diagonal", 2.0, 2.0)
    gamma = GainGamma(1.0, 1.0)
    cost = default_scenario("md").build_cost()

    if args.group == "r3":
        err = ErrorState(
            Pose(np.eye(3), np.array([0.4, -0.2, 0.3])),
            AlgebraVec6(np.zeros(3), np.array([0.1, -0.05, 0.07])),
        )
        bases = [Pose(np.eye(3), rng.normal(size=3)) for _ in range(6)]
        report = autonomy_probe("r3", err, bases, K, gamma, cost)
        log.record(
            report.max_discrepancy < 1e-12,
            "translation-group autonomy",
            f"max discrepancy {report.max_discrepancy:.3e} over {len(bases)} "
            "base points (tol 1e-12)",
        )
    else:
        btilde = AlgebraVec6(np.array([0.05, -0.02, 0.04]), np.array([0.1, 0.0, -0.06]))
        err = ErrorState(exp_se3(np.array([0.3, -0.2, 0.4, 0.2, 0.1, -0.3])), btilde)
        bases = [Pose.identity()] + [_random_pose(rng) for _ in range(5)]
        report = autonomy_probe("se3", err, bases, K, gamma, cost)
        floor = 0.1 * np.linalg.norm(btilde.as_vec())
        log.record(
            report.max_discrepancy > floor,
            "pose-group base dependence",
            f"max discrepancy {report.max_discrepancy:.3e} exceeds "
            f"0.1 |btilde| = {floor:.3e}",
        )
    return log.exit_code()


# ---------------------------------------------------------------------------
# linearize


def _error_coords_rhs(
    delta: np.ndarray,
    X: Pose,
    K: GainK,
    gamma: GainGamma,
    cost: InvariantCost,
    rate: np.ndarray | None,
) -> np.ndarray:
    err = ErrorState(exp_se3(delta[:6]), AlgebraVec6.from_vec(delta[6:]))
    inc, bdot = error_dynamics_rhs(err, X, K, gamma, cost, omega_body_rate=rate)
    return np.concatenate([tangent_to_vec6(inc, err.E), bdot.as_vec()])


def _fd_jacobian(X, K, gamma, cost, rate, h: float = 1e-5) -> np.ndarray:
    M = np.empty((12, 12))
    for j in range(12):
        e = np.zeros(12)
        e[j] = h
        plus = _error_coords_rhs(e, X, K, gamma, cost, rate)
        minus = _error_coords_rhs(-e, X, K, gamma, cost, rate)
        M[:, j] = (plus - minus) / (2.0 * h)
    return M


def _cmd_linearize(args: argparse.Namespace) -> int:
    log = _CheckLog()
    gamma = GainGamma(1.0, 1.0)
    representative = exp_se3(np.array([0.4, -0.3, 0.5, 0.8, -0.5, 0.3]))

    for kind in ("md", "vasconcelos"):
        cost = default_scenario(kind).build_cost()
        if kind == "vasconcelos":
            K = GainK("vasconcelos", 2.0, 2.0)
            rate = np.array([0.3, -0.2, 0.4])
        else:
            K = GainK("diagonal", 2.0, 2.0)
            rate = None

        system = linearize(Pose.identity(), K, gamma, cost, omega_body_rate=rate)
        fd = _fd_jacobian(Pose.identity(), K, gamma, cost, rate)
        gap = float(np.max(np.abs(system.matrix - fd)))
        log.record(
            gap < 1e-5,
            f"{kind} jacobian at identity",
            f"max |analytic - finite difference| = {gap:.3e} (tol 1e-05)",
        )

        system_rep = linearize(representative, K, gamma, cost, omega_body_rate=rate)
        eigs = system_rep.eigenvalues()
        slowest = float(np.max(eigs.real))
        log.record(
            system_rep.is_hurwitz(),
            f"{kind} spectrum at representative pose",
            f"max Re(eig) = {slowest:.4f} "
            f"(slowest time constant {abs(1.0 / slowest):.1f} s)",
        )

        q_eigs = np.linalg.eigvalsh(system_rep.q_matrix())
        log.record(
            q_eigs[0] > 0.0,
            f"{kind} decay metric",
            f"Q eigenvalues in [{q_eigs[0]:.3e}, {q_eigs[-1]:.3e}]",
        )
    return log.exit_code()


# ---------------------------------------------------------------------------
# sweep


def _cmd_sweep(args: argparse.Namespace) -> int:
    log = _CheckLog()
    base = default_scenario()
    result = sweep(base, args.seeds)
    for seed, summary in zip(result.seeds, result.summaries):
        rate = summary.fit.rate if summary.fit is not None else math.nan
        flag = "converged" if summary.converged else "NOT converged"
        print(
            f"  seed {seed:3d}: rate = {rate:8.4f}  "
            f"final d(E) = {summary.final_dE:.3e}  {flag}"
        )
    log.record(
        result.all_converged,
        "sweep convergence",
        f"{sum(s.converged for s in result.summaries)}/{args.seeds} runs "
        "below 1e-6 final error",
    )
    spread = result.rate_spread()
    log.record(
        spread < 3.0,
        "rate spread",
        f"max/min fitted rate = {spread:.3f} (bound 3)",
    )
    return log.exit_code()


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="se3obs",
        description="Bias-compensating pose observer: runs and diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a configured scenario")
    p_run.add_argument("--config", required=True, help="JSON scenario file")
    p_run.add_argument("--out", required=True, help="output CSV path")
    p_run.add_argument(
        "--plot", action="store_true", help="write an SVG plot next to the CSV"
    )
    p_run.set_defaults(func=_cmd_run)

    p_check = sub.add_parser("check", help="validate gains and reference set")
    p_check.add_argument("--config", help="JSON scenario file (default scenario otherwise)")
    p_check.set_defaults(func=_cmd_check)

    p_lemmas = sub.add_parser("lemmas", help="verify the derivative identities")
    p_lemmas.add_argument(
        "--samples", type=int, default=1000, help="random states per identity"
    )
    p_lemmas.set_defaults(func=_cmd_lemmas)

    p_auto = sub.add_parser(
        "autonomy", help="probe base-trajectory dependence of the error dynamics"
    )
    p_auto.add_argument("--group", choices=("se3", "r3"), required=True)
    p_auto.set_defaults(func=_cmd_autonomy)

    p_lin = sub.add_parser("linearize", help="inspect the linearized error system")
    p_lin.set_defaults(func=_cmd_linearize)

    p_sweep = sub.add_parser("sweep", help="convergence rates over random seeds")
    p_sweep.add_argument("--seeds", type=int, default=20, help="number of seeds")
    p_sweep.set_defaults(func=_cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
