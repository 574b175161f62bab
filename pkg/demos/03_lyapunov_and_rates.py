"""How the energy function certifies convergence, and what sets the rate.

The observer's convergence argument rests on one scalar: the invariant
cost of the current error plus the bias-gain-weighted bias error.  Its
time derivative along the closed loop is the negative gain-weighted
square of the cost's differential row, so it can never increase.  This
script shows that monotone decay on a run, then sweeps the feedback gain
to show how the decay rate responds: there is an interior optimum, since
past it the pose subsystem overdamps and the bias loop becomes the
bottleneck.

Run:  python3 demos/03_lyapunov_and_rates.py
"""

import numpy as np

from se3obs import GainConfig, default_scenario, fit_rate, linearize, run
from se3obs import GainGamma, GainK, Pose


def main() -> None:
    trace, summary = run(default_scenario(duration=30.0))
    jumps = np.diff(trace.lyap)
    print(f"energy at start / end : {trace.lyap[0]:.4f} / {trace.lyap[-1]:.3e}")
    print(f"largest energy jump   : {np.max(jumps):.3e} (never above zero)")
    print(f"derivative range      : [{trace.lyap_dot.min():.2f}, {trace.lyap_dot.max():.2e}]")

    print("\ngain sweep (k_w = k_v = k, bias gains fixed at 1):")
    print(f"{'k':>6} {'fitted rate':>12} {'r^2':>8} {'slowest mode':>14}")
    cost = default_scenario("md").build_cost()
    for k in (0.5, 1.0, 2.0, 4.0, 8.0):
        scenario = default_scenario(
            duration=30.0, gains=GainConfig(k_w=k, k_v=k)
        )
        tr, su = run(scenario)
        rate = su.fit.rate if su.fit is not None else float("nan")
        r2 = su.fit.r_squared if su.fit is not None else float("nan")
        system = linearize(Pose.identity(), GainK("diagonal", k, k), GainGamma(1.0, 1.0), cost)
        slowest = float(np.max(system.eigenvalues().real))
        print(f"{k:6.1f} {rate:12.4f} {r2:8.4f} {slowest:14.4f}")

    print(
        "\nthe fitted rates track the slowest eigenvalue of the linearized"
        "\nerror system; raising the pose gain beyond a point actively slows"
        "\nconvergence, because the pose subsystem overdamps and the bias"
        "\nloop pole migrates back toward zero."
    )

    # the tail fit is robust to the early transient: fit on the last half
    tail = fit_rate(trace.t, trace.compound_error())
    print(f"\ntail fit on the default run: rate {tail.rate:.4f} over {tail.n_used} samples")


if __name__ == "__main__":
    main()
