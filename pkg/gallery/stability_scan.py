"""Compare the analytic stability criterion with Monte Carlo growth rates.

For each rate imbalance and target polar angle the script prints the
Lyapunov sum, the predicted growth rate of the mean distance from the
target, and the rate fitted from simulated trajectories.
"""

from measflow.experiments import ExperimentConfig, run_experiment


def main(n_traj=500):
    cfg = ExperimentConfig.from_mapping({"preset": "stability_grid", "n_traj": n_traj})
    cells = run_experiment(cfg).results["cells"]
    print(f"{'dgamma':>7} {'theta':>6} {'verdict':>9} {'predicted':>10} {'fitted':>10}")
    for c in cells:
        fitted = f"{c['fitted_rate']:10.3f}" if "fitted_rate" in c else f"{'-':>10}"
        print(f"{c['delta_gamma']:7.1f} {c['theta']:6.3f} {c['verdict']:>9} {c['predicted_rate']:10.3f} {fitted}")


if __name__ == "__main__":
    main()
