"""Watch continuous measurement of sigma_z collapse an ensemble with Born weights.

Every trajectory starts in ``sqrt(0.7)|0> + sqrt(0.3)|1>`` and is measured
until its variance of sigma_z falls below 1e-6.  The fraction ending in
``|0>`` should match 0.7 within binomial error.
"""

import numpy as np

from measflow.experiments import ExperimentConfig, run_experiment


def main(n_traj=1000):
    cfg = ExperimentConfig.from_mapping({"preset": "born", "n_traj": n_traj})
    out = run_experiment(cfg)
    r = out.results
    times = np.array([t.terminal_state_summary["collapse_time"] for t in out.trajectories])
    print(f"{n_traj} trajectories, all collapsed: {r['all_collapsed']}")
    print(f"fraction in |0>: {r['fraction_top']:.4f} (expected 0.7 +- {r['tolerance']:.4f})")
    print(f"collapse time: median {np.median(times):.1f}, 95th percentile {np.percentile(times, 95):.1f}")


if __name__ == "__main__":
    main()
