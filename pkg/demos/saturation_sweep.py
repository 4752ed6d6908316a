"""Watch the learning rate saturate as bags grow.

The bag size follows N = l^(a/h) log l.  Below the saturation threshold a
larger exponent a buys a faster rate; above it the extra points are
wasted.  The sweep prints the mean excess-risk curve for three values of a
and the fitted log-log slope of each.

    python3 demos/saturation_sweep.py [trials]
"""

import sys

from merr.harness import ExperimentConfig, run_rate_experiment


def main(trials=3):
    cfg = ExperimentConfig.from_mapping({
        "experiment.l_grid": "32,64,128,256",
        "experiment.a_values": "threshold*0.5,threshold,threshold+0.4",
        "experiment.trials": str(trials),
    })
    print(f"saturation threshold a* = {cfg.threshold():.3f}")
    report = run_rate_experiment(cfg)
    for a in cfg.a_values():
        curve = report.mean_curve(a)
        slope, err, _, theory, _ = report.slopes[a]
        cells = "  ".join(f"l={l}: {r:.5f}" for l, r in curve.items())
        print(f"a={a:.2f}  {cells}")
        print(f"          slope {slope:+.3f} +/- {err:.3f}   (theoretical risk exponent {theory:+.3f})")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
