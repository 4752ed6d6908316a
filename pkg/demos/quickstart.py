"""Fit a mean-embedding ridge regressor on synthetic bags and score it.

Each bag is a sample of N points from a gaussian N(m, 0.5^2) whose hidden
location m is uniform on [-1, 1].  The target is m^2, which the regressor
never sees directly: it only gets the points.

    python3 demos/quickstart.py
"""

import numpy as np

from merr import BaseKernelSpec, OuterKernelSpec, fit, predict
from merr.regressor import cross_validate, excess_risk_estimate
from merr.synthetic import LabelFunctional, MetaDistributionSpec, make_dataset


def main():
    meta = MetaDistributionSpec(component_sigma=0.5)
    target = LabelFunctional("mean_norm_sq", noise_sigma=0.1)
    train, _ = make_dataset(meta, target, l=200, N=50, seed=0, stream="train")
    test, bayes = make_dataset(meta, target, l=100, N=500, seed=0, stream="test")

    base = BaseKernelSpec("gaussian", 1.0)
    outer = OuterKernelSpec("gaussian_K", 1.0)
    lam, curve = cross_validate(train, base, outer, folds=5, seed=0)
    print(f"cross-validated lambda = {lam:.3g} ({len(curve)} grid points)")

    model = fit(train, base, outer, lam)
    pred = predict(model, test.bags)
    print(f"excess risk on 100 fresh bags: {excess_risk_estimate(pred, bayes):.5f}")
    for m, p in zip(bayes[:5, 0], pred[:5, 0]):
        print(f"  true {m:7.4f}   predicted {p:7.4f}")
    print(f"label variance for scale: {np.var(bayes):.5f}")


if __name__ == "__main__":
    main()
