"""Evaluate the excess-risk bounds and see which terms dominate.

The bound has three parts: a bag-sampling term that shrinks with the bag
size N, a residual fixed by the prior smoothness, and a sample term that
shrinks with the number of bags l.  Holding l and lambda fixed and raising
N shows the bag term vanish until the others take over.

    python3 demos/bounds_tour.py
"""

from merr.theory import (
    BoundInputs,
    PriorParams,
    bag_size_threshold,
    pbc_quantities,
    rate_exponent_wellspecified,
    wellspecified_terms,
)


def inputs(N, lam, l=10**4):
    """Unit-bounded kernels, a Lipschitz outer kernel and labels bounded by 1."""
    return BoundInputs(B_k=1.0, B_K=1.0, L=1.0, h=1.0, C=1.0, l=l, N=N, lam=lam, eta=0.1, delta=1.0,
                       f_rho_norm_H=1.0)


def main():
    prior = PriorParams(b=2.0, c=2.0)
    lam = 0.01
    A, B, Ndim = pbc_quantities(prior, lam)
    print(f"prior quantities at lambda={lam}: A={A:.3g}  B={B:.3g}  N(lambda)<={Ndim:.3g}")
    print(f"{'N':>10} {'bag term':>12} {'residual':>10} {'sample':>10} {'total':>12}")
    for N in (10, 10**3, 10**5, 10**7, 10**9):
        t = wellspecified_terms(inputs(N, lam), A, B, Ndim)
        print(f"{N:>10} {t['bag_sampling']:12.4g} {t['residual']:10.4g} {t['sample']:10.4g} {t['total']:12.4g}")
    print(f"bag size needed by the precondition: {bag_size_threshold(inputs(1, lam)):.3g}")
    for a in (0.6, 1.2, 2.0):
        risk, lam_exp = rate_exponent_wellspecified(a, 2.0, 2.0)
        print(f"a={a}: risk ~ l^{risk:.3f} with lambda ~ l^{lam_exp:.3f}")


if __name__ == "__main__":
    main()
