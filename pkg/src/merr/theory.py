"""Closed-form evaluators for the MERR excess-risk bounds and learning rates.

Everything here is a pure function of its arguments.  Population objects
(the covariance operator ``T``, the regression function ``f_rho`` and its
approximation errors) have no finite representation, so they enter only
as user-supplied norms or as the upper bounds implied by the prior class
``P(b, c)``.

Rate exponents are written with plain arithmetic so that
:class:`fractions.Fraction` arguments give exact results.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import linalg

__all__ = [
    "PriorParams",
    "BoundInputs",
    "pbc_quantities",
    "wellspecified_terms",
    "wellspecified_bound_general",
    "wellspecified_bound",
    "misspecified_bound",
    "misspecified_bound_general",
    "bag_size_threshold",
    "bag_size_schedule",
    "bag_size_schedule_misspecified",
    "rate_exponent_wellspecified",
    "rate_exponent_misspecified",
    "saturation_threshold_wellspecified",
    "saturation_threshold_misspecified",
    "reference_rate_comparison",
    "check_conditions",
    "empirical_effective_dimension",
]


@dataclass(frozen=True)
class PriorParams:
    """Parameters of the prior class ``P(b, c)``.

    ``b`` is the eigenvalue decay index of ``T`` (``alpha <= n^b lambda_n <=
    beta``), ``c`` the smoothness index of the regression function and ``R``
    the range-space radius.
    """

    b: float
    c: float
    R: float = 1.0
    alpha_spec: float = 1.0
    beta_spec: float = 1.0

    def __post_init__(self):
        if not self.b > 1:
            raise ValueError(f"b must exceed 1, got {self.b}")
        if not 1 < self.c <= 2:
            raise ValueError(f"c must lie in (1, 2], got {self.c}")
        for name in ("R", "alpha_spec", "beta_spec"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.alpha_spec > self.beta_spec:
            raise ValueError("alpha_spec must not exceed beta_spec")


@dataclass(frozen=True)
class BoundInputs:
    """Constants entering the finite-sample bounds.

    Attributes:
        B_k: bound of the base kernel.
        B_K: bound of the outer kernel.
        L, h: Hoelder constants of the outer feature map.
        C: label bound.
        l: number of bags; N: points per bag.
        lam: regularisation parameter.
        eta, delta: confidence parameters.
        f_rho_norm_H: RKHS norm of the regression function.
    """

    B_k: float
    B_K: float
    L: float
    h: float
    C: float
    l: float
    N: float
    lam: float
    eta: float
    delta: float
    f_rho_norm_H: float = 0.0

    def __post_init__(self):
        if not 0 < self.h <= 1:
            raise ValueError(f"h must lie in (0, 1], got {self.h}")
        if not 0 < self.eta < 1:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not (self.l >= 1 and self.N >= 1):
            raise ValueError("l and N must be at least 1")
        if not (self.B_k > 0 and self.B_K > 0):
            raise ValueError("kernel bounds must be positive")
        if self.L < 0 or self.C < 0 or self.f_rho_norm_H < 0:
            raise ValueError("L, C and the norm of f_rho must be non-negative")

    @property
    def M(self) -> float:
        return 2.0 * (self.C + self.f_rho_norm_H * math.sqrt(self.B_K))

    @property
    def Sigma(self) -> float:
        return self.M / 2.0

    @property
    def C_eta(self) -> float:
        """``32 log^2(6/eta)``, the well-specified confidence constant."""
        return 32.0 * math.log(6.0 / self.eta) ** 2

    @property
    def C_eta_misspecified(self) -> float:
        """``log(6/eta)``; the misspecified bound reuses the symbol with this value."""
        return math.log(6.0 / self.eta)

    @property
    def log_factor(self) -> float:
        """``1 + sqrt(log l + delta)``."""
        return 1.0 + math.sqrt(math.log(self.l) + self.delta)


def _finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise ValueError(f"non-finite intermediate value in {what}: {value}")
    return value


def pbc_quantities(prior: PriorParams, lam: float):
    """Upper bounds ``(A, B, N)`` on the residual, reconstruction error and effective dimension.

    ``A(lam) <= R lam^c``, ``B(lam) <= R lam^(c-1)`` and
    ``N(lam) <= beta b/(b-1) lam^(-1/b)`` for every distribution in ``P(b, c)``.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    b, c, R = prior.b, prior.c, prior.R
    A = R * lam ** c
    B = R * lam ** (c - 1)
    Ndim = prior.beta_spec * b / (b - 1) * lam ** (-1 / b)
    return A, B, Ndim


def wellspecified_terms(inputs: BoundInputs, A: float, B: float, Ndim: float) -> dict:
    """Named pieces of the well-specified bound for given ``A``, ``B``, ``N(lambda)``.

    Keys:
        ``sample_inner``: the bracket multiplied by ``4 B_K`` inside the
        bag-sampling term.
        ``bag_prefactor``: ``4 L^2 (1+sqrt(log l+delta))^(2h) (2B_k)^h / (lam N^h)``.
        ``bag_sampling``: prefactor times ``[C^2 + 4 B_K sample_inner]``.
        ``residual``: ``A``.
        ``sample``: the ``C_eta``-weighted two-stage sampling term.
        ``total``: five times the sum of the last three.
    """
    if A < 0 or B < 0 or Ndim < 0:
        raise ValueError("A, B and N(lambda) must be non-negative")
    p = inputs
    lam, l, B_K = p.lam, p.l, p.B_K
    M2 = p.M ** 2
    S2 = p.Sigma ** 2
    log2 = math.log(6.0 / p.eta) ** 2
    try:
        return _wellspecified_terms(p, A, B, Ndim, lam, l, B_K, M2, S2, log2)
    except ArithmeticError as exc:
        raise ValueError(f"bound is not finite at these inputs: {exc}") from None


def _wellspecified_terms(p, A, B, Ndim, lam, l, B_K, M2, S2, log2):
    sample_inner = (
        log2 * (
            64.0 / lam * (M2 * B_K / (l * l * lam) + S2 * Ndim / l)
            + 24.0 / lam ** 2 * (4.0 * B_K ** 2 * B / (l * l) + B_K * A / l)
        )
        + B
        + p.f_rho_norm_H ** 2
    )
    bag_prefactor = 4.0 * p.L ** 2 * p.log_factor ** (2 * p.h) * (2.0 * p.B_k) ** p.h / (lam * p.N ** p.h)
    bag_sampling = bag_prefactor * (p.C ** 2 + 4.0 * B_K * sample_inner)
    sample = p.C_eta * (
        B_K ** 2 * B / (l * l * lam)
        + B_K * A / (4.0 * l * lam)
        + B_K * M2 / (l * l * lam)
        + S2 * Ndim / l
    )
    terms = {
        "sample_inner": sample_inner,
        "bag_prefactor": bag_prefactor,
        "bag_sampling": bag_sampling,
        "residual": float(A),
        "sample": sample,
    }
    terms["total"] = 5.0 * (bag_sampling + A + sample)
    for k, v in terms.items():
        _finite(v, k)
    return terms


def wellspecified_bound_general(inputs: BoundInputs, A: float, B: float, Ndim: float) -> float:
    """Well-specified excess-risk bound for explicit ``A(lambda)``, ``B(lambda)``, ``N(lambda)``."""
    return wellspecified_terms(inputs, A, B, Ndim)["total"]


def wellspecified_bound(inputs: BoundInputs, prior: PriorParams) -> float:
    """Well-specified bound with ``A``, ``B``, ``N`` replaced by their ``P(b, c)`` upper bounds."""
    A, B, Ndim = pbc_quantities(prior, inputs.lam)
    return wellspecified_bound_general(inputs, A, B, Ndim)


def _misspecified_sqrt(inputs: BoundInputs, D: float, root_arg: float, sigma: float) -> float:
    p = inputs
    lam, l, B_K, C = p.lam, p.l, p.B_K, p.C
    sq_lam = math.sqrt(lam)
    bag = (
        2.0 * p.L * C * p.log_factor ** p.h * (2.0 * p.B_k) ** (p.h / 2)
        / (sq_lam * p.N ** (p.h / 2))
        * (1.0 + 2.0 * math.sqrt(B_K) / sq_lam)
    )
    label_part = 2.0 * C * math.sqrt(B_K) / l + C * math.sqrt(B_K) / math.sqrt(l)
    operator_part = (2.0 * B_K / l + sigma / math.sqrt(l)) / lam * math.sqrt(root_arg)
    sample = 2.0 * p.C_eta_misspecified / sq_lam * (label_part + operator_part)
    return _finite(bag + sample + D, "misspecified bound")


def misspecified_bound(
    inputs: BoundInputs,
    s: float,
    T_tilde_norm: float,
    f_rho_Ts_norm: float,
    sigma_bern: float | None = None,
) -> float:
    """Misspecified excess-risk bound under the range condition ``f_rho in Im(T~^s)``.

    The bound is stated for the square root of the excess risk; the squared
    value is returned.  ``sigma_bern`` defaults to ``B_K``.

    Args:
        s: range-space exponent, ``s > 0``.
        T_tilde_norm: operator norm of ``T~`` on ``L^2``.
        f_rho_Ts_norm: ``||T~^(-s) f_rho||``.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    if not T_tilde_norm > 0 or f_rho_Ts_norm < 0:
        raise ValueError("||T~|| must be positive and ||T~^-s f_rho|| non-negative")
    sigma = inputs.B_K if sigma_bern is None else sigma_bern
    lam = inputs.lam
    D_b = max(1.0, T_tilde_norm ** (s - 1)) * lam ** min(1.0, s) * f_rho_Ts_norm
    root = max(1.0, T_tilde_norm ** s) * lam * f_rho_Ts_norm * D_b
    return _misspecified_sqrt(inputs, D_b, root, sigma) ** 2


def misspecified_bound_general(
    inputs: BoundInputs,
    f_rho_L2_norm: float,
    approx_error: float,
    T_norm: float,
    q_norm: float,
    sigma_bern: float | None = None,
) -> float:
    """Misspecified bound for an arbitrary comparison function ``q`` in the RKHS.

    ``approx_error`` is ``||f_rho - S_K^* q||_rho``; the returned value is the
    squared bound on the root excess risk.
    """
    if min(f_rho_L2_norm, approx_error, T_norm, q_norm) < 0:
        raise ValueError("norms must be non-negative")
    sigma = inputs.B_K if sigma_bern is None else sigma_bern
    lam = inputs.lam
    D_a = approx_error + max(1.0, T_norm) * math.sqrt(lam) * q_norm
    root = lam * f_rho_L2_norm * D_a
    return _misspecified_sqrt(inputs, D_a, root, sigma) ** 2


def bag_size_threshold(inputs: BoundInputs) -> float:
    """Smallest admissible bag size ``(1+sqrt(log l+delta))^2 2^((h+6)/h) B_k B_K^(1/h) L^(2/h) / lam^(2/h)``."""
    p = inputs
    h = p.h
    return (
        p.log_factor ** 2
        * 2.0 ** ((h + 6) / h)
        * p.B_k
        * p.B_K ** (1 / h)
        * p.L ** (2 / h)
        / p.lam ** (2 / h)
    )


def bag_size_schedule(l: int, a: float, h: float) -> int:
    """Bag size ``ceil(l^(a/h) ln l)`` (at least 1) of the well-specified trade-off."""
    if int(l) != l or l < 2:
        raise ValueError(f"l must be an integer >= 2, got {l}")
    if not a > 0:
        raise ValueError("a must be positive")
    if not 0 < h <= 1:
        raise ValueError("h must lie in (0, 1]")
    N = math.ceil(float(l) ** (float(a) / float(h)) * math.log(l))
    return max(1, int(N))


def bag_size_schedule_misspecified(l: int, a: float, h: float) -> int:
    """Bag size ``ceil(l^(2a/h) ln l)`` of the misspecified trade-off."""
    if not a > 0:
        raise ValueError("a must be positive")
    return bag_size_schedule(l, 2 * a, h)


def _rational(x):
    """Promote integers to :class:`Fraction` so that exact inputs stay exact."""
    return Fraction(x) if isinstance(x, numbers.Integral) else x


def saturation_threshold_wellspecified(b, c):
    """``b(c+1)/(bc+1)``: bag-size exponent beyond which the rate stops improving."""
    b, c = _rational(b), _rational(c)
    return b * (c + 1) / (b * c + 1)


def saturation_threshold_misspecified(s):
    """``(s+1)/(s+2)``."""
    s = _rational(s)
    return (s + 1) / (s + 2)


def rate_exponent_wellspecified(a, b, c):
    """``(risk exponent, lambda exponent)`` for ``N = l^(a/h) log l`` in the well-specified case."""
    if not a > 0:
        raise ValueError("a must be positive")
    if not b > 1:
        raise ValueError("b must exceed 1")
    if not 1 < c <= 2:
        raise ValueError("c must lie in (1, 2]")
    a, b, c = _rational(a), _rational(b), _rational(c)
    if a <= saturation_threshold_wellspecified(b, c):
        return -a * c / (c + 1), -a / (c + 1)
    return -b * c / (b * c + 1), -b / (b * c + 1)


def rate_exponent_misspecified(a, s):
    """``(risk exponent, lambda exponent)`` for ``N = l^(2a/h) log l`` in the misspecified case."""
    if not a > 0:
        raise ValueError("a must be positive")
    if not 0 < s <= 1:
        raise ValueError("s must lie in (0, 1]")
    a, s = _rational(a), _rational(s)
    if a <= saturation_threshold_misspecified(s):
        return -2 * s * a / (s + 1), -a / (s + 1)
    return -2 * s / (s + 2), -1 / (s + 2)


def reference_rate_comparison(s):
    """Saturated MERR exponent ``-2s/(s+2)`` next to the one-stage exponent ``-2s/(2s+1)``."""
    if not 0 < s <= 1:
        raise ValueError("s must lie in (0, 1]")
    s = _rational(s)
    return -2 * s / (s + 2), -2 * s / (2 * s + 1)


def check_conditions(inputs: BoundInputs, Ndim: float, T_opnorm: float):
    """Evaluate the preconditions of the bounds.

    Returns a list of ``(name, satisfied, margin)``; ``margin`` is the
    signed slack (non-negative when satisfied).  Never raises: a condition
    that cannot be evaluated is reported unsatisfied with a NaN margin.
    """
    p = inputs

    def safe(name, fn):
        try:
            margin = float(fn())
        except (ArithmeticError, ValueError):
            margin = float("nan")
        return name, bool(margin >= 0), margin

    return [
        safe("l_ge_2CetaBK_N_over_lambda", lambda: p.l - 2.0 * p.C_eta * p.B_K * Ndim / p.lam),
        safe("lambda_le_T_norm", lambda: T_opnorm - p.lam),
        safe("N_ge_bag_size_threshold", lambda: p.N - bag_size_threshold(p)),
        safe("l_ge_misspecified_threshold", lambda: p.l - (12.0 * p.B_K * p.C_eta_misspecified / p.lam) ** 2),
    ]


def empirical_effective_dimension(outer_gram, lam: float, l: int | None = None) -> float:
    """Empirical proxy ``Tr[K (K + l lam I)^(-1)]`` of the effective dimension.

    This is a plug-in proxy computed from a finite Gram, not the population
    quantity ``Tr[(T + lam I)^(-1) T]``.
    """
    K = np.asarray(outer_gram, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("Gram must be square")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    n = K.shape[0]
    l = n if l is None else l
    c, low = linalg.cho_factor(K + l * lam * np.eye(n), lower=True)
    X = linalg.cho_solve((c, low), K)
    return float(np.clip(np.trace(X), 0.0, n))
