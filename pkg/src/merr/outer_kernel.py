"""Kernels on mean-embedded distributions.

Every family is a function of the embedding geometry only: the linear set
kernel returns ``<mu_a, mu_b>_H`` itself, the nonlinear families are
radial in the RKHS distance ``D = ||mu_a - mu_b||_H``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .embedding import BaseKernelSpec, EmbeddingGeometry, PointBag, embedding_cross, embedding_inner

__all__ = [
    "OUTER_FAMILIES",
    "OuterKernelSpec",
    "holder_exponent",
    "outer_eval",
    "outer_from_geometry",
    "outer_gram",
    "outer_cross",
    "kernel_table",
]

OUTER_FAMILIES = (
    "linear",
    "gaussian_K",
    "exponential_K",
    "cauchy_K",
    "tstudent_K",
    "invmultiquadric_K",
)

_FORMULAS = {
    "linear": "<mu_a, mu_b>_H",
    "gaussian_K": "exp(-D^2 / (2 theta^2))",
    "exponential_K": "exp(-D / (2 theta^2))",
    "cauchy_K": "1 / (1 + D^2 / theta^2)",
    "tstudent_K": "1 / (1 + D^theta)",
    "invmultiquadric_K": "1 / sqrt(D^2 + theta^2)",
}

# tolerated negative squared distance before the geometry is declared inconsistent
SQ_DIST_TOL = 1e-12


@dataclass(frozen=True)
class OuterKernelSpec:
    family: str = "linear"
    theta: float = 1.0

    def __post_init__(self):
        if self.family not in OUTER_FAMILIES:
            raise ValueError(f"unknown outer kernel family {self.family!r}; expected one of {OUTER_FAMILIES}")
        if self.family != "linear":
            th = float(self.theta)
            if not (np.isfinite(th) and th > 0):
                raise ValueError(f"theta must be positive, got {self.theta!r}")
            if self.family == "tstudent_K" and th > 2:
                raise ValueError("tstudent_K needs theta <= 2 (Hoelder exponent theta/2 must be <= 1)")

    def bound(self, base_bound: float = 1.0) -> float:
        """``B_K = sup K(mu_a, mu_a)`` over embeddings of a base kernel bounded by ``base_bound``."""
        if self.family == "linear":
            return base_bound
        if self.family == "invmultiquadric_K":
            return 1.0 / self.theta
        return 1.0


def holder_exponent(spec: OuterKernelSpec):
    """Hoelder exponent ``h`` of the canonical feature map of ``K``.

    ``tstudent_K`` returns ``theta/2``; the other families are constants.
    A :class:`fractions.Fraction` theta keeps the result exact.
    """
    fam = spec.family
    if fam == "exponential_K":
        return Fraction(1, 2)
    if fam == "tstudent_K":
        if spec.theta > 2:
            raise ValueError("tstudent_K with theta > 2 has no valid Hoelder exponent")
        return spec.theta / 2
    return 1


def _from_sq_dist(spec: OuterKernelSpec, d2):
    th = spec.theta
    fam = spec.family
    if fam == "gaussian_K":
        return np.exp(-d2 / (2.0 * th * th))
    if fam == "exponential_K":
        return np.exp(-np.sqrt(d2) / (2.0 * th * th))
    if fam == "cauchy_K":
        return 1.0 / (1.0 + d2 / (th * th))
    if fam == "tstudent_K":
        return 1.0 / (1.0 + np.sqrt(d2) ** th)
    if fam == "invmultiquadric_K":
        return 1.0 / np.sqrt(d2 + th * th)
    raise ValueError(f"{fam} is not a distance-based family")


def _clamped_sq_dist(inner_aa, inner_bb, inner_ab):
    d2 = np.asarray(inner_aa) + np.asarray(inner_bb) - 2.0 * np.asarray(inner_ab)
    if np.any(d2 < -SQ_DIST_TOL):
        raise ValueError(f"inconsistent embedding geometry: squared distance {np.min(d2):.3g} < 0")
    return np.maximum(d2, 0.0)


def outer_eval(spec: OuterKernelSpec, inner_aa: float, inner_bb: float, inner_ab: float) -> float:
    """``K(mu_a, mu_b)`` from the three inner products of the pair."""
    if spec.family == "linear":
        return float(inner_ab)
    return float(_from_sq_dist(spec, _clamped_sq_dist(inner_aa, inner_bb, inner_ab)))


def outer_from_geometry(spec: OuterKernelSpec, diag_rows, diag_cols, inner) -> np.ndarray:
    """Vectorised ``outer_eval`` over a rectangular block of inner products."""
    inner = np.asarray(inner, dtype=float)
    if spec.family == "linear":
        return inner.copy()
    d2 = _clamped_sq_dist(np.asarray(diag_rows)[:, None], np.asarray(diag_cols)[None, :], inner)
    return _from_sq_dist(spec, d2)


def outer_gram(spec: OuterKernelSpec, geom: EmbeddingGeometry) -> np.ndarray:
    """Outer Gram ``[K(mu_i, mu_j)]`` of a set of embeddings."""
    return outer_from_geometry(spec, geom.diag, geom.diag, geom.inner)


def outer_cross(
    spec: OuterKernelSpec,
    base: BaseKernelSpec,
    train_bags: Sequence[PointBag],
    test_bag: PointBag,
) -> np.ndarray:
    """Row ``[K(mu_i, mu_t)]_i`` between training bags and one test bag."""
    cross, tdiag = embedding_cross(base, train_bags, [test_bag])
    train_diag = np.array([embedding_inner(base, b, b) for b in train_bags])
    return outer_from_geometry(spec, tdiag, train_diag, cross)[0]


def kernel_table():
    """``(family, formula, h)`` rows for every outer family; ``h`` is a string."""
    rows = []
    for fam in OUTER_FAMILIES:
        if fam == "tstudent_K":
            h = "theta/2 (theta <= 2)"
        else:
            h = str(holder_exponent(OuterKernelSpec(fam)))
        rows.append((fam, _FORMULAS[fam], h))
    return rows
