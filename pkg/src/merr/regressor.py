"""Mean-embedding ridge regression (MERR).

The estimator minimises ``(1/l) sum_i ||f(mu_i) - y_i||^2 + lambda ||f||^2``
over the RKHS of an outer kernel ``K`` on embeddings.  With ``K`` acting as
a scalar kernel times the identity on ``R^d`` the minimiser is

    f(mu_t) = k_t (K + l lambda I)^{-1} Y

so fitting is one symmetric positive-definite solve with ``d`` right-hand
sides.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .embedding import (
    BaseKernelSpec,
    EmbeddingGeometry,
    PointBag,
    TaylorFeatures,
    embedding_cross,
    embedding_gram,
    resolve_method,
)
from .outer_kernel import OuterKernelSpec, outer_from_geometry, outer_gram

__all__ = [
    "LabeledDataset",
    "TrainedModel",
    "SingularSystemError",
    "fit",
    "fit_gram",
    "predict",
    "empirical_risk",
    "excess_risk_estimate",
    "default_lambda_grid",
    "cross_validate",
    "training_geometry",
    "factorize",
]

log = logging.getLogger(__name__)

JITTER_START = 1e-12
JITTER_MAX = 1e-6


class SingularSystemError(np.linalg.LinAlgError):
    """Raised when ``K + l lambda I`` cannot be factorised even with maximal jitter."""


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """``l`` bags with labels in ``R^d``.

    ``label_bound`` is the bound ``C`` on ``||y_i||_2``.  When omitted it is
    recorded as the largest label norm; labels above an explicit bound are
    rejected, never clipped.
    """

    bags: tuple
    labels: np.ndarray
    label_bound: float | None = None

    def __post_init__(self):
        bags = tuple(self.bags)
        if len(bags) < 1:
            raise ValueError("dataset needs at least one bag")
        for b in bags:
            if not isinstance(b, PointBag):
                raise TypeError("bags must be PointBag instances")
            if b.dim != bags[0].dim:
                raise ValueError("inconsistent bag dimensions in dataset")
        Y = np.array(self.labels, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.ndim != 2 or Y.shape[0] != len(bags):
            raise ValueError(f"labels must have one row per bag; got shape {Y.shape} for {len(bags)} bags")
        if not np.all(np.isfinite(Y)):
            raise ValueError("labels contain non-finite values")
        norms = np.linalg.norm(Y, axis=1)
        C = self.label_bound
        if C is None:
            C = float(norms.max())
        elif np.any(norms > C):
            worst = int(np.argmax(norms))
            raise ValueError(f"label {worst} has norm {norms[worst]:.6g} above the declared bound C={C}")
        Y.setflags(write=False)
        object.__setattr__(self, "bags", bags)
        object.__setattr__(self, "labels", Y)
        object.__setattr__(self, "label_bound", float(C))

    @property
    def size(self) -> int:
        return len(self.bags)

    @property
    def output_dim(self) -> int:
        return self.labels.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=int)
        return LabeledDataset([self.bags[i] for i in idx], self.labels[idx], self.label_bound)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    base: BaseKernelSpec
    outer: OuterKernelSpec
    lam: float
    train_bags: tuple
    factor: np.ndarray
    duals: np.ndarray
    jitter_used: float
    train_diag: np.ndarray
    method: str = "exact"
    taylor: TaylorFeatures | None = None

    @property
    def size(self) -> int:
        return len(self.train_bags)

    @property
    def output_dim(self) -> int:
        return self.duals.shape[1]

    def system_matrix(self) -> np.ndarray:
        """``L L^T``, i.e. the jittered ``K + l lambda I`` that was factorised."""
        return self.factor @ self.factor.T


def factorize(K: np.ndarray, lam: float):
    """Cholesky factor of ``K + l lam I``, escalating diagonal jitter on failure."""
    l = K.shape[0]
    A = K + l * lam * np.eye(l)
    scale = np.trace(K) / l
    if not scale > 0:
        scale = 1.0
    jitters = [0.0]
    j = JITTER_START
    while j <= JITTER_MAX * (1 + 1e-9):
        jitters.append(j * scale)
        j *= 10.0
    for jit in jitters:
        try:
            L = linalg.cholesky(A + jit * np.eye(l), lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            if jit:
                log.debug("factorised with jitter %.3g", jit)
            return L, jit
    raise SingularSystemError(f"K + l*lambda*I not positive definite even with jitter {jitters[-1]:.3g}")


def fit_gram(K: np.ndarray, Y: np.ndarray, lam: float):
    """Solve ``(K + l lam I) alpha = Y``.  Returns ``(factor, duals, jitter)``."""
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"lambda must be positive, got {lam!r}")
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    L, jit = factorize(K, lam)
    alpha = linalg.cho_solve((L, True), Y, check_finite=False)
    return L, alpha, jit


def training_geometry(bags: Sequence[PointBag], base: BaseKernelSpec, method: str = "exact", threads: int = 1):
    """Embedding geometry of training bags: ``(geometry, resolved method, Taylor features or None)``."""
    method = resolve_method(base, bags, method)
    taylor = None
    if method == "taylor":
        taylor = TaylorFeatures.fit(base, bags)
        F = taylor.transform(bags)
        G = F @ F.T
        geom = EmbeddingGeometry(np.triu(G) + np.triu(G, 1).T)
    else:
        geom = embedding_gram(base, bags, method="exact", threads=threads)
    return geom, method, taylor


def fit(
    data: LabeledDataset,
    base: BaseKernelSpec,
    outer: OuterKernelSpec,
    lam: float,
    method: str = "exact",
    threads: int = 1,
) -> TrainedModel:
    """Fit MERR with regulariser ``lam`` on a labelled bag dataset.

    ``method`` selects how embedding inner products are computed
    (``exact``, ``taylor`` or ``auto``; see :mod:`merr.embedding`).
    """
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"lambda must be positive, got {lam!r}")
    geom, method, taylor = training_geometry(data.bags, base, method, threads)
    K = outer_gram(outer, geom)
    L, alpha, jit = fit_gram(K, data.labels, lam)
    return TrainedModel(
        base=base,
        outer=outer,
        lam=float(lam),
        train_bags=data.bags,
        factor=L,
        duals=alpha,
        jitter_used=jit,
        train_diag=geom.diag,
        method=method,
        taylor=taylor,
    )


def predict(model: TrainedModel, test_bags: Sequence[PointBag]) -> np.ndarray:
    """Predictions ``k_t alpha`` for every test bag, shape ``(n_test, d)``."""
    test_bags = list(test_bags)
    if not test_bags:
        return np.zeros((0, model.output_dim))
    cross, tdiag = embedding_cross(model.base, model.train_bags, test_bags, model.method, model.taylor)
    Kt = outer_from_geometry(model.outer, tdiag, model.train_diag, cross)
    return Kt @ model.duals


def empirical_risk(model: TrainedModel, data: LabeledDataset) -> float:
    """Mean squared euclidean error ``(1/n) sum_i ||f(mu_i) - y_i||^2`` on ``data``."""
    if data.size < 1:
        raise ValueError("empty dataset")
    pred = predict(model, data.bags)
    return float(np.mean(np.sum((pred - data.labels) ** 2, axis=1)))


def excess_risk_estimate(predictions, bayes_values, noise_variance: float = 0.0) -> float:
    """Monte-Carlo excess risk ``mean_t ||f(mu_t) - f_rho(x_t)||^2``.

    Under additive noise independent of the input the excess risk equals the
    squared ``L2`` distance to the regression function, so the label noise
    (``noise_variance``) does not enter the estimate; it is only validated.
    """
    P = np.asarray(predictions, dtype=float)
    B = np.asarray(bayes_values, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if P.shape != B.shape:
        raise ValueError(f"shape mismatch: predictions {P.shape} vs bayes values {B.shape}")
    if P.shape[0] == 0:
        raise ValueError("no test items")
    if noise_variance < 0:
        raise ValueError("noise variance must be non-negative")
    return float(np.mean(np.sum((P - B) ** 2, axis=1)))


def default_lambda_grid(K: np.ndarray, n: int = 20) -> np.ndarray:
    """``n`` log-spaced values in ``[1e-8, 1e1] * trace(K)/l``."""
    scale = np.trace(K) / K.shape[0]
    if not scale > 0:
        scale = 1.0
    return np.logspace(-8, 1, n) * scale


def cross_validate(
    data: LabeledDataset,
    base: BaseKernelSpec,
    outer: OuterKernelSpec,
    lambda_grid=None,
    folds: int = 5,
    seed: int = 0,
    method: str = "exact",
    threads: int = 1,
):
    """Bag-level K-fold cross-validation of ``lambda``.

    Bags are shuffled with ``seed`` and split into ``folds`` groups; a bag's
    points never straddle folds.  Returns ``(best_lambda, curve)`` where
    ``curve`` lists ``(lambda, mean held-out risk)`` in grid order.  Ties go
    to the largest ``lambda``.
    """
    l = data.size
    if folds < 2 or folds > l:
        raise ValueError(f"folds must be in [2, l={l}], got {folds}")
    geom, _, _ = training_geometry(data.bags, base, method, threads)
    K = outer_gram(outer, geom)
    grid = default_lambda_grid(K) if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty lambda grid")
    if np.any(~(grid > 0)):
        raise ValueError("lambda grid values must be positive")

    perm = np.random.default_rng(seed).permutation(l)
    parts = np.array_split(perm, folds)
    Y = data.labels
    curve = []
    for lam in grid:
        risks = []
        for k in range(folds):
            test = np.sort(parts[k])
            train = np.sort(np.concatenate([parts[m] for m in range(folds) if m != k]))
            _, alpha, _ = fit_gram(K[np.ix_(train, train)], Y[train], lam)
            pred = K[np.ix_(test, train)] @ alpha
            risks.append(np.mean(np.sum((pred - Y[test]) ** 2, axis=1)))
        curve.append((float(lam), float(np.mean(risks))))

    best_risk = min(r for _, r in curve)
    tol = 1e-12 * max(abs(best_risk), 1e-300)
    best_lam = max(lam for lam, r in curve if r <= best_risk + tol)
    return best_lam, curve
