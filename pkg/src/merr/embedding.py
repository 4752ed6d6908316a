"""Base kernels on the point space and empirical mean-embedding geometry.

A bag of points is only ever seen by the estimator through its empirical
mean embedding ``mu = (1/N) sum_n k(., x_n)``.  Every quantity the rest of
the package needs (inner products, squared RKHS distances, Gram matrices)
is computed here from the bags and a base kernel ``k``.

Two routes produce the same inner products:

* ``exact``: the set kernel double sum, assembled tile by tile.  This is
  the reference path.
* ``taylor``: only for the gaussian base kernel in 1 or 2 dimensions.  The
  kernel factorises as ``exp(-(t-s)^2/2) = sum_p phi_p(t) phi_p(s)`` with
  ``phi_p(t) = exp(-t^2/2) t^p / sqrt(p!)``; truncating at an order whose
  tail is below 1e-16 gives explicit finite mean-embedding vectors, so the
  Gram costs O(total points) instead of O(total points^2).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "PointBag",
    "BaseKernelSpec",
    "EmbeddingGeometry",
    "TaylorFeatures",
    "base_kernel_eval",
    "base_kernel_matrix",
    "embedding_inner",
    "embedding_sq_dist",
    "embedding_gram",
    "embedding_cross",
    "resolve_method",
    "concentration_radius",
    "median_heuristic_bandwidth",
]

BASE_FAMILIES = ("gaussian", "laplacian", "cauchy")

# cdist block size (pairs) per chunk; bounds peak memory of one kernel block
_BLOCK_PAIRS = 1 << 20
# above this many point pairs in a Gram, ``auto`` switches to the Taylor route
_AUTO_TAYLOR_PAIRS = 2e7
_TAYLOR_TOL = 1e-16
_TAYLOR_MAX_ORDER = 400


@dataclass(frozen=True, eq=False)
class PointBag:
    """A finite sample from one distribution, stored as an ``N x d`` array.

    Rows are sorted lexicographically at construction.  A bag is a multiset,
    so the order carries no information, and a canonical order makes every
    embedding quantity invariant to how the points were listed, bit for bit.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError(f"bag points must be a 2-d array, got ndim={pts.ndim}")
        if pts.shape[0] < 1:
            raise ValueError("empty bag")
        if pts.shape[1] < 1:
            raise ValueError("bag points must have at least one column")
        if not np.all(np.isfinite(pts)):
            raise ValueError("bag contains non-finite values")
        order = np.lexsort(pts.T[::-1])
        pts = np.ascontiguousarray(pts[order])
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"PointBag(n={self.n}, dim={self.dim})"


@dataclass(frozen=True)
class BaseKernelSpec:
    """Bounded radial kernel on the point space; ``B_k = k(u, u) = 1``."""

    family: str = "gaussian"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.family not in BASE_FAMILIES:
            raise ValueError(f"unknown base kernel family {self.family!r}; expected one of {BASE_FAMILIES}")
        bw = float(self.bandwidth)
        if not (np.isfinite(bw) and bw > 0):
            raise ValueError(f"bandwidth must be positive and finite, got {self.bandwidth!r}")
        object.__setattr__(self, "bandwidth", bw)

    @property
    def bound(self) -> float:
        """``B_k = sup_u k(u, u)``."""
        return 1.0


@dataclass(frozen=True, eq=False)
class EmbeddingGeometry:
    """Inner products ``<mu_i, mu_j>_H`` between the empirical embeddings of ``l`` bags."""

    inner: np.ndarray
    diag: np.ndarray = field(init=False)

    def __post_init__(self):
        g = np.array(self.inner, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 1:
            raise ValueError(f"geometry must be a non-empty square matrix, got shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("geometry contains non-finite values")
        if not np.array_equal(g, g.T):
            raise ValueError("geometry must be exactly symmetric")
        d = np.diag(g).copy()
        if np.any(d < -1e-12) or np.any(d > 1.0 + 1e-12):
            raise ValueError("self inner products must lie in [0, B_k]")
        g.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "inner", g)
        object.__setattr__(self, "diag", d)

    @property
    def size(self) -> int:
        return self.inner.shape[0]

    def sq_dists(self) -> np.ndarray:
        """Squared RKHS distances between all embedding pairs, clamped at 0."""
        d2 = self.diag[:, None] + self.diag[None, :] - 2.0 * self.inner
        return np.maximum(d2, 0.0)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.inner)[0])


def _check_point(u) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.ndim != 1:
        raise ValueError("a point must be a 1-d vector")
    if not np.all(np.isfinite(u)):
        raise ValueError("non-finite point")
    return u


def _kernel_from_dist(spec: BaseKernelSpec, dist: np.ndarray) -> np.ndarray:
    # ``dist`` is squared euclidean for gaussian/cauchy, l1 for laplacian
    s = spec.bandwidth
    if spec.family == "gaussian":
        return np.exp(-dist / (2.0 * s * s))
    if spec.family == "laplacian":
        return np.exp(-dist / s)
    return 1.0 / (1.0 + dist / (s * s))


def _metric(spec: BaseKernelSpec) -> str:
    return "cityblock" if spec.family == "laplacian" else "sqeuclidean"


def base_kernel_eval(spec: BaseKernelSpec, u, v) -> float:
    """Evaluate ``k(u, v)`` for two points of equal dimension."""
    u = _check_point(u)
    v = _check_point(v)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    diff = u - v
    dist = np.abs(diff).sum() if spec.family == "laplacian" else np.dot(diff, diff)
    return float(_kernel_from_dist(spec, np.asarray(dist)))


def base_kernel_matrix(spec: BaseKernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Kernel matrix ``k(A[n], B[m])`` for point arrays of shape ``(n, d)`` and ``(m, d)``."""
    return _kernel_from_dist(spec, cdist(A, B, _metric(spec)))


def _check_pair(a: PointBag, b: PointBag):
    if not isinstance(a, PointBag) or not isinstance(b, PointBag):
        raise TypeError("expected PointBag instances")
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch between bags: {a.dim} vs {b.dim}")


def _canonical_pair(a: PointBag, b: PointBag):
    if a is b:
        return a, b
    if (a.n, a.points.tobytes()) <= (b.n, b.points.tobytes()):
        return a, b
    return b, a


def _block_sum(spec: BaseKernelSpec, A: np.ndarray, B: np.ndarray) -> float:
    rows = max(1, _BLOCK_PAIRS // B.shape[0])
    total = 0.0
    metric = _metric(spec)
    for start in range(0, A.shape[0], rows):
        block = _kernel_from_dist(spec, cdist(A[start:start + rows], B, metric))
        total += float(block.sum())
    return total


def embedding_inner(spec: BaseKernelSpec, a: PointBag, b: PointBag) -> float:
    """Set kernel ``<mu_a, mu_b>_H = (1/(N_a N_b)) sum_n sum_m k(a_n, b_m)``.

    The two bags are put in a canonical order before summing, so swapping
    the arguments returns the identical float.
    """
    _check_pair(a, b)
    a, b = _canonical_pair(a, b)
    return _block_sum(spec, a.points, b.points) / (a.n * b.n)


def embedding_sq_dist(spec: BaseKernelSpec, a: PointBag, b: PointBag) -> float:
    """``||mu_a - mu_b||_H^2``, clamped below at zero."""
    _check_pair(a, b)
    aa = embedding_inner(spec, a, a)
    bb = embedding_inner(spec, b, b)
    ab = embedding_inner(spec, a, b)
    return max(aa + bb - 2.0 * ab, 0.0)


@dataclass(frozen=True, eq=False)
class TaylorFeatures:
    """Truncated Taylor feature map of the gaussian base kernel.

    ``center`` is subtracted from every point before scaling by the
    bandwidth; ``order`` is the number of terms kept per coordinate.
    """

    bandwidth: float
    center: np.ndarray
    order: int

    @classmethod
    def fit(cls, spec: BaseKernelSpec, bags: Sequence[PointBag], order: int | None = None) -> "TaylorFeatures":
        if spec.family != "gaussian":
            raise ValueError("Taylor features exist only for the gaussian base kernel")
        lo = np.min([b.points.min(axis=0) for b in bags], axis=0)
        hi = np.max([b.points.max(axis=0) for b in bags], axis=0)
        center = 0.5 * (lo + hi)
        feats = cls(spec.bandwidth, center, 1)
        need = feats.required_order(bags)
        return cls(spec.bandwidth, center, max(need, order or 0))

    def required_order(self, bags: Sequence[PointBag]) -> int:
        radius = max(float(np.max(np.abs(b.points - self.center))) for b in bags) / self.bandwidth
        return taylor_order(radius * radius)

    def transform(self, bags: Sequence[PointBag]) -> np.ndarray:
        """Mean feature vector of every bag, shape ``(len(bags), order**d)``."""
        return np.vstack([self._bag_mean(b) for b in bags])

    def _bag_mean(self, bag: PointBag) -> np.ndarray:
        d = bag.dim
        if d != self.center.shape[0]:
            raise ValueError(f"dimension mismatch: bag has {d}, features fitted on {self.center.shape[0]}")
        if d > 2:
            raise ValueError("Taylor features are implemented for dimension <= 2")
        P = self.order
        rows = max(1, (1 << 22) // P)
        acc = np.zeros((P,) * d)
        scaled = (bag.points - self.center) / self.bandwidth
        for start in range(0, bag.n, rows):
            t = scaled[start:start + rows]
            first = _taylor_1d(t[:, 0], P)
            if d == 1:
                acc += first.sum(axis=1)
            else:
                acc += first @ _taylor_1d(t[:, 1], P).T
        return acc.ravel() / bag.n


def _taylor_1d(t: np.ndarray, order: int) -> np.ndarray:
    """``phi_p(t)`` for ``p < order``, laid out as an ``order x len(t)`` array."""
    out = np.empty((order, t.shape[0]))
    out[0] = np.exp(-0.5 * t * t)
    for p in range(1, order):
        np.multiply(out[p - 1], t, out=out[p])
        out[p] *= 1.0 / math.sqrt(p)
    return out


def taylor_order(x: float, tol: float = _TAYLOR_TOL) -> int:
    """Smallest ``P`` with ``x**P / P! <= tol``; bounds the truncation error of one coordinate."""
    if x <= 0:
        return 1
    log_tol = math.log(tol)
    P = 1
    while P * math.log(x) - math.lgamma(P + 1) > log_tol:
        P += 1
        if P > _TAYLOR_MAX_ORDER:
            raise ValueError(f"points too spread out for the Taylor route (scaled radius^2={x:.3g})")
    return P


def resolve_method(spec: BaseKernelSpec, bags: Sequence[PointBag], method: str = "exact") -> str:
    """Pick ``exact`` or ``taylor`` for ``method='auto'``; validate explicit choices."""
    if method not in ("exact", "taylor", "auto"):
        raise ValueError(f"unknown embedding method {method!r}")
    usable = spec.family == "gaussian" and bags[0].dim <= 2
    if method == "taylor" and not usable:
        raise ValueError("the Taylor route needs a gaussian base kernel and dimension <= 2")
    if method != "auto":
        return method
    if not usable:
        return "exact"
    total = float(sum(b.n for b in bags))
    if 0.5 * total * total < _AUTO_TAYLOR_PAIRS:
        return "exact"
    try:
        TaylorFeatures.fit(spec, bags)
    except ValueError:
        return "exact"
    return "taylor"


def _check_bags(bags: Sequence[PointBag]):
    if len(bags) < 1:
        raise ValueError("need at least one bag")
    d = bags[0].dim
    for b in bags:
        if not isinstance(b, PointBag):
            raise TypeError("expected PointBag instances")
        if b.dim != d:
            raise ValueError(f"inconsistent bag dimensions: {d} vs {b.dim}")


def _tiles(l: int, tile: int):
    starts = range(0, l, tile)
    return [(i0, j0) for i0 in starts for j0 in starts if j0 >= i0]


def embedding_gram(
    spec: BaseKernelSpec,
    bags: Sequence[PointBag],
    method: str = "exact",
    threads: int = 1,
    tile: int = 16,
) -> EmbeddingGeometry:
    """Gram matrix of empirical mean embeddings.

    With ``method='exact'`` each entry is exactly ``embedding_inner(bags[i],
    bags[j])``; the upper triangle is split into tiles that may run on a
    thread pool, and every entry is computed the same way whatever the
    thread count, so results do not depend on ``threads``.
    """
    _check_bags(bags)
    method = resolve_method(spec, bags, method)
    if method == "taylor":
        feats = TaylorFeatures.fit(spec, bags)
        F = feats.transform(bags)
        return EmbeddingGeometry(_symmetric_product(F))

    l = len(bags)
    G = np.empty((l, l))

    def work(t):
        i0, j0 = t
        out = []
        for i in range(i0, min(i0 + tile, l)):
            for j in range(max(j0, i), min(j0 + tile, l)):
                out.append((i, j, embedding_inner(spec, bags[i], bags[j])))
        return out

    tiles = _tiles(l, tile)
    if threads > 1 and len(tiles) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, tiles))
    else:
        results = [work(t) for t in tiles]
    for chunk in results:
        for i, j, v in chunk:
            G[i, j] = v
            G[j, i] = v
    return EmbeddingGeometry(G)


def _symmetric_product(F: np.ndarray) -> np.ndarray:
    G = F @ F.T
    upper = np.triu(G)
    return upper + np.triu(G, 1).T


def embedding_cross(
    spec: BaseKernelSpec,
    train_bags: Sequence[PointBag],
    test_bags: Sequence[PointBag],
    method: str = "exact",
    taylor: TaylorFeatures | None = None,
):
    """Inner products between test and training embeddings.

    Returns ``(cross, test_diag)`` with ``cross[t, i] = <mu_test_t, mu_train_i>``
    and ``test_diag[t] = <mu_test_t, mu_test_t>``.
    """
    _check_bags(train_bags)
    _check_bags(test_bags)
    if train_bags[0].dim != test_bags[0].dim:
        raise ValueError(f"dimension mismatch: train {train_bags[0].dim} vs test {test_bags[0].dim}")
    if method == "taylor":
        if taylor is None:
            taylor = TaylorFeatures.fit(spec, list(train_bags) + list(test_bags))
        else:
            need = max(taylor.required_order(train_bags), taylor.required_order(test_bags))
            if need > taylor.order:
                taylor = TaylorFeatures(taylor.bandwidth, taylor.center, need)
        Ftr = taylor.transform(train_bags)
        Fte = taylor.transform(test_bags)
        return Fte @ Ftr.T, np.einsum("ij,ij->i", Fte, Fte)
    if method != "exact":
        raise ValueError(f"unknown embedding method {method!r}")
    cross = np.array([[embedding_inner(spec, t, b) for b in train_bags] for t in test_bags])
    diag = np.array([embedding_inner(spec, t, t) for t in test_bags])
    return cross, diag


def concentration_radius(B_k: float, N: int, alpha: float) -> float:
    """Radius ``(1 + sqrt(alpha)) sqrt(2 B_k) / sqrt(N)``.

    The empirical embedding of an ``N``-point bag lies farther than this
    from the population embedding with probability at most ``exp(-alpha)``.
    """
    if not B_k > 0:
        raise ValueError("B_k must be positive")
    if N < 1 or int(N) != N:
        raise ValueError("N must be a positive integer")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return (1.0 + math.sqrt(alpha)) * math.sqrt(2.0 * B_k) / math.sqrt(N)


def median_heuristic_bandwidth(bags: Sequence[PointBag], max_pairs: int = 10000, seed: int = 0) -> float:
    """Median pairwise euclidean distance over (a seeded subsample of) all pooled points."""
    _check_bags(bags)
    pts = np.vstack([b.points for b in bags])
    M = pts.shape[0]
    n_pairs = M * (M - 1) // 2
    if n_pairs == 0:
        raise ValueError("need at least two points for the median heuristic")
    if n_pairs <= max_pairs:
        i, j = np.triu_indices(M, k=1)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, M, size=max_pairs)
        j = rng.integers(0, M - 1, size=max_pairs)
        j = j + (j >= i)
    dist = np.sqrt(((pts[i] - pts[j]) ** 2).sum(axis=1))
    med = float(np.median(dist))
    if not med > 0:
        raise ValueError("median pairwise distance is zero (points identical); bandwidth undefined")
    return med
