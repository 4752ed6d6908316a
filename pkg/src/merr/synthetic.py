"""Two-stage synthetic distribution regression problems.

Stage one draws a location ``m_i`` per bag from a meta law; stage two draws
``N`` points from ``N(m_i, sigma^2 I)``.  Labels are a known functional of
the hidden distribution plus gaussian noise, so the Bayes value of every
bag is available and the excess risk can be measured directly.

Randomness comes from Philox counter streams keyed by ``(seed, stream,
role, index)``.  Any single mean, bag or noise value can be regenerated
from its index alone, and a bag's first ``N`` points do not depend on how
many points are drawn in total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .embedding import BaseKernelSpec, PointBag, embedding_inner
from .regressor import LabeledDataset

__all__ = [
    "MetaDistributionSpec",
    "LabelFunctional",
    "STREAMS",
    "uniform_stream",
    "sample_meta",
    "sample_bags",
    "sample_bag",
    "true_regression_value",
    "make_dataset",
    "population_inner",
    "population_point_inner",
    "embedding_error_norm",
]

STREAMS = {"train": 1, "test": 2, "conc": 3}
_ROLE_META, _ROLE_BAG, _ROLE_NOISE, _ROLE_MATRIX = 0, 1, 2, 3
# shift keeps ndtri away from u = 0 (53-bit uniforms lie on a grid of step 2^-53)
_HALF_ULP = 2.0 ** -54
# coordinates of a gaussian meta law are treated as bounded by this many tau
_GAUSS_LAW_RADIUS = 10.0


def _stream_code(stream) -> int:
    if isinstance(stream, str):
        if stream not in STREAMS:
            raise ValueError(f"unknown stream {stream!r}; expected one of {sorted(STREAMS)}")
        return STREAMS[stream]
    return int(stream)


def uniform_stream(seed: int, key: Sequence[int], start: int, count: int) -> np.ndarray:
    """Uniforms at counter positions ``start .. start+count-1`` of the stream ``key``."""
    if start < 0 or count < 0:
        raise ValueError("start and count must be non-negative")
    bitgen = np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))
    bitgen.advance(start // 4)
    gen = np.random.Generator(bitgen)
    skip = start % 4
    if skip:
        gen.random(skip)
    return gen.random(count)


def _normals(seed, key, start, count) -> np.ndarray:
    return ndtri(uniform_stream(seed, key, start, count) + _HALF_ULP)


@dataclass(frozen=True)
class MetaDistributionSpec:
    """Meta law over gaussian location bags ``N(m, sigma^2 I)`` in ``R^dim``.

    ``mean_law`` is ``uniform`` (each coordinate of ``m`` uniform on
    ``[lo, hi]``) or ``gaussian`` (``m ~ N(0, tau^2 I)``).
    """

    dim: int = 1
    mean_law: str = "uniform"
    lo: float = -1.0
    hi: float = 1.0
    tau: float = 1.0
    component_sigma: float = 1.0
    family: str = "gaussian_location"

    def __post_init__(self):
        if self.family != "gaussian_location":
            raise ValueError(f"unsupported meta family {self.family!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if self.mean_law not in ("uniform", "gaussian"):
            raise ValueError(f"mean_law must be 'uniform' or 'gaussian', got {self.mean_law!r}")
        if self.mean_law == "uniform" and not self.lo <= self.hi:
            raise ValueError("uniform box needs lo <= hi")
        if self.mean_law == "gaussian" and not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.component_sigma >= 0:
            raise ValueError("component_sigma must be non-negative")

    def max_mean_norm(self) -> float:
        """Largest ``||m||`` the meta law produces (gaussian law: ``10 tau`` per coordinate)."""
        if self.mean_law == "uniform":
            r = max(abs(self.lo), abs(self.hi))
        else:
            r = _GAUSS_LAW_RADIUS * self.tau
        return math.sqrt(self.dim) * r


@dataclass(frozen=True)
class LabelFunctional:
    """Regression target of a bag, evaluated on its hidden distribution.

    Kinds:
        ``mean_norm_sq``: ``||m||^2``.
        ``linear_of_mean``: ``A m`` with ``A`` a fixed ``output_dim x dim``
        gaussian matrix drawn from ``matrix_seed``.
        ``gaussian_entropy``: differential entropy ``(d/2) log(2 pi e sigma^2)``.

    ``clip_bound`` is the label bound ``C``; when omitted, :meth:`label_bound`
    derives it from the meta law plus six noise standard deviations.
    """

    kind: str = "mean_norm_sq"
    output_dim: int = 1
    noise_sigma: float = 0.0
    clip_bound: float | None = None
    matrix_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("mean_norm_sq", "gaussian_entropy", "linear_of_mean"):
            raise ValueError(f"unknown label functional {self.kind!r}")
        if self.kind != "linear_of_mean" and self.output_dim != 1:
            raise ValueError(f"{self.kind} is scalar; output_dim must be 1")
        if int(self.output_dim) != self.output_dim or self.output_dim < 1:
            raise ValueError("output_dim must be a positive integer")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.clip_bound is not None and not self.clip_bound > 0:
            raise ValueError("clip_bound must be positive")

    def matrix(self, dim: int) -> np.ndarray:
        """The fixed ``output_dim x dim`` matrix of ``linear_of_mean``."""
        z = _normals(self.matrix_seed, (0, _ROLE_MATRIX, dim), 0, self.output_dim * dim)
        return z.reshape(self.output_dim, dim) / math.sqrt(dim)

    def max_noiseless_norm(self, meta: MetaDistributionSpec) -> float:
        r = meta.max_mean_norm()
        if self.kind == "mean_norm_sq":
            return r * r
        if self.kind == "linear_of_mean":
            return float(np.linalg.norm(self.matrix(meta.dim), 2)) * r
        return abs(_entropy(meta.dim, meta.component_sigma))

    def label_bound(self, meta: MetaDistributionSpec) -> float:
        """The bound ``C``; raises if an explicit one could clip noiseless labels."""
        top = self.max_noiseless_norm(meta)
        if self.clip_bound is None:
            return top + 6.0 * self.noise_sigma * math.sqrt(self.output_dim) or 1.0
        if top > self.clip_bound:
            raise ValueError(
                f"clip_bound {self.clip_bound} is below the largest noiseless label norm {top:.6g}"
            )
        return float(self.clip_bound)


def _entropy(dim: int, sigma: float) -> float:
    if not sigma > 0:
        raise ValueError("entropy of a degenerate gaussian is undefined")
    return 0.5 * dim * math.log(2.0 * math.pi * math.e * sigma * sigma)


def sample_meta(spec: MetaDistributionSpec, l: int, seed: int, stream="train", start: int = 0) -> np.ndarray:
    """Locations ``m_start .. m_{start+l-1}`` as an ``l x dim`` array."""
    if int(l) != l or l < 1:
        raise ValueError("l must be a positive integer")
    d = spec.dim
    key = (_stream_code(stream), _ROLE_META, 0)
    u = uniform_stream(seed, key, start * d, l * d).reshape(l, d)
    if spec.mean_law == "uniform":
        return spec.lo + (spec.hi - spec.lo) * u
    return spec.tau * ndtri(u + _HALF_ULP)


def sample_bag(mean, sigma: float, N: int, seed: int, index: int, stream="train") -> PointBag:
    """Bag ``index``: ``N`` draws from ``N(mean, sigma^2 I)``."""
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    if not sigma >= 0:
        raise ValueError("sigma must be non-negative")
    m = np.atleast_1d(np.asarray(mean, dtype=float))
    d = m.shape[0]
    z = _normals(seed, (_stream_code(stream), _ROLE_BAG, index), 0, N * d).reshape(N, d)
    return PointBag(m + sigma * z)


def sample_bags(params, sigma: float, N: int, seed: int, stream="train", start: int = 0) -> list:
    """One bag of ``N`` points per row of ``params``; bag ``i`` uses index ``start + i``."""
    params = np.atleast_2d(np.asarray(params, dtype=float))
    return [sample_bag(m, sigma, N, seed, start + i, stream) for i, m in enumerate(params)]


def true_regression_value(functional: LabelFunctional, mean, sigma: float) -> np.ndarray:
    """Bayes value ``f_rho`` of the bag distribution ``N(mean, sigma^2 I)``."""
    m = np.atleast_1d(np.asarray(mean, dtype=float))
    if functional.kind == "mean_norm_sq":
        return np.array([float(m @ m)])
    if functional.kind == "linear_of_mean":
        return functional.matrix(m.shape[0]) @ m
    return np.array([_entropy(m.shape[0], sigma)])


def make_dataset(
    meta: MetaDistributionSpec,
    functional: LabelFunctional,
    l: int,
    N: int,
    seed: int,
    stream="train",
):
    """Draw ``l`` labelled bags of ``N`` points.

    Returns ``(dataset, bayes_values)``; labels are the Bayes values plus
    gaussian noise.  A noisy label above the bound ``C`` raises instead of
    being clipped, since clipping would change the regression function.
    """
    C = functional.label_bound(meta)
    means = sample_meta(meta, l, seed, stream)
    sigma = meta.component_sigma
    bags = sample_bags(means, sigma, N, seed, stream)
    bayes = np.vstack([true_regression_value(functional, m, sigma) for m in means])
    labels = bayes.copy()
    if functional.noise_sigma > 0:
        k = functional.output_dim
        noise = _normals(seed, (_stream_code(stream), _ROLE_NOISE, 0), 0, l * k).reshape(l, k)
        labels = labels + functional.noise_sigma * noise
    norms = np.linalg.norm(labels, axis=1)
    if np.any(norms > C):
        raise ValueError(
            f"noisy label norm {norms.max():.6g} exceeds the bound C={C:.6g}; raise clip_bound or lower the noise"
        )
    return LabeledDataset(bags, labels, C), bayes


def population_inner(m_i, m_j, sigma: float, sigma_k: float) -> float:
    """``<mu_x_i, mu_x_j>`` for ``x = N(m, sigma^2 I)`` under a gaussian base kernel of bandwidth ``sigma_k``."""
    mi = np.atleast_1d(np.asarray(m_i, dtype=float))
    mj = np.atleast_1d(np.asarray(m_j, dtype=float))
    d = mi.shape[0]
    s = sigma_k * sigma_k + 2.0 * sigma * sigma
    diff = mi - mj
    return float((sigma_k * sigma_k / s) ** (d / 2) * np.exp(-(diff @ diff) / (2.0 * s)))


def population_point_inner(points, mean, sigma: float, sigma_k: float) -> np.ndarray:
    """``mu_x(u) = <k(., u), mu_x>`` at every row ``u`` of ``points``."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    m = np.atleast_1d(np.asarray(mean, dtype=float))
    d = m.shape[0]
    s = sigma_k * sigma_k + sigma * sigma
    sq = np.sum((P - m) ** 2, axis=1)
    return (sigma_k * sigma_k / s) ** (d / 2) * np.exp(-sq / (2.0 * s))


def embedding_error_norm(bag: PointBag, mean, sigma: float, sigma_k: float) -> float:
    """RKHS distance ``||mu_x - mu_x_hat||`` between a bag and its generating gaussian."""
    base = BaseKernelSpec("gaussian", sigma_k)
    pop = population_inner(mean, mean, sigma, sigma_k)
    emp = embedding_inner(base, bag, bag)
    cross = float(np.mean(population_point_inner(bag.points, mean, sigma, sigma_k)))
    return math.sqrt(max(pop + emp - 2.0 * cross, 0.0))
