"""Independent reference implementations used only by the tests.

Each function recomputes a package quantity a second way: plain python
loops instead of vectorised blocks, an explicit inverse instead of a
Cholesky solve, an eigendecomposition instead of a trace of a solve, and
hand transcriptions of the bound displays written without the package's
term grouping.
"""

import math

import numpy as np


def naive_kernel(family, bw, u, v):
    u = np.atleast_1d(u)
    v = np.atleast_1d(v)
    if family == "gaussian":
        return math.exp(-sum((x - y) ** 2 for x, y in zip(u, v)) / (2 * bw * bw))
    if family == "laplacian":
        return math.exp(-sum(abs(x - y) for x, y in zip(u, v)) / bw)
    return 1.0 / (1.0 + sum((x - y) ** 2 for x, y in zip(u, v)) / (bw * bw))


def naive_gram(family, bw, bag_arrays):
    """Quadruple loop over bag pairs and point pairs."""
    l = len(bag_arrays)
    G = np.zeros((l, l))
    for i in range(l):
        for j in range(l):
            A, B = bag_arrays[i], bag_arrays[j]
            s = 0.0
            for a in A:
                for b in B:
                    s += naive_kernel(family, bw, a, b)
            G[i, j] = s / (len(A) * len(B))
    return G


def inverse_duals(K, Y, lam):
    l = K.shape[0]
    return np.linalg.inv(K + l * lam * np.eye(l)) @ Y


def eig_effective_dimension(K, lam, l):
    w = np.linalg.eigvalsh(K)
    w = np.clip(w, 0.0, None)
    return float(np.sum(w / (w + l * lam)))


def bound_pbc(B_k, B_K, L, h, C, l, N, lam, eta, delta, f_norm, b, c, R, beta):
    """Excess-risk bound for the P(b, c) class, typed directly from its display."""
    Ceta = 32 * math.log(6 / eta) ** 2
    M = 2 * (C + f_norm * math.sqrt(B_K))
    Sig = M / 2
    lf = 1 + math.sqrt(math.log(l) + delta)
    first = 4 * L ** 2 * lf ** (2 * h) * (2 * B_k) ** h / (lam * N ** h)
    brace = Ceta * (
        2 / lam * (M ** 2 * B_K / (l ** 2 * lam) + Sig ** 2 * beta * b / ((b - 1) * l * lam ** (1 / b)))
        + 3 / (4 * lam ** 2) * (4 * B_K ** 2 * R * lam ** (c - 1) / l ** 2 + B_K * R * lam ** c / l)
    )
    bracket = C ** 2 + 4 * B_K * (brace + R * lam ** (c - 1) + f_norm ** 2)
    last = Ceta * (
        B_K ** 2 * R * lam ** (c - 2) / l ** 2
        + B_K * R * lam ** (c - 1) / (4 * l)
        + B_K * M ** 2 / (l ** 2 * lam)
        + Sig ** 2 * beta * b / ((b - 1) * l * lam ** (1 / b))
    )
    return 5 * (first * bracket + R * lam ** c + last)


def bound_misspecified_b(B_k, B_K, L, h, C, l, N, lam, eta, delta, s, Tn, fn, sigma):
    """Square of the root-excess-risk bound under f_rho in Im(T~^s), typed from its display."""
    Ce = math.log(6 / eta)
    Db = max(1, Tn ** (s - 1)) * lam ** min(1, s) * fn
    t1 = (
        2 * L * C * (1 + math.sqrt(math.log(l) + delta)) ** h * (2 * B_k) ** (h / 2)
        / (math.sqrt(lam) * N ** (h / 2))
        * (1 + 2 * math.sqrt(B_K) / math.sqrt(lam))
    )
    inner = (2 * C * math.sqrt(B_K) / l + C * math.sqrt(B_K) / math.sqrt(l)) + (
        2 * B_K / l + sigma / math.sqrt(l)
    ) * (1 / lam) * math.sqrt(max(1, Tn ** s) * lam * fn * Db)
    t2 = 2 * Ce / math.sqrt(lam) * inner
    return (t1 + t2 + Db) ** 2


def bag_threshold(B_k, B_K, L, h, l, lam, delta):
    return (1 + math.sqrt(math.log(l) + delta)) ** 2 * 2 ** ((h + 6) / h) * B_k * B_K ** (1 / h) * L ** (2 / h) / lam ** (2 / h)


def gaussian_convolution_inner(mi, mj, sigma, sigma_k):
    """Population set kernel of two isotropic gaussians, from the product of 1-d integrals."""
    out = 1.0
    for a, b in zip(np.atleast_1d(mi), np.atleast_1d(mj)):
        s2 = sigma_k ** 2 + 2 * sigma ** 2
        out *= sigma_k / math.sqrt(s2) * math.exp(-((a - b) ** 2) / (2 * s2))
    return out
