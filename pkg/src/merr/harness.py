"""Rate-saturation sweeps, concentration experiments and their CSV reports.

A rate experiment walks a grid of bag counts ``l`` and bag-size exponents
``a``.  Each ``(l, a, trial)`` cell draws a training set with the bag size
prescribed by the trade-off schedule, sets ``lambda`` from the matching
rate exponent, fits MERR and measures the excess risk on fresh test bags.

Cells derive their seed from ``(seed, l, trial)`` only, so all values of
``a`` share the same hidden means and the same leading points of every bag.
The curves for different ``a`` then differ only through the bag size.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from ._version import __version__
from .embedding import BaseKernelSpec, concentration_radius
from .outer_kernel import OuterKernelSpec, holder_exponent
from .regressor import cross_validate, excess_risk_estimate, fit, predict
from .storage import config_hash, parse_config
from .synthetic import (
    LabelFunctional,
    MetaDistributionSpec,
    embedding_error_norm,
    make_dataset,
    sample_bag,
    sample_meta,
)
from .theory import (
    bag_size_schedule,
    bag_size_schedule_misspecified,
    rate_exponent_misspecified,
    rate_exponent_wellspecified,
    saturation_threshold_misspecified,
    saturation_threshold_wellspecified,
)

__all__ = [
    "RATE_HEADER",
    "CONFIG_KEYS",
    "CONCENTRATION_HEADER",
    "ExperimentConfig",
    "RateRow",
    "RateReport",
    "cell_seed",
    "resolve_a",
    "run_rate_experiment",
    "fit_loglog_slope",
    "run_concentration_experiment",
    "write_rate_csv",
    "write_slopes_csv",
    "write_concentration_csv",
]

log = logging.getLogger(__name__)

RATE_HEADER = ["l", "a", "trial", "N", "lambda", "excess_risk", "wall_time_ms", "status"]
SLOPE_HEADER = ["a", "slope", "stderr", "n_points", "theory_risk_exponent", "theory_lambda_exponent"]
CONCENTRATION_HEADER = ["N", "alpha", "radius", "frequency", "bound"]


CONFIG_KEYS = (
    "meta.dim", "meta.mean_law", "meta.lo", "meta.hi", "meta.tau", "meta.sigma",
    "label.kind", "label.output_dim", "label.noise_sigma", "label.clip_bound", "label.matrix_seed",
    "base.family", "base.bandwidth", "outer.family", "outer.theta",
    "experiment.l_grid", "experiment.a_values", "experiment.h", "experiment.schedule",
    "experiment.trials", "experiment.n_test", "experiment.N_test", "experiment.seed",
    "experiment.method", "lambda.rule", "lambda.scale", "lambda.cv_folds",
    "prior.b", "prior.c", "prior.s",
    "concentration.N_grid", "concentration.alpha", "concentration.trials",
)


def _ints(text: str) -> tuple:
    out = []
    for v in text.split(","):
        v = v.strip()
        if not v:
            continue
        f = float(v)
        if f != int(f):
            raise ValueError(f"expected an integer, got {v!r}")
        out.append(int(f))
    return tuple(out)


def resolve_a(token: str, threshold: float) -> float:
    """Turn an ``a`` token into a number.

    Accepted forms: a literal number, ``threshold``, ``threshold+x``,
    ``threshold-x`` and ``threshold*x``.
    """
    t = token.strip().replace(" ", "")
    if not t.startswith("threshold"):
        return float(t)
    rest = t[len("threshold"):]
    if not rest:
        return float(threshold)
    op, num = rest[0], float(rest[1:])
    if op == "+":
        return threshold + num
    if op == "-":
        return threshold - num
    if op == "*":
        return threshold * num
    raise ValueError(f"cannot parse a-value {token!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed experiment configuration.

    Built from a flat ``key=value`` mapping (see :meth:`from_mapping` for
    the keys); ``raw`` keeps the mapping so the report can carry its hash.
    """

    meta: MetaDistributionSpec
    functional: LabelFunctional
    base: BaseKernelSpec
    outer: OuterKernelSpec
    l_grid: tuple
    a_tokens: tuple
    h: float
    schedule: str = "wellspecified"
    lambda_rule: str = "rate"
    lambda_scale: float = 0.01
    prior_b: float = 2.0
    prior_c: float = 2.0
    prior_s: float = 1.0
    trials: int = 1
    n_test: int = 50
    N_test: int | None = None
    seed: int = 0
    method: str = "auto"
    cv_folds: int = 5
    conc_N_grid: tuple = (25, 100, 400)
    conc_alpha: float = 3.0
    conc_trials: int = 500
    raw: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.l_grid or not self.a_tokens:
            raise ValueError("l_grid and a_values must be non-empty")
        if any(l < 2 for l in self.l_grid):
            raise ValueError("every l in l_grid must be at least 2")
        if self.trials < 1 or self.n_test < 1:
            raise ValueError("trials and n_test must be at least 1")
        if self.N_test is not None and self.N_test < 1:
            raise ValueError("N_test must be at least 1")
        if self.schedule not in ("wellspecified", "misspecified"):
            raise ValueError(f"schedule must be 'wellspecified' or 'misspecified', got {self.schedule!r}")
        if self.lambda_rule not in ("rate", "cv"):
            raise ValueError(f"lambda rule must be 'rate' or 'cv', got {self.lambda_rule!r}")
        if not self.lambda_scale > 0:
            raise ValueError("lambda scale must be positive")
        h_kernel = float(holder_exponent(self.outer))
        if abs(float(self.h) - h_kernel) > 1e-12:
            raise ValueError(f"configured h={self.h} does not match the outer kernel's Hoelder exponent {h_kernel}")
        if not self.conc_N_grid or self.conc_trials < 1 or not self.conc_alpha > 0:
            raise ValueError("invalid concentration settings")
        self.threshold()
        for a in self.a_values():
            if not a > 0:
                raise ValueError(f"a-values must be positive, got {a}")

    @classmethod
    def from_mapping(cls, cfg: dict) -> "ExperimentConfig":
        """Build a config from parsed ``key=value`` pairs; see ``CONFIG_KEYS``.

        Every key is optional except ``experiment.l_grid`` and
        ``experiment.a_values``.  Unknown keys are rejected.
        """
        g = cfg.get
        unknown = sorted(k for k in cfg if k not in CONFIG_KEYS)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        meta = MetaDistributionSpec(
            dim=int(g("meta.dim", 1)),
            mean_law=g("meta.mean_law", "uniform"),
            lo=float(g("meta.lo", -1.0)),
            hi=float(g("meta.hi", 1.0)),
            tau=float(g("meta.tau", 1.0)),
            component_sigma=float(g("meta.sigma", 0.5)),
        )
        clip = g("label.clip_bound")
        functional = LabelFunctional(
            kind=g("label.kind", "mean_norm_sq"),
            output_dim=int(g("label.output_dim", 1)),
            noise_sigma=float(g("label.noise_sigma", 0.1)),
            clip_bound=None if clip in (None, "", "auto") else float(clip),
            matrix_seed=int(g("label.matrix_seed", 0)),
        )
        base = BaseKernelSpec(g("base.family", "gaussian"), float(g("base.bandwidth", 1.0)))
        outer = OuterKernelSpec(g("outer.family", "linear"), float(g("outer.theta", 1.0)))
        if "experiment.l_grid" not in cfg or "experiment.a_values" not in cfg:
            raise ValueError("config must set experiment.l_grid and experiment.a_values")
        a_tokens = tuple(t.strip() for t in cfg["experiment.a_values"].split(",") if t.strip())
        N_test = g("experiment.N_test")
        return cls(
            meta=meta,
            functional=functional,
            base=base,
            outer=outer,
            l_grid=_ints(cfg["experiment.l_grid"]),
            a_tokens=a_tokens,
            h=float(g("experiment.h", float(holder_exponent(outer)))),
            schedule=g("experiment.schedule", "wellspecified"),
            lambda_rule=g("lambda.rule", "rate"),
            lambda_scale=float(g("lambda.scale", 0.01)),
            prior_b=float(g("prior.b", 2.0)),
            prior_c=float(g("prior.c", 2.0)),
            prior_s=float(g("prior.s", 1.0)),
            trials=int(g("experiment.trials", 1)),
            n_test=int(g("experiment.n_test", 50)),
            N_test=None if N_test in (None, "", "auto") else int(N_test),
            seed=int(g("experiment.seed", 0)),
            method=g("experiment.method", "auto"),
            cv_folds=int(g("lambda.cv_folds", 5)),
            conc_N_grid=_ints(g("concentration.N_grid", "25,100,400")),
            conc_alpha=float(g("concentration.alpha", 3.0)),
            conc_trials=int(g("concentration.trials", 500)),
            raw=dict(cfg),
        )

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_mapping(parse_config(path))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        raw = dict(self.raw)
        raw["experiment.seed"] = str(seed)
        return replace(self, seed=int(seed), raw=raw)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def threshold(self) -> float:
        if self.schedule == "wellspecified":
            rate_exponent_wellspecified(1.0, self.prior_b, self.prior_c)
            return saturation_threshold_wellspecified(self.prior_b, self.prior_c)
        rate_exponent_misspecified(1.0, self.prior_s)
        return saturation_threshold_misspecified(self.prior_s)

    def a_values(self) -> tuple:
        th = self.threshold()
        return tuple(resolve_a(t, th) for t in self.a_tokens)

    def bag_size(self, l: int, a: float) -> int:
        if self.schedule == "wellspecified":
            return bag_size_schedule(l, a, self.h)
        return bag_size_schedule_misspecified(l, a, self.h)

    def exponents(self, a: float):
        if self.schedule == "wellspecified":
            return rate_exponent_wellspecified(a, self.prior_b, self.prior_c)
        return rate_exponent_misspecified(a, self.prior_s)

    def rate_lambda(self, l: int, a: float) -> float:
        return self.lambda_scale * float(l) ** self.exponents(a)[1]


@dataclass(frozen=True)
class RateRow:
    l: int
    a: float
    trial: int
    N: int
    lam: float
    excess_risk: float
    wall_time_ms: float
    status: str

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class RateReport:
    """Rows of a sweep plus one fitted log-log slope per ``a``.

    ``slopes`` maps ``a`` to ``(slope, stderr, n_points, theory_risk_exponent,
    theory_lambda_exponent)``; slope fields are NaN when fewer than three
    ``l`` values have a finite positive mean risk.
    """

    rows: list
    slopes: dict
    config_hash: str
    version: str = __version__

    def mean_curve(self, a: float) -> dict:
        """``{l: mean excess risk}`` over the successful trials of one ``a``."""
        by_l = {}
        for r in self.rows:
            if r.a == a and r.ok:
                by_l.setdefault(r.l, []).append(r.excess_risk)
        return {l: float(np.mean(v)) for l, v in sorted(by_l.items())}


def cell_seed(seed: int, l: int, trial: int) -> int:
    """Seed of one sweep cell; independent of ``a`` so curves share randomness."""
    state = np.random.SeedSequence([int(seed), int(l), int(trial)]).generate_state(1, np.uint64)[0]
    return int(state)


def _run_cell(cfg: ExperimentConfig, l: int, a: float, trial: int) -> RateRow:
    N = cfg.bag_size(l, a)
    lam = float("nan")
    t0 = time.perf_counter()
    try:
        seed = cell_seed(cfg.seed, l, trial)
        train, _ = make_dataset(cfg.meta, cfg.functional, l, N, seed, "train")
        if cfg.lambda_rule == "rate":
            lam = cfg.rate_lambda(l, a)
        else:
            lam, _ = cross_validate(
                train, cfg.base, cfg.outer, folds=min(cfg.cv_folds, l), seed=seed, method=cfg.method
            )
        model = fit(train, cfg.base, cfg.outer, lam, method=cfg.method)
        N_test = cfg.N_test if cfg.N_test is not None else 10 * N
        test, bayes = make_dataset(cfg.meta, cfg.functional, cfg.n_test, N_test, seed, "test")
        pred = predict(model, test.bags)
        risk = excess_risk_estimate(pred, bayes, cfg.functional.noise_sigma ** 2)
        if not math.isfinite(risk):
            raise FloatingPointError("non-finite excess risk")
        status = "ok"
    except Exception as exc:  # a failed cell is reported, the sweep goes on
        log.warning("cell l=%d a=%g trial=%d failed: %s", l, a, trial, exc)
        risk = float("nan")
        status = "failed:" + type(exc).__name__
    wall = 1000.0 * (time.perf_counter() - t0)
    return RateRow(l, float(a), trial, N, float(lam), float(risk), wall, status)


def run_rate_experiment(cfg: ExperimentConfig, threads: int = 1, progress=None) -> RateReport:
    """Run every ``(l, a, trial)`` cell; rows come back sorted by ``(l, a, trial)``."""
    cells = [(l, a, t) for l in cfg.l_grid for a in cfg.a_values() for t in range(cfg.trials)]

    def work(cell):
        row = _run_cell(cfg, *cell)
        if progress is not None:
            progress(row)
        return row

    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(work, cells))
    else:
        rows = [work(c) for c in cells]
    rows.sort(key=lambda r: (r.l, r.a, r.trial))

    report = RateReport(rows=rows, slopes={}, config_hash=cfg.hash)
    for a in cfg.a_values():
        risk_exp, lam_exp = cfg.exponents(a)
        curve = report.mean_curve(a)
        pts = [(l, r) for l, r in curve.items() if r > 0 and math.isfinite(r)]
        if len(pts) >= 3:
            slope, err = fit_loglog_slope(pts)
        else:
            slope, err = float("nan"), float("nan")
        report.slopes[a] = (slope, err, len(pts), float(risk_exp), float(lam_exp))
    return report


def fit_loglog_slope(points):
    """OLS slope of ``log(risk)`` on ``log(l)`` and its standard error."""
    pts = list(points)
    if len(pts) < 3:
        raise ValueError("need at least three points for a slope")
    x = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts], dtype=float)
    if np.any(~(x > 0)) or np.any(~(y > 0)):
        raise ValueError("l and risk values must be positive")
    if np.ptp(x) == 0:
        raise ValueError("l values must not all be equal")
    res = stats.linregress(np.log(x), np.log(y))
    return float(res.slope), float(res.stderr)


def run_concentration_experiment(cfg: ExperimentConfig, threads: int = 1):
    """Exceedance frequency of ``||mu_x - mu_x_hat|| > radius(N, alpha)`` for each ``N``.

    The RKHS distance is exact: it uses the gaussian closed form of the
    population embedding, so the base kernel must be gaussian.  Returns
    rows ``(N, alpha, radius, frequency, bound)``.
    """
    if cfg.base.family != "gaussian":
        raise ValueError("the concentration experiment needs a gaussian base kernel")
    alpha = cfg.conc_alpha
    sigma = cfg.meta.component_sigma
    bw = cfg.base.bandwidth

    def one(N):
        seed = cell_seed(cfg.seed, N, 0)
        means = sample_meta(cfg.meta, cfg.conc_trials, seed, "conc")
        radius = concentration_radius(cfg.base.bound, N, alpha)
        hits = 0
        for t, m in enumerate(means):
            bag = sample_bag(m, sigma, N, seed, t, "conc")
            if embedding_error_norm(bag, m, sigma, bw) > radius:
                hits += 1
        return (N, alpha, radius, hits / cfg.conc_trials, math.exp(-alpha))

    grid = list(cfg.conc_N_grid)
    if threads > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, grid))
    return [one(N) for N in grid]


def _comment(config_hash_: str) -> str:
    return f"# merr {__version__} config_sha256={config_hash_}\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return "NA" if math.isnan(v) else repr(v)
    return str(v)


def write_rate_csv(report: RateReport, path, timing: bool = False) -> None:
    """Write the per-cell CSV and a ``<path>.timing.csv`` sidecar with wall times.

    The main file stays byte-identical across runs unless ``timing`` puts
    the measured wall times into its ``wall_time_ms`` column.
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(_comment(report.config_hash))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RATE_HEADER)
        for r in report.rows:
            wall = _fmt(round(r.wall_time_ms, 3)) if timing else "NA"
            w.writerow([r.l, _fmt(r.a), r.trial, r.N, _fmt(r.lam), _fmt(r.excess_risk), wall, r.status])
    with open(str(path) + ".timing.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["l", "a", "trial", "N", "wall_time_ms"])
        for r in report.rows:
            w.writerow([r.l, _fmt(r.a), r.trial, r.N, _fmt(round(r.wall_time_ms, 3))])


def write_slopes_csv(report: RateReport, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_comment(report.config_hash))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SLOPE_HEADER)
        for a in sorted(report.slopes):
            slope, err, n, re, le = report.slopes[a]
            w.writerow([_fmt(float(a)), _fmt(slope), _fmt(err), n, _fmt(re), _fmt(le)])


def write_concentration_csv(rows, path, config_hash_: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_comment(config_hash_))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONCENTRATION_HEADER)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
