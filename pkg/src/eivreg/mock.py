"""Mock straight-line datasets and the bias-measurement harness built on them.

Each replicate draws true abscissae, scatters them and the line values with
per-point errors plus intrinsic scatter, fits the posterior and records the
bias ``(estimate - truth) / width`` for slope, intercept and scatter.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import LikelihoodSpec, ValidationError, validate_dataset
from .inference import SamplerConfig, sample_posterior, sigma_int_summary
from .models import linear

log = logging.getLogger(__name__)

XT_DISTS = ("exponential", "uniform", "triangular")
X_RANGE = (0.0, 30.0)

# parameters varied by the sweeps and the grid, with their full ranges
SWEEP_RANGES = {
    "slope": (-30.0, 30.0),
    "sigma_int": (0.0, 20.0),
    "n_points": (10, 4000),
    "sigma_x_mean": (0.0, 20.0),
    "scale_length": (1.0, 15.0),
}
BIAS_PARAMS = ("A", "B", "sigma_int")


@dataclass(frozen=True)
class MockConfig:
    """Generating parameters for one mock dataset.

    Per-point errors are drawn as ``sigma_x ~ N(sigma_x_mean, sigma_x_spread)``
    and ``sigma_y ~ N(sigma_y_mean, sigma_y_spread)``, redrawing negative
    values. ``sigma_x_spread=None`` means one fifth of ``sigma_x_mean``.
    The defaults are the fiducial setup.
    """

    slope: float = 5.0
    intercept: float = 1.0
    sigma_int: float = 2.0
    n_points: int = 1000
    xt_dist: str = "exponential"
    scale_length: float = 8.0
    sigma_x_mean: float = 1.0
    sigma_y_mean: float = 2.0
    sigma_x_spread: Optional[float] = None
    sigma_y_spread: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValidationError("n_points must be an integer >= 2")
        if self.xt_dist not in XT_DISTS:
            raise ValidationError(f"xt_dist must be one of {XT_DISTS}")
        if self.sigma_x_mean < 0 or self.sigma_y_mean < 0 or self.sigma_int < 0:
            raise ValidationError("error sizes and intrinsic scatter must be non-negative")
        if self.xt_dist == "exponential" and self.scale_length <= 0:
            raise ValidationError("scale_length must be positive")
        if self.sigma_y_spread < 0 or (self.sigma_x_spread is not None and self.sigma_x_spread < 0):
            raise ValidationError("error spreads must be non-negative")

    @property
    def x_spread(self) -> float:
        return self.sigma_x_mean / 5.0 if self.sigma_x_spread is None else self.sigma_x_spread

    def truth(self) -> dict:
        return {"A": self.slope, "B": self.intercept, "sigma_int": self.sigma_int}


FIDUCIAL = MockConfig()


@dataclass(frozen=True)
class MockTruth:
    x_true: np.ndarray
    y_true: np.ndarray
    config: MockConfig

    @property
    def params(self) -> dict:
        return self.config.truth()


def _positive_normal(rng, mean, sd, n):
    out = rng.normal(mean, sd, n) if sd > 0 else np.full(n, float(mean))
    bad = out < 0
    while bad.any():
        out[bad] = rng.normal(mean, sd, int(bad.sum()))
        bad = out < 0
    return out


def draw_true_x(rng, cfg: MockConfig, n=None):
    n = cfg.n_points if n is None else n
    lo, hi = X_RANGE
    if cfg.xt_dist == "exponential":
        return rng.exponential(cfg.scale_length, n)
    if cfg.xt_dist == "uniform":
        return rng.uniform(lo, hi, n)
    # density rising linearly from zero at lo: inverse CDF
    return lo + (hi - lo) * np.sqrt(rng.uniform(0.0, 1.0, n))


def gen_mock(cfg: MockConfig = FIDUCIAL):
    """Draw one dataset; returns ``(Dataset, MockTruth)``.

    Fully determined by ``cfg`` (including ``cfg.seed``).
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_points
    x_t = draw_true_x(rng, cfg)
    y_t = cfg.slope * x_t + cfg.intercept
    sx = _positive_normal(rng, cfg.sigma_x_mean, cfg.x_spread, n)
    sy = _positive_normal(rng, cfg.sigma_y_mean, cfg.sigma_y_spread, n)
    x_o = x_t + sx * rng.standard_normal(n)
    y_o = y_t + np.sqrt(sy**2 + cfg.sigma_int**2) * rng.standard_normal(n)
    return validate_dataset(x_o, y_o, sx, sy), MockTruth(x_t, y_t, cfg)


# --- bias statistic ----------------------------------------------------------------

def bias_of_fit(posterior, truth: dict, slope_name="A", intercept_name="B") -> dict:
    """Bias of each parameter in units of its posterior width.

    Slope and intercept use ``(mean - truth) / std``; the scatter uses the
    mode and scale of a zero-truncated normal fitted to its samples. A zero
    width gives an infinite bias and a warning.
    """
    out = {}
    for key, name in (("A", slope_name), ("B", intercept_name)):
        col = posterior.column(name)
        out[key] = _ratio(col.mean() - truth[key], col.std(ddof=1), key)
    if "sigma_int" in posterior.param_names:
        mode, scale = sigma_int_summary(posterior.column("sigma_int"))
        out["sigma_int"] = _ratio(mode - truth["sigma_int"], scale, "sigma_int")
    return out


def _ratio(num, den, name):
    if den > 0:
        return float(num / den)
    warnings.warn(f"zero posterior width for {name}; bias is infinite", RuntimeWarning, stacklevel=3)
    return float(np.copysign(np.inf, num)) if num != 0 else np.inf


@dataclass
class BiasReport:
    """Bias samples over replicates for one setup and method."""

    biases: dict = field(default_factory=lambda: {p: [] for p in BIAS_PARAMS})
    n_requested: int = 0
    failures: list = field(default_factory=list)

    @property
    def n_ok(self) -> int:
        return len(next(iter(self.biases.values()))) if self.biases else 0

    def add(self, b: dict):
        for p in BIAS_PARAMS:
            self.biases.setdefault(p, []).append(b.get(p, np.nan))

    def summary(self) -> dict:
        """Per parameter: median, 16th/84th percentiles and mean of the biases."""
        out = {}
        for p, vals in self.biases.items():
            v = np.asarray(vals, dtype=float)
            v = v[np.isfinite(v)]
            if v.size == 0:
                out[p] = {"median": np.nan, "p16": np.nan, "p84": np.nan, "mean": np.nan, "n": 0}
                continue
            p16, p50, p84 = np.percentile(v, [16, 50, 84])
            out[p] = {"median": float(p50), "p16": float(p16), "p84": float(p84), "mean": float(v.mean()),
                      "n": int(v.size)}
        return out


def _replicate_seed(seed, *key):
    return int(np.random.SeedSequence([int(seed), *[int(k) for k in key]]).generate_state(1)[0])


def run_replicates(cfg: MockConfig, methods: Sequence[str] = ("mnr",), replicates: int = 30,
                   sampler: SamplerConfig = None, seed: int = 0, cell: int = 0, n_gauss: int = 1,
                   hyperprior: str = "uniform-ordered", deadline: float = None) -> dict:
    """Fit ``replicates`` fresh mocks of ``cfg`` with each method.

    Replicate ``r`` of cell ``cell`` uses a seed derived from
    ``(seed, cell, r)``, so results do not depend on execution order.
    Failed fits are logged and counted, not raised. Replicates stop early
    once ``time.monotonic()`` passes ``deadline``.
    """
    sampler = sampler or SamplerConfig()
    reports = {m: BiasReport(n_requested=replicates) for m in methods}
    for r in range(replicates):
        if _expired(deadline):
            break
        d, truth = gen_mock(dataclasses.replace(cfg, seed=_replicate_seed(seed, cell, r, 0)))
        for j, m in enumerate(methods):
            spec = LikelihoodSpec(m, n_gauss if m == "gmm" else 1, hyperprior if m == "gmm" else "uniform-ordered")
            scfg = dataclasses.replace(sampler, seed=_replicate_seed(seed, cell, r, j + 1))
            try:
                post = sample_posterior(spec, d, linear(), scfg, compute_mle=False)
                reports[m].add(bias_of_fit(post, truth.params))
            except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
                log.warning("replicate %d (%s) failed: %s", r, m, exc)
                reports[m].failures.append((r, str(exc)))
    return reports


def _expired(deadline):
    return deadline is not None and time.monotonic() > deadline


def sweep_grid(param: str, n_points: int = 20):
    lo, hi = SWEEP_RANGES[param]
    grid = np.linspace(lo, hi, n_points)
    if param == "n_points":
        grid = np.unique(np.round(grid).astype(int))
    return grid


def _with(cfg, **kw):
    if "n_points" in kw:
        kw["n_points"] = int(kw["n_points"])
    return dataclasses.replace(cfg, **kw)


def run_1d_sweep(param: str, grid=None, methods=("mnr", "unif", "prof"), replicates: int = 30,
                 base: MockConfig = FIDUCIAL, sampler: SamplerConfig = None, seed: int = 0,
                 deadline: float = None) -> dict:
    """Vary one generating parameter over ``grid`` with the rest at ``base``.

    Returns ``{(value, method): BiasReport}``. The default grid has 20 equal
    steps over the parameter's full range.
    """
    if param not in SWEEP_RANGES:
        raise ValidationError(f"cannot sweep {param!r}; choose from {tuple(SWEEP_RANGES)}")
    grid = sweep_grid(param) if grid is None else grid
    out = {}
    for i, v in enumerate(grid):
        if _expired(deadline):
            break
        reps = run_replicates(_with(base, **{param: v}), methods, replicates, sampler, seed, cell=i,
                              deadline=deadline)
        for m, rep in reps.items():
            out[(float(v), m)] = rep
    return out


@dataclass
class GridResult:
    """Per-cell bias reports plus the cells with the extreme mean biases."""

    cells: list            # [(coords dict, method, BiasReport)]
    extremal: dict         # {(method, param): {"max": (coords, mean), "min": (coords, mean)}}


def run_5d_grid(methods=("mnr", "unif", "prof"), points_per_dim: int = 5, replicates: int = 30,
                base: MockConfig = FIDUCIAL, sampler: SamplerConfig = None, seed: int = 0,
                ranges: dict = None, deadline: float = None) -> GridResult:
    """Full grid over slope, scatter, sample size, x-error size and scale length.

    Extremal cells (largest and smallest mean bias per method and parameter)
    are found from the results rather than fixed in advance.
    """
    ranges = dict(SWEEP_RANGES, **(ranges or {}))
    axes = {}
    for p, (lo, hi) in ranges.items():
        vals = np.linspace(lo, hi, points_per_dim)
        axes[p] = np.unique(np.round(vals).astype(int) if p == "n_points" else vals)
    names = list(axes)
    cells = []
    for i, combo in enumerate(itertools.product(*(axes[n] for n in names))):
        if _expired(deadline):
            break
        coords = {n: (int(v) if n == "n_points" else float(v)) for n, v in zip(names, combo)}
        reps = run_replicates(_with(base, **coords), methods, replicates, sampler, seed, cell=i,
                              deadline=deadline)
        for m, rep in reps.items():
            cells.append((coords, m, rep))
    extremal = {}
    for m in methods:
        for p in BIAS_PARAMS:
            scored = [(c, r.summary()[p]["mean"]) for c, mm, r in cells if mm == m]
            scored = [s for s in scored if np.isfinite(s[1])]
            if scored:
                extremal[(m, p)] = {"max": max(scored, key=lambda s: s[1]), "min": min(scored, key=lambda s: s[1])}
    return GridResult(cells, extremal)


def run_gmm_study(cells: Sequence[MockConfig] = (FIDUCIAL,), ng_range=range(1, 11), replicates: int = 30,
                  hyperprior: str = "uniform-ordered", sampler: SamplerConfig = None, seed: int = 0,
                  deadline: float = None) -> list:
    """Bias as a function of the number of mixture components.

    For every cell and replicate, each N_g in ``ng_range`` is sampled and its
    BIC recorded; the BIC-minimising N_g per replicate forms an extra
    ``"bic"`` column. Returns one dict per cell with keys ``config``,
    ``reports`` (N_g or ``"bic"`` -> BiasReport) and ``selected`` (list of
    chosen N_g).
    """
    sampler = sampler or SamplerConfig()
    ng_range = list(ng_range)
    results = []
    for ci, cfg in enumerate(cells):
        reports = {ng: BiasReport(n_requested=replicates) for ng in ng_range}
        reports["bic"] = BiasReport(n_requested=replicates)
        selected = []
        for r in range(replicates):
            if _expired(deadline):
                break
            d, truth = gen_mock(dataclasses.replace(cfg, seed=_replicate_seed(seed, ci, r, 0)))
            best = None
            for ng in ng_range:
                spec = LikelihoodSpec("gmm", ng, hyperprior)
                scfg = dataclasses.replace(sampler, seed=_replicate_seed(seed, ci, r, ng))
                try:
                    post = sample_posterior(spec, d, linear(), scfg)
                except (ValueError, np.linalg.LinAlgError) as exc:
                    log.warning("cell %d replicate %d N_g=%d failed: %s", ci, r, ng, exc)
                    reports[ng].failures.append((r, str(exc)))
                    continue
                b = bias_of_fit(post, truth.params)
                reports[ng].add(b)
                if np.isfinite(post.bic) and (best is None or post.bic < best[0]):
                    best = (post.bic, ng, b)
            if best is not None:
                selected.append(best[1])
                reports["bic"].add(best[2])
        results.append({"config": cfg, "reports": reports, "selected": selected})
    return results


# --- tables --------------------------------------------------------------------------

CSV_COLUMNS = ("method", "parameter", "median", "p16", "p84", "mean", "n")


def bias_rows(entries) -> list:
    """Flatten ``[(coords dict, method, BiasReport)]`` into CSV-ready dicts."""
    rows = []
    for coords, method, rep in entries:
        for p, s in rep.summary().items():
            rows.append(dict(coords, method=method, parameter=p, **s))
    return rows


def write_bias_csv(rows, path, meta: dict = None):
    """Write bias rows as CSV; ``meta`` goes into a leading ``#`` comment line."""
    coord_cols = []
    for r in rows:
        for k in r:
            if k not in CSV_COLUMNS and k not in coord_cols:
                coord_cols.append(k)
    cols = coord_cols + list(CSV_COLUMNS)
    with open(path, "w", newline="") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in cols})
