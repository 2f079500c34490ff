"""Command-line interface: ``fit``, ``sample``, ``bias-bench`` and ``assess-causality``.

Configuration is a plain ``key = value`` file (``#`` starts a comment, no
section headers needed). Any key can be overridden with ``--set key=value``;
``--seed`` and ``--out`` override ``seed`` and ``out``. Recognised keys:

data            CSV file with a header row
x_col, y_col    column names for the observations (default ``x``, ``y``)
sx_col, sy_col  column names for the errors (default ``sx``, ``sy``)
cov             optional CSV holding the full 2N x 2N covariance (x block first)
model           ``linear`` (default), ``power-law-log`` or ``expr``
expression      model expression in ``x`` when ``model = expr``
params          comma-separated parameter names for ``expr``
defaults        comma-separated starting values for ``expr``
method          ``mnr`` (default), ``unif``, ``prof`` or ``gmm``
n_gauss         mixture size for ``gmm``
hyperprior      ``uniform-ordered`` or ``hierarchical``
intrinsic_scatter  ``true``/``false``
n_warmup, n_samples, n_chains, metric, target_accept, max_tree_depth
                sampler settings
bound.NAME      ``lo, hi`` prior bounds (use ``inf``/``-inf`` for open ends)
seed, out       random seed and output directory

``bias-bench`` additionally reads ``mode`` (``sweep``, ``grid`` or ``gmm``),
``sweep_param``, ``sweep_points``, ``grid_points``, ``replicates``,
``methods``, ``ng_max``, ``max_seconds`` and any mock setting prefixed with
``mock.`` (for example ``mock.n_points = 500``). ``assess-causality`` reads
the inverse-direction model from keys prefixed with ``inverse.`` (for
example ``inverse.model = expr``).

Exit status is 0 on success, 1 on a runtime failure and 2 on invalid input.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .causality import assess_causality
from .core import LikelihoodSpec, ValidationError, validate_dataset
from .inference import (SamplerConfig, bic, fit_mle, n_free_params, sample_posterior,
                        sigma_int_summary)
from .mock import (FIDUCIAL, MockConfig, bias_rows, run_1d_sweep, run_5d_grid, run_gmm_study,
                   sweep_grid, write_bias_csv)
from .models import BUILTIN_MODELS, expression_model

log = logging.getLogger("eivreg")

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2
_SECTION = "run"


class ConfigError(ValidationError):
    """Malformed configuration or input files."""


# --- configuration ---------------------------------------------------------------------

def read_config(path=None, overrides=()) -> dict:
    """Parse the key-value file and apply ``key=value`` overrides."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                       comment_prefixes=("#", ";"), delimiters=("=",))
    parser.optionxform = str
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        parser.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = dict(parser[_SECTION])
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        cfg[k.strip()] = v.strip()
    return cfg


def config_hash(cfg: dict) -> str:
    """Short digest of the run settings; the output location is not part of it."""
    run = {k: v for k, v in cfg.items() if k != "out"}
    return hashlib.sha256(json.dumps(run, sort_keys=True).encode()).hexdigest()[:16]


def _get(cfg, key, cast=str, default=None):
    if key not in cfg or cfg[key] == "":
        return default
    try:
        if cast is bool:
            v = cfg[key].lower()
            if v not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return v in ("true", "1", "yes")
        return cast(cfg[key])
    except ValueError:
        raise ConfigError(f"config key {key!r} has invalid value {cfg[key]!r}") from None


def _list(cfg, key, cast=str, default=()):
    raw = cfg.get(key)
    if not raw:
        return list(default)
    try:
        return [cast(p.strip()) for p in raw.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"config key {key!r} has invalid list {raw!r}") from None


def build_model(cfg):
    kind = _get(cfg, "model", str, "linear")
    if kind in BUILTIN_MODELS:
        return BUILTIN_MODELS[kind]()
    if kind != "expr":
        raise ConfigError(f"unknown model {kind!r}; use one of {sorted(BUILTIN_MODELS)} or 'expr'")
    expr = _get(cfg, "expression")
    names = _list(cfg, "params")
    if not expr or not names:
        raise ConfigError("model = expr needs 'expression' and 'params'")
    defaults = _list(cfg, "defaults", float) or None
    if defaults is not None and len(defaults) != len(names):
        raise ConfigError("'defaults' must list one value per parameter")
    try:
        return expression_model(expr, names, defaults)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_spec(cfg) -> LikelihoodSpec:
    return LikelihoodSpec(_get(cfg, "method", str, "mnr"), _get(cfg, "n_gauss", int, 1),
                          _get(cfg, "hyperprior", str, "uniform-ordered"),
                          _get(cfg, "intrinsic_scatter", bool, True))


def build_sampler(cfg, seed) -> SamplerConfig:
    bounds = {}
    for k, v in cfg.items():
        if k.startswith("bound."):
            parts = _list(cfg, k, float)
            if len(parts) != 2:
                raise ConfigError(f"{k} must be 'lo, hi'")
            bounds[k[len("bound."):]] = tuple(parts)
    return SamplerConfig(_get(cfg, "n_warmup", int, 700), _get(cfg, "n_samples", int, 5000),
                         _get(cfg, "n_chains", int, 2), seed, bounds,
                         _get(cfg, "target_accept", float, 0.8), _get(cfg, "max_tree_depth", int, 10),
                         _get(cfg, "metric", str, "dense"))


def load_data(cfg):
    """Read the observations CSV (and optional covariance) into a Dataset."""
    path = _get(cfg, "data")
    if not path:
        raise ConfigError("no 'data' file given")
    cols = {k: _get(cfg, f"{k}_col", str, k) for k in ("x", "y", "sx", "sy")}
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read data file {path}: {exc.strerror}") from None
    if not rows:
        raise ConfigError(f"data file {path} is empty")
    header = [h.strip() for h in rows[0]]
    cov_path = _get(cfg, "cov")
    need = ["x", "y"] if cov_path else ["x", "y", "sx", "sy"]
    for k in need:
        if cols[k] not in header:
            raise ConfigError(f"missing column {cols[k]!r} in {path}")

    def column(name):
        i = header.index(name)
        try:
            return np.array([float(r[i]) for r in rows[1:]])
        except (ValueError, IndexError):
            raise ConfigError(f"column {name!r} contains non-numeric or missing values") from None

    x, y = column(cols["x"]), column(cols["y"])
    if cov_path:
        try:
            cov = np.loadtxt(cov_path, delimiter=",", ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read covariance {cov_path}: {exc}") from None
        return validate_dataset(x, y, full_cov=cov)
    return validate_dataset(x, y, column(cols["sx"]), column(cols["sy"]))


# --- output helpers -----------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v) if np.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def write_json(obj, path, meta):
    payload = dict(_jsonable(obj))
    payload["_meta"] = meta
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _meta(cfg, seed, command):
    return {"config_hash": config_hash(cfg), "seed": seed, "command": command, "version": __version__}


# --- commands -------------------------------------------------------------------------------

def cmd_fit(cfg, seed, out: Path):
    d = load_data(cfg)
    model = build_model(cfg)
    spec = build_spec(cfg)
    sampler = build_sampler(cfg, seed)
    res = fit_mle(spec, d, model, bounds=sampler.prior_bounds)
    payload = dict(res.params.as_dict())
    payload.update(loglike=res.loglike, method=spec.method, converged=res.converged, warnings=res.warnings,
                   bic=bic(res.loglike, n_free_params(spec, model), d.n), n_points=d.n)
    write_json(payload, out / "fit.json", _meta(cfg, seed, "fit"))
    return payload


def cmd_sample(cfg, seed, out: Path):
    d = load_data(cfg)
    model = build_model(cfg)
    spec = build_spec(cfg)
    scfg = build_sampler(cfg, seed)
    post = sample_posterior(spec, d, model, scfg)
    summary = post.summary()
    for n in post.param_names:
        summary[n].update(rhat=post.gelman_rubin[n], ess=post.ess[n])
    payload = {"params": summary, "bic": post.bic, "warnings": post.warnings, "method": spec.method,
               "divergences": post.divergences, "loglike_at_mle": post.log_like_at_mle,
               "mle": post.mle.as_dict() if post.mle is not None else None, "n_points": d.n}
    if "sigma_int" in post.param_names:
        mode, scale = sigma_int_summary(post.column("sigma_int"))
        payload["sigma_int_truncated"] = {"mode": mode, "scale": scale}
    if model.name == "power-law-log":
        derived = np.exp(post.column("log_1mb"))
        payload["derived"] = {"one_minus_b": {"mean": float(derived.mean()), "std": float(derived.std(ddof=1)),
                                              "median": float(np.median(derived))}}
    meta = _meta(cfg, seed, "sample")
    write_json(payload, out / "summary.json", meta)
    with open(out / "chains.csv", "w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        w = csv.writer(fh)
        w.writerow(["chain", "draw"] + post.param_names)
        for c in range(post.chains.shape[0]):
            for i, row in enumerate(post.chains[c]):
                w.writerow([c, i] + [repr(float(v)) for v in row])
    return payload


def _mock_base(cfg):
    fields = {f.name: f.type for f in dataclasses.fields(MockConfig)}
    kw = {}
    for k, v in cfg.items():
        if k.startswith("mock."):
            name = k[len("mock."):]
            if name not in fields or name == "seed":
                raise ConfigError(f"unknown mock setting {name!r}")
            if name == "xt_dist":
                kw[name] = v
            elif name == "n_points":
                kw[name] = _get(cfg, k, int)
            else:
                kw[name] = _get(cfg, k, float)
    return dataclasses.replace(FIDUCIAL, **kw)


def cmd_bias_bench(cfg, seed, out: Path):
    mode = _get(cfg, "mode", str, "sweep")
    methods = _list(cfg, "methods", str, ("mnr", "unif", "prof"))
    replicates = _get(cfg, "replicates", int, 30)
    budget = _get(cfg, "max_seconds", float, None)
    deadline = None if budget is None else time.monotonic() + budget
    base = _mock_base(cfg)
    sampler = build_sampler(cfg, seed)
    meta = _meta(cfg, seed, "bias-bench")
    if mode == "sweep":
        param = _get(cfg, "sweep_param", str, "sigma_x_mean")
        try:
            grid = sweep_grid(param, _get(cfg, "sweep_points", int, 20))
        except KeyError:
            raise ConfigError(f"cannot sweep {param!r}") from None
        res = run_1d_sweep(param, grid, methods, replicates, base, sampler, seed, deadline=deadline)
        entries = [({param: v}, m, r) for (v, m), r in res.items()]
        expected = len(grid) * len(methods)
    elif mode == "grid":
        pts = _get(cfg, "grid_points", int, 5)
        res = run_5d_grid(methods, pts, replicates, base, sampler, seed, deadline=deadline)
        entries = res.cells
        expected = None
        extremal = [{"method": m, "parameter": p, "which": which, "coords": c, "mean_bias": v}
                    for (m, p), e in res.extremal.items() for which, (c, v) in e.items()]
        write_json({"extremal": extremal}, out / "extremal.json", meta)
    elif mode == "gmm":
        ng_max = _get(cfg, "ng_max", int, 10)
        hyper = _get(cfg, "hyperprior", str, "uniform-ordered")
        res = run_gmm_study([base], range(1, ng_max + 1), replicates, hyper, sampler, seed, deadline=deadline)
        entries = [({"n_gauss": ng}, "gmm", r) for ng, r in res[0]["reports"].items()]
        expected = None
        sel = res[0]["selected"]
        with open(out / "selected_ngauss.csv", "w", newline="") as fh:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
            w = csv.writer(fh)
            w.writerow(["n_gauss", "count"])
            for ng in range(1, ng_max + 1):
                w.writerow([ng, sel.count(ng)])
    else:
        raise ConfigError(f"unknown bias-bench mode {mode!r}; use sweep, grid or gmm")
    partial = any(r.n_ok + len(r.failures) < r.n_requested for _, _, r in entries)
    if expected is not None and len(entries) < expected:
        partial = True
    if deadline is not None and time.monotonic() > deadline:
        partial = True
    meta = dict(meta, partial=partial)
    rows = bias_rows(entries)
    write_bias_csv(rows, out / "bias.csv", meta)
    if partial:
        log.warning("time budget exceeded: results are partial")
    return {"rows": len(rows), "partial": partial}


def cmd_assess_causality(cfg, seed, out: Path):
    d = load_data(cfg)
    model = build_model(cfg)
    inv_cfg = {k[len("inverse."):]: v for k, v in cfg.items() if k.startswith("inverse.")}
    model_inv = build_model(inv_cfg) if inv_cfg else build_model({})
    spec = build_spec(cfg)
    rep = assess_causality(d, model, model_inv, spec)
    meta = _meta(cfg, seed, "assess-causality")
    write_json(rep.to_dict(), out / "causality.json", meta)
    for key, regressor in (("forward", d.x_obs), ("inverse", d.y_obs)):
        r = rep.residuals.get(key)
        if r is None:
            continue
        with open(out / f"residuals_{key}.csv", "w", newline="") as fh:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
            w = csv.writer(fh)
            w.writerow(["regressor", "normalised_residual"])
            for a, b in zip(regressor, r):
                w.writerow([repr(float(a)), repr(float(b))])
    return rep.to_dict()


COMMANDS = {"fit": cmd_fit, "sample": cmd_sample, "bias-bench": cmd_bias_bench,
            "assess-causality": cmd_assess_causality}


def build_parser():
    p = argparse.ArgumentParser(prog="eivreg", description="Errors-in-variables regression with intrinsic scatter.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="key = value configuration file")
        s.add_argument("--seed", type=int, help="random seed (overrides the config)")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration key; may be repeated")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        if args.out is not None:
            overrides.append(f"out={args.out}")
        cfg = read_config(args.config, overrides)
        seed = _get(cfg, "seed", int, 0)
        out = Path(_get(cfg, "out", str, "."))
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, seed, out)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())


def main_entry():  # pragma: no cover - console-script shim
    sys.exit(main())
