"""Monte-Carlo campaigns: experiment configuration, sweeps, CSV output and slope fits.

A campaign is a grid of independent cells (realization x SNR x strategy).
Seeds are derived with :class:`numpy.random.SeedSequence`:

* channel draw and user variances: ``SeedSequence([seed, realization])``,
  so every SNR point of a realization sees the same channels;
* CSIT error, SAA samples and evaluation samples:
  ``SeedSequence([seed, realization, snr_index])`` and its children.

Cells run serially or in a process pool whose size is read from the
``MISOBC_THREADS`` environment variable; rows are written in cell order
whatever the completion order.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import dof
from .channel import CsitModel, apply_csit_error, sample_channels, sample_conditional
from .errors import ConfigurationError, InvariantViolation, MisoBCError
from .initpoint import mrt_svd_init, zf_strong_init
from .rate import PrecoderSet, ergodic_rates, evaluate, oma_precoders
from .strategy import parse_strategy
from .wmmse import SolveOptions, ao_solve, saa_solve

__all__ = [
    "ExperimentConfig",
    "load_config",
    "cell_seeds",
    "run_cell",
    "run_experiment",
    "summarize",
    "slope_campaign",
    "write_rows",
    "write_summary",
    "csv_columns",
    "thread_count",
]

log = logging.getLogger(__name__)

THREADS_ENV = "MISOBC_THREADS"
DEFAULT_STRATEGIES = ("RS1", "MULP", "NOMA-G3", "NOMA-G1", "OMA")


@dataclass(frozen=True)
class ExperimentConfig:
    """One campaign.  ``alpha=None`` means perfect CSIT."""

    K: int = 6
    M: int = 3
    strategies: tuple = DEFAULT_STRATEGIES
    snr_grid_dB: tuple = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0)
    n_realizations: int = 10
    alpha: float | None = None
    variance_mode: str = "equal"
    n_saa_samples: int = 200
    n_eval_samples: int | None = None
    objective: str = "sum"
    seed: int = 0
    output_path: str | None = None
    max_iterations: int = 200
    convergence_tol: float = 1e-4
    restarts: bool = True

    def __post_init__(self):
        obj = object.__setattr__
        obj(self, "strategies", tuple(str(s) for s in self.strategies))
        obj(self, "snr_grid_dB", tuple(float(s) for s in self.snr_grid_dB))
        if self.K < 1 or self.M < 1:
            raise ConfigurationError("K and M must be positive")
        if not self.snr_grid_dB:
            raise ConfigurationError("snr_grid_dB must not be empty")
        if not self.strategies:
            raise ConfigurationError("at least one strategy is required")
        if self.n_realizations < 1:
            raise ConfigurationError("n_realizations must be at least 1")
        if self.n_saa_samples < 1:
            raise ConfigurationError("n_saa_samples must be at least 1")
        if self.variance_mode not in ("equal", "uniform"):
            raise ConfigurationError("variance_mode must be 'equal' or 'uniform'")
        if self.objective not in ("sum", "maxmin"):
            raise ConfigurationError("objective must be 'sum' or 'maxmin'")
        if self.alpha is not None and not 0.0 <= float(self.alpha) <= 1.0:
            raise ConfigurationError("alpha must lie in [0, 1]")
        for name in self.strategies:
            parse_strategy(name, self.K)

    @property
    def perfect_csit(self):
        return self.alpha is None

    @property
    def eval_samples(self):
        return self.n_saa_samples if self.n_eval_samples is None else self.n_eval_samples

    def solve_options(self, seed=0):
        return SolveOptions(convergence_tol=self.convergence_tol, max_iterations=self.max_iterations,
                            seed=seed)


def load_config(path=None, **overrides):
    """Read a YAML key-value file and apply ``overrides`` (``None`` values are ignored)."""
    data = {}
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"{path}: expected a key-value document")
        data.update(loaded)
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
    if isinstance(data.get("alpha"), str) and data["alpha"].lower() in ("perfect", "none"):
        data["alpha"] = None
    return ExperimentConfig(**data)


def thread_count():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


# --------------------------------------------------------------------------
# cells


def cell_seeds(master, realization, snr_index):
    """Integer seeds ``(channel, csit, saa, evaluation)`` for one cell."""
    chan = np.random.SeedSequence([master, realization]).generate_state(1)[0]
    base = np.random.SeedSequence([master, realization, snr_index])
    csit, saa, ev = (int(c.generate_state(1)[0]) for c in base.spawn(3))
    return int(chan), csit, saa, ev


def _variances(cfg, realization):
    if cfg.variance_mode == "equal":
        return np.ones(cfg.K)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, realization, 1]))
    return rng.uniform(0.1, 1.0, cfg.K)


def csv_columns(K):
    return (["strategy", "seed", "snr_dB", "alpha"] + [f"R_{k + 1}" for k in range(K)]
            + ["R_c", "sum", "mmf", "iterations", "converged", "status"])


def _mulp_start(solve, cs_for_init, P, K):
    """RS start point from a MU-LP solution with a small common stream."""
    mulp = parse_strategy("MULP", K)
    res = _best_solve(solve, mulp, cs_for_init, P, K, True)
    ref = mrt_svd_init(cs_for_init, parse_strategy("RS1", K), P)
    eps = 1e-3
    X = np.vstack([res.precoders.private_precoders * math.sqrt(1 - eps),
                   ref.common_precoder / np.linalg.norm(ref.common_precoder) * math.sqrt(eps * P)])
    return PrecoderSet.from_matrix(X, K, P)


def run_cell(cfg, realization, snr_index, strategy):
    """Solve and evaluate one (realization, SNR, strategy) cell; returns a row dict."""
    snr = cfg.snr_grid_dB[snr_index]
    P = 10.0 ** (snr / 10.0)
    chan_seed, csit_seed, saa_seed, eval_seed = cell_seeds(cfg.seed, realization, snr_index)
    row = {"strategy": strategy, "seed": chan_seed, "snr_dB": snr,
           "alpha": "perfect" if cfg.perfect_csit else cfg.alpha}
    K = cfg.K
    try:
        config = parse_strategy(strategy, K)
        cs = sample_channels(K, cfg.M, _variances(cfg, realization), chan_seed)
        alloc = "mmf" if (config.kind == "RS1" and cfg.objective == "maxmin") else "equal"
        opts = cfg.solve_options(seed=saa_seed)
        if cfg.perfect_csit:
            config = config.with_orders(cs) if config.kind == "NOMA" else config
            if config.kind == "OMA":
                report, its, conv = evaluate(cs, oma_precoders(cs, P), config), 0, True
            else:
                def solve(c, init):
                    return ao_solve(cs, c, cfg.objective, init, opts)

                res = _best_solve(solve, config, cs, P, K, cfg.restarts)
                report, its, conv = res.report, res.iterations, res.converged
        else:
            model = CsitModel(float(cfg.alpha), P)
            est = apply_csit_error(cs, model, csit_seed).as_estimate()
            config = config.with_orders(est, use_estimates=True) if config.kind == "NOMA" else config
            evals = sample_conditional(est, model, cfg.eval_samples, eval_seed)
            if config.kind == "OMA":
                ps, its, conv = oma_precoders(est, P, use_estimates=True), 0, True
            else:
                def solve(c, init):
                    return saa_solve(est, model, cfg.n_saa_samples, c, cfg.objective, opts, init=init)

                res = _best_solve(solve, config, est, P, K, cfg.restarts)
                ps, its, conv = res.precoders, res.iterations, res.converged
            report = ergodic_rates(evals, ps, config, alloc)
        row.update(_rate_fields(report, K))
        row.update(iterations=its, converged=bool(conv), status="ok" if conv else "max_iterations")
    except InvariantViolation as exc:
        row.update(_nan_fields(K), iterations=0, converged=False, status=f"invariant: {exc}")
    except (MisoBCError, np.linalg.LinAlgError, FloatingPointError) as exc:
        row.update(_nan_fields(K), iterations=0, converged=False, status=f"error: {exc}")
    return row


def _best_solve(solve, config, cs_for_init, P, K, restart):
    """AO from MRT/SVD plus one structured restart; keep the better result.

    RS restarts from the MU-LP solution, NOMA and MU-LP from a start that
    zero-forces the strong users.
    """
    res = solve(config, mrt_svd_init(cs_for_init, config, P))
    if not restart or config.kind not in ("RS1", "NOMA", "MULP"):
        return res
    if config.kind == "RS1":
        alt = solve(config, _mulp_start(solve, cs_for_init, P, K))
    else:
        alt = solve(config, zf_strong_init(cs_for_init, config, P))
    if alt.objective_trace[-1] > res.objective_trace[-1]:
        alt.flags.append("restart")
        res = alt
    return res


def _rate_fields(report, K):
    vals = report.csv_fields()
    out = {f"R_{k + 1}": vals[k] for k in range(K)}
    out.update(R_c=vals[K], sum=vals[K + 1], mmf=vals[K + 2])
    return out


def _nan_fields(K):
    out = {f"R_{k + 1}": math.nan for k in range(K)}
    out.update(R_c="", sum=math.nan, mmf=math.nan)
    return out


def _cell_job(args):
    cfg, r, i, s = args
    return run_cell(cfg, r, i, s)


def run_experiment(cfg, workers=None, progress=None):
    """Run every cell and return the rows in (realization, SNR, strategy) order.

    When ``cfg.output_path`` is set the rows are written there and the
    per-(SNR, strategy) summary to ``<stem>.summary.csv`` next to it.
    """
    jobs = [(cfg, r, i, s) for r in range(cfg.n_realizations)
            for i in range(len(cfg.snr_grid_dB)) for s in cfg.strategies]
    workers = thread_count() if workers is None else max(1, int(workers))
    t0 = time.perf_counter()
    if workers == 1:
        rows = []
        for n, job in enumerate(jobs, 1):
            rows.append(_cell_job(job))
            if progress:
                progress(n, len(jobs))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_cell_job, jobs, chunksize=1))
    log.info("ran %d cells in %.1f s with %d worker(s)", len(jobs), time.perf_counter() - t0, workers)
    if cfg.output_path:
        write_rows(rows, cfg.output_path, cfg.K)
        write_summary(summarize(rows), summary_path(cfg.output_path))
    return rows


def summary_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".summary.csv")


def write_rows(rows, path, K):
    cols = csv_columns(K)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({c: _fmt(row[c]) for c in cols})
    return Path(path)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def summarize(rows):
    """Mean and standard error of sum and MMF rates per (SNR, strategy)."""
    groups = {}
    for row in rows:
        groups.setdefault((row["snr_dB"], row["strategy"]), []).append(row)
    out = []
    for (snr, strategy), rs in groups.items():
        ok = [r for r in rs if not r["status"].startswith(("error", "invariant"))]
        entry = {"strategy": strategy, "snr_dB": snr, "alpha": rs[0]["alpha"], "n": len(ok),
                 "n_failed": len(rs) - len(ok)}
        for key in ("sum", "mmf"):
            vals = np.array([r[key] for r in ok], dtype=float)
            entry[f"mean_{key}"] = float(vals.mean()) if vals.size else math.nan
            entry[f"se_{key}"] = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        out.append(entry)
    out.sort(key=lambda e: (e["snr_dB"], e["strategy"]))
    return out


SUMMARY_COLUMNS = ["strategy", "snr_dB", "alpha", "n", "n_failed", "mean_sum", "se_sum", "mean_mmf", "se_mmf"]


def write_summary(summary, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for e in summary:
            w.writerow({c: _fmt(e[c]) for c in SUMMARY_COLUMNS})
    return Path(path)


# --------------------------------------------------------------------------
# slopes


@dataclass(frozen=True)
class SlopeRow:
    strategy: str
    fitted: float
    stderr: float
    predicted: object
    abs_diff: float
    fit: dof.SlopeFit = field(repr=False, default=None)


def slope_campaign(cfg, window=(25.0, 40.0), rows=None, workers=None):
    """Fit the high-SNR slope of the mean rate of every strategy and pair it with its prediction.

    Only SNR points inside ``window`` are simulated and fitted; the window
    must span at least 15 dB.  The metric follows ``cfg.objective``.
    """
    lo, hi = window
    grid = tuple(s for s in cfg.snr_grid_dB if lo <= s <= hi)
    if len(grid) < 3 or max(grid) - min(grid) < 15.0:
        raise ConfigurationError("slope window needs at least 3 SNR points spanning 15 dB or more")
    if rows is None:
        cfg = replace(cfg, snr_grid_dB=grid)
        rows = run_experiment(cfg, workers=workers)
    summary = summarize(rows)
    key = "mean_sum" if cfg.objective == "sum" else "mean_mmf"
    metric = "sum" if cfg.objective == "sum" else "mmf"
    alpha = 1 if cfg.perfect_csit else cfg.alpha
    out = []
    for name in cfg.strategies:
        pts = [(e["snr_dB"], e[key]) for e in summary if e["strategy"] == name and e["snr_dB"] in grid]
        fit = dof.fit_slope(pts)
        sc = parse_strategy(name, cfg.K)
        pred = dof.closed_form_dof(sc.kind, cfg.M, cfg.K, sc.num_groups, alpha, metric)
        out.append(SlopeRow(name, fit.fitted_slope, fit.stderr, pred, abs(fit.fitted_slope - float(pred)), fit))
    return out


def write_slopes(slopes, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "fitted", "stderr", "predicted", "abs_diff"])
        for s in slopes:
            w.writerow([s.strategy, repr(s.fitted), repr(s.stderr), str(s.predicted), repr(s.abs_diff)])
    return Path(path)


def config_dict(cfg):
    """Plain-dict view of a configuration, suitable for YAML."""
    d = asdict(cfg)
    d["strategies"] = list(d["strategies"])
    d["snr_grid_dB"] = list(d["snr_grid_dB"])
    return d
