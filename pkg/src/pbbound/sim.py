"""Replication engine: selective publication, bounds, and aggregates.

Each replication draws a complete meta-analysis, calibrates the true
selection model's intercept so the sample-average publication
probability hits the target p, publishes studies by Bernoulli draws,
and evaluates the bias of the published-data ML fit against the C-J and
extended bounds.  Aggregates are the exceedance rates (how often the
absolute bias escapes each bound) and quartiles of the interval-length
ratio r.
"""
from __future__ import annotations

import io
import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .cjbound import BoundResult, cj_bound
from .core import MetaDataset, Study
from .extbound import ExtendedBound, OptConfig, extended_bound
from .relik import fit_ml
from .selmodels import CalibrationError, REContext, SelectionModel, calibrate_intercept, p0
from .statkernel import rng_for


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    family: str                     # "copas-heckman" | "probit2"
    fixed_params: dict
    mu: float
    tau: float
    s_count: int = 25
    p_grid: tuple = tuple(round(0.1 * k, 1) for k in range(1, 10))
    replications: int = 200
    seed: int = 20240901
    mu_log: float = 0.0
    sd_log: float = 0.5

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.s_count < 2:
            raise ValueError("s_count must be >= 2")
        if not all(0.0 < p < 1.0 for p in self.p_grid):
            raise ValueError("p_grid values must be in (0, 1)")


def _h(name, mu, tau, rho, g1, **kw):
    return Scenario(name=name, family="copas-heckman",
                    fixed_params={"rho": rho, "g1": g1}, mu=mu, tau=tau, **kw)


def _p(name, mu, tau, beta, **kw):
    return Scenario(name=name, family="probit2",
                    fixed_params={"beta": beta}, mu=mu, tau=tau, **kw)


SCENARIOS = {
    "Expe_H_1": _h("Expe_H_1", 1.5, 2.5, 0.8, 0.2),
    "Expe_H_2": _h("Expe_H_2", 1.0, 1.0, 0.2, 2.0),
    "Expe_P_1": _p("Expe_P_1", 1.5, 2.5, 4.0),
    "Expe_P_2": _p("Expe_P_2", 1.0, 1.0, 2.0),
    "Expe_H_3": _h("Expe_H_3", 1.0, 0.5, 0.2, 2.0, p_grid=(0.7,)),
    "Expe_H_4": _h("Expe_H_4", 1.0, 0.3, 0.2, 1.0, p_grid=(0.7,)),
    "Expe_P_3": _p("Expe_P_3", 1.0, 0.5, 2.0, p_grid=(0.7,)),
    "Expe_P_4": _p("Expe_P_4", 1.0, 0.3, 1.0, p_grid=(0.7,)),
}


@dataclass
class RepOutcome:
    abs_bias: float
    cj: BoundResult
    ext: ExtendedBound
    n_published: int
    mu_complete: float
    mu_published: float
    tau_published: float
    abs_bias_true: float
    redraws: int

    def __post_init__(self):
        if self.n_published < 2:
            raise ValueError("published meta-analysis needs >= 2 studies")


@dataclass
class ScenarioCell:
    p: float
    exceed_cj: float          # percent
    exceed_ext: float         # percent
    r_median: float
    r_q1: float
    r_q3: float
    r_min: float
    replications: int
    failed: int
    redraws: int


def generate_replication(scenario: Scenario, target_p: float, rep_seed: int,
                         max_redraws: int = 200):
    """One replication: (complete, published, true model, redraw count).

    A draw whose published subset has fewer than two studies (or whose
    intercept calibration fails) is redrawn from the same stream so the
    replication count stays fixed.
    """
    if not 0.0 < target_p < 1.0:
        raise ValueError("target_p must be in (0, 1)")
    rng = rng_for(scenario.seed, rep_seed, int(round(target_p * 1000)))
    ctx = REContext(mu=scenario.mu, tau=scenario.tau)
    for attempt in range(max_redraws):
        s = np.exp(rng.standard_normal(scenario.s_count) * scenario.sd_log
                   + scenario.mu_log)
        y = scenario.mu + rng.standard_normal(scenario.s_count) * np.sqrt(
            scenario.tau ** 2 + s ** 2)
        try:
            model = calibrate_intercept(scenario.family, dict(scenario.fixed_params),
                                        y, s, target_p, ctx=ctx)
        except CalibrationError:
            continue
        probs = np.asarray(p0(model, y, s, ctx))
        published = rng.uniform(size=scenario.s_count) < probs
        if published.sum() < 2:
            continue
        complete = MetaDataset(
            tuple(Study(float(yy), float(ss)) for yy, ss in zip(y, s)),
            name=f"{scenario.name}-complete")
        pub = MetaDataset(
            tuple(Study(float(yy), float(ss))
                  for yy, ss, d in zip(y, s, published) if d),
            name=f"{scenario.name}-published")
        return complete, pub, model, attempt
    raise SimulationError(
        f"{scenario.name}: no viable replication in {max_redraws} draws "
        f"at p={target_p}")


def run_replication(scenario: Scenario, target_p: float, rep_seed: int,
                    config: OptConfig) -> RepOutcome:
    complete, published, _, redraws = generate_replication(
        scenario, target_p, rep_seed)
    fit_c = fit_ml(complete)
    fit_p = fit_ml(published)
    ext = extended_bound(published, fit_p.tau_hat, fit_p.mu_hat, target_p, config)
    abs_bias = abs(fit_p.mu_hat - fit_c.mu_hat)
    return RepOutcome(
        abs_bias=abs_bias, cj=ext.cj, ext=ext, n_published=published.n,
        mu_complete=fit_c.mu_hat, mu_published=fit_p.mu_hat,
        tau_published=fit_p.tau_hat,
        abs_bias_true=abs(fit_p.mu_hat - scenario.mu), redraws=redraws)


def _worker(args):
    scenario, target_p, rep_seed, config = args
    try:
        return rep_seed, run_replication(scenario, target_p, rep_seed, config), None
    except Exception as exc:  # aggregated, not fatal
        return rep_seed, None, f"{type(exc).__name__}: {exc}"


def default_sim_config() -> OptConfig:
    """Desk-scale solver settings used by the replication engine."""
    return OptConfig(k1=200, k2=200, kprime_stride=10, restarts=1,
                     max_iters=150, tol_obj=1e-6)


def run_scenario(scenario: Scenario, config: OptConfig | None = None,
                 threads: int = 1, progress=None) -> list[ScenarioCell]:
    """One ScenarioCell per grid point; pure function of its arguments.

    Replication tasks are independent; with threads > 1 they run on a
    process pool, and per-task seeding keeps results identical to the
    serial order.
    """
    config = config or default_sim_config()
    cells = []
    for target_p in scenario.p_grid:
        tasks = [(scenario, target_p, rep, config)
                 for rep in range(scenario.replications)]
        results: list = [None] * len(tasks)
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                for rep_seed, outcome, err in pool.map(_worker, tasks, chunksize=4):
                    results[rep_seed] = (outcome, err)
        else:
            for t in tasks:
                rep_seed, outcome, err = _worker(t)
                results[rep_seed] = (outcome, err)
        outcomes = [o for o, e in results if o is not None]
        failed = sum(1 for o, e in results if o is None)
        if progress is not None:
            progress(scenario.name, target_p, len(outcomes), failed)
        if not outcomes:
            cells.append(ScenarioCell(p=target_p, exceed_cj=math.nan,
                                      exceed_ext=math.nan, r_median=math.nan,
                                      r_q1=math.nan, r_q3=math.nan,
                                      r_min=math.nan, replications=0,
                                      failed=failed, redraws=0))
            continue
        n = len(outcomes)
        exceed_cj = 100.0 * sum(o.abs_bias > o.cj.upper for o in outcomes) / n
        exceed_ext = 100.0 * sum(
            o.abs_bias > o.ext.bound.upper for o in outcomes) / n
        ratios = np.array([o.ext.ratio for o in outcomes])
        q1, med, q3 = np.percentile(ratios, [25, 50, 75])
        cells.append(ScenarioCell(
            p=target_p, exceed_cj=exceed_cj, exceed_ext=exceed_ext,
            r_median=float(med), r_q1=float(q1), r_q3=float(q3),
            r_min=float(ratios.min()), replications=n, failed=failed,
            redraws=sum(o.redraws for o in outcomes)))
    return cells


def cells_to_csv(name: str, cells: list[ScenarioCell]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "p", "exceed_cj_pct", "exceed_ext_pct",
                "r_median", "r_q1", "r_q3", "r_min", "replications",
                "failed", "redraws"])
    for c in cells:
        w.writerow([name, c.p, f"{c.exceed_cj:.1f}", f"{c.exceed_ext:.1f}",
                    f"{c.r_median:.3f}", f"{c.r_q1:.3f}", f"{c.r_q3:.3f}",
                    f"{c.r_min:.3f}", c.replications, c.failed, c.redraws])
    return buf.getvalue()


def get_scenario(name: str, **overrides) -> Scenario:
    """Preset by name with optional field overrides (e.g. replications)."""
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; presets: {', '.join(SCENARIOS)}")
    sc = SCENARIOS[name]
    return replace(sc, **overrides) if overrides else sc
