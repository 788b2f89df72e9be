"""Worst-case bias bound over the single-flip monotone selection class.

The bias of the random-effects ML estimate is discretized on Monte-Carlo
grids (w for the random effect, z for the sampling error) and optimized
over the per-study, per-w selection probabilities q[i, k] subject to:

* box constraints 0 <= q <= 1,
* per-column monotonicity in s with one direction flip at a threshold
  column k' (enumerated over a strided candidate grid, both
  orientations),
* the marginal-selection inequality mean(q) >= p.

The innermost z dimension is eliminated exactly: with q[i, k] fixed the
objective is linear in the per-z probabilities with coefficients ordered
by z, so the optimum concentrates the selection mass on the extreme z
values.  The analytic inner mode uses the Gaussian limit of that
top-mass expectation, s * phi(Phi^-1(1 - q)); the discrete mode keeps
the finite-sample prefix sums and exists for oracle testing.

The optimizer is projected gradient ascent/descent with pool-adjacent-
violators projection per column, box clamping, and a uniform-shift
projection onto the marginal-selection halfspace, multi-started and
warm-started across neighboring thresholds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .cjbound import BoundResult, cj_bound
from .core import MetaDataset
from .selmodels import (CalibrationError, REContext, calibrate_intercept,
                        discretize_p1, p0)
from .statkernel import antithetic_normal, rng_for

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def _njit(*a, **k):
        def deco(f):
            return f

        return deco


@_njit(cache=True)
def _pava_cols(x, inc):
    """Column-wise L2 isotonic regression (PAVA), unit weights.

    inc[j] selects non-decreasing (True) or non-increasing order for
    column j.
    """
    n, k = x.shape
    out = np.empty_like(x)
    vals = np.empty(n)
    wts = np.empty(n)
    for j in range(k):
        m = 0
        for i in range(n):
            v = x[i, j] if inc[j] else -x[i, j]
            cv = v
            cw = 1.0
            while m > 0 and vals[m - 1] >= cv:
                cv = (vals[m - 1] * wts[m - 1] + cv * cw) / (wts[m - 1] + cw)
                cw += wts[m - 1]
                m -= 1
            vals[m] = cv
            wts[m] = cw
            m += 1
        pos = 0
        for b in range(m):
            cnt = int(wts[b])
            for _ in range(cnt):
                out[pos, j] = vals[b] if inc[j] else -vals[b]
                pos += 1
    return out


@_njit(cache=True)
def _project_nb(q, inc, lo, target_p, tol_feas, max_pass):
    n, k = q.shape
    nk = n * k
    for i in range(n):
        for j in range(k):
            v = q[i, j]
            q[i, j] = lo if v < lo else (1.0 if v > 1.0 else v)
    for _ in range(max_pass):
        q = _pava_cols(q, inc)
        total = 0.0
        for i in range(n):
            for j in range(k):
                v = q[i, j]
                if v < lo:
                    v = lo
                elif v > 1.0:
                    v = 1.0
                q[i, j] = v
                total += v
        deficit = target_p - total / nk
        if deficit <= tol_feas:
            return q
        for i in range(n):
            for j in range(k):
                v = q[i, j] + deficit
                q[i, j] = lo if v < lo else (1.0 if v > 1.0 else v)
    return _pava_cols(q, inc)


def isotonic_projection(x: np.ndarray, increasing: bool = True) -> np.ndarray:
    """L2 projection of a vector onto the monotone cone."""
    col = np.asarray(x, dtype=float).reshape(-1, 1)
    return _pava_cols(col, np.array([increasing]))[:, 0]


@dataclass(frozen=True)
class MCGrid:
    """Sorted standard-normal samples: w (size K1, random-effect axis)
    and z (size K2, sampling-error axis).  Antithetic, so both have
    exact mean 0."""

    z: np.ndarray
    w: np.ndarray
    seed: int

    def __post_init__(self):
        for name in ("z", "w"):
            arr = getattr(self, name)
            if arr.size < 2 or np.any(np.diff(arr) < 0):
                raise ValueError(f"{name} must be sorted with at least 2 points")

    @classmethod
    def generate(cls, seed: int, k1: int, k2: int) -> "MCGrid":
        rng = rng_for(seed, 0)
        w = antithetic_normal(rng, k1)
        z = antithetic_normal(rng, k2)
        return cls(z=z, w=w, seed=int(seed))


@dataclass(frozen=True)
class OptConfig:
    k1: int = 1000
    k2: int = 1000
    kprime_stride: int = 10
    max_iters: int = 300
    step_init: float = 0.25
    tol_obj: float = 1e-7
    tol_feas: float = 1e-9
    restarts: int = 3
    inner_mode: str = "analytic"  # "analytic" | "discrete"
    q_floor: float | None = None  # default 1/k2 (analytic), ~0 (discrete)
    seed: int = 20240901

    def __post_init__(self):
        if self.inner_mode not in ("analytic", "discrete"):
            raise ValueError("inner_mode must be 'analytic' or 'discrete'")
        if min(self.tol_obj, self.tol_feas, self.step_init) <= 0:
            raise ValueError("tolerances and step_init must be positive")
        if not 1 <= self.restarts:
            raise ValueError("restarts must be >= 1")

    @property
    def floor(self) -> float:
        # the capped analytic inner is valid down to q = 0; a tiny
        # positive floor only guards the p_bar division
        return self.q_floor if self.q_floor is not None else 1e-9


@dataclass
class Opt2Solution:
    """Single-direction OPT2 result."""

    value: float
    direction: str
    best_kprime: int
    best_orientation: int
    q_opt: np.ndarray
    feas_residual: float
    iterations: int
    degraded: bool
    candidates: list = field(default_factory=list)


@dataclass
class ExtBoundResult:
    bound: BoundResult  # method "A1"
    lower_solution: Opt2Solution
    upper_solution: Opt2Solution

    @property
    def solver_diagnostics(self) -> dict:
        return {
            "lower": self.lower_solution.candidates,
            "upper": self.upper_solution.candidates,
        }


@dataclass
class ExtendedBound:
    bound: BoundResult  # method "extended"
    cj: BoundResult
    a1: ExtBoundResult
    ratio: float


class SolverError(RuntimeError):
    """Optimization failed to reach feasibility; carries the best value."""

    def __init__(self, msg, best_value=float("nan")):
        super().__init__(msg)
        self.best_value = best_value


# ---------------------------------------------------------------------------
# objective


def _inner_terms(q, s, tau, grid: MCGrid, direction: str, inner_mode: str):
    """Per-entry inner value V[i, k] and derivative dV/dq[i, k]."""
    sgn = 1.0 if direction == "max" else -1.0
    w = grid.w[None, :]
    sc = s[:, None]
    if inner_mode == "analytic":
        qc = np.clip(1.0 - q, 1e-16, 1.0 - 1e-16)
        x = ndtri(qc)
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        # the Gaussian tail-mass expectation phi(Phi^-1(1-q)) overstates
        # what K2 samples can deliver once q falls below 1/K2 (the
        # conditional mean cannot exceed the top sample); cap it with
        # the linear branch through the 1/K2 point, mirroring the
        # discrete inner's fractional top sample
        k2 = grid.z.size
        zcap = k2 * float(_INV_SQRT_2PI * math.exp(-0.5 * ndtri(1.0 - 1.0 / k2) ** 2))
        lin = q * zcap
        capped = lin < pdf
        tail = np.where(capped, lin, pdf)
        dtail = np.where(capped, zcap, x)
        v = sgn * sc * tail + tau * w * q
        dv = sgn * sc * dtail + tau * w
        return v, dv
    # discrete: selection mass on the largest (max) or smallest (min)
    # z samples, with one fractional sample
    z = grid.z
    k2 = z.size
    zo = z[::-1] if direction == "max" else z
    prefix = np.concatenate(([0.0], np.cumsum(zo)))
    m = np.clip(q, 0.0, 1.0) * k2
    j = np.minimum(m.astype(np.int64), k2 - 1)
    frac = m - j
    # full samples j may equal k2 at q == 1 (then frac adjusts to 1.0)
    full = np.where(m >= k2, k2 - 1, j)
    frac = np.where(m >= k2, 1.0, frac)
    val = (prefix[full] + frac * zo[full]) / k2
    v = sc * val + tau * w * q
    dv = sc * zo[full] + tau * w
    return v, dv


def _objective(q, s, c, tau, grid, direction, inner_mode):
    v, _ = _inner_terms(q, s, tau, grid, direction, inner_mode)
    a = v.mean(axis=1)
    pbar = q.mean(axis=1)
    if np.any(pbar <= 0.0):
        raise FloatingPointError("p_bar has a zero entry; objective undefined")
    return float(np.sum(c * a / pbar) / np.sum(c))


def _objective_grad(q, s, c, tau, grid, direction, inner_mode):
    v, dv = _inner_terms(q, s, tau, grid, direction, inner_mode)
    a = v.mean(axis=1)
    pbar = q.mean(axis=1)
    csum = np.sum(c)
    k1 = q.shape[1]
    obj = float(np.sum(c * a / pbar) / csum)
    g = (c / (k1 * pbar ** 2))[:, None] * (dv * pbar[:, None] - a[:, None]) / csum
    return obj, g


def model_bias(data: MetaDataset, tau: float, mu: float, grid: MCGrid,
               model, ctx: REContext | None = None) -> float:
    """Discretized bias of a parametric selection model on the grid.

    Evaluates the full selection tensor p0(mu + tau*w + s*z, s) over the
    grid, with no worst-case substitution in the inner dimension.
    """
    ctx = ctx or REContext(mu=mu, tau=tau)
    s = np.sort(data.s)
    c = 1.0 / (s ** 2 + tau ** 2)
    w = grid.w[None, :, None]
    z = grid.z[None, None, :]
    sc = s[:, None, None]
    y = mu + tau * w + sc * z
    probs = np.asarray(p0(model, y, np.broadcast_to(sc, y.shape), ctx))
    num = ((sc * z + tau * w) * probs).mean(axis=(1, 2))
    den = probs.mean(axis=(1, 2))
    if np.any(den <= 0.0):
        raise FloatingPointError("a study has zero marginal selection mass")
    return float(np.sum(c * num / den) / np.sum(c))


def bias_objective(data: MetaDataset, tau: float, mu: float, grid: MCGrid,
                   q: np.ndarray, direction: str = "max",
                   inner_mode: str = "analytic") -> float:
    """Discretized bias at decision variables q[i, k] (studies sorted by
    s ascending, columns matching grid.w)."""
    if direction not in ("max", "min"):
        raise ValueError("direction must be 'max' or 'min'")
    s = np.sort(data.s)
    if q.shape != (data.n, grid.w.size):
        raise ValueError(f"q must have shape {(data.n, grid.w.size)}")
    c = 1.0 / (s ** 2 + tau ** 2)
    return _objective(np.asarray(q, float), s, c, tau, grid, direction, inner_mode)


# ---------------------------------------------------------------------------
# feasibility


def _directions(k1: int, kprime: int, orientation: int) -> np.ndarray:
    """inc[j]: whether column j is constrained non-decreasing along
    increasing s.  Orientation 1 places the non-increasing columns
    before the threshold."""
    inc = np.arange(k1) >= kprime
    if orientation == 2:
        inc = ~inc
    return inc


def _project(q, inc, lo, target_p, tol_feas, max_pass=60):
    """Cyclic projection onto {box} ∩ {per-column monotone} ∩
    {mean >= target_p}.  Returns a feasible point."""
    return _project_nb(np.ascontiguousarray(q, dtype=np.float64), inc, lo,
                       target_p, tol_feas, max_pass)


def feasibility_residual(q, inc, lo, target_p) -> float:
    box = max(float(np.max(lo - q, initial=0.0)), float(np.max(q - 1.0, initial=0.0)))
    d = np.diff(q, axis=0)
    chain = 0.0
    if d.size:
        chain = max(
            float(np.max(-d[:, inc], initial=0.0)),
            float(np.max(d[:, ~inc], initial=0.0)),
        )
    scalar = max(0.0, target_p - float(q.mean()))
    return max(box, chain, scalar)


# ---------------------------------------------------------------------------
# solver


def _pg_ascent(q0, inc, lo, target_p, s, c, tau, grid, direction, inner_mode,
               config: OptConfig):
    """Projected gradient on the feasible set; maximizes for
    direction='max', minimizes for 'min'."""
    sgn = 1.0 if direction == "max" else -1.0
    q = _project(q0.copy(), inc, lo, target_p, config.tol_feas)
    f, g = _objective_grad(q, s, c, tau, grid, direction, inner_mode)
    step = config.step_init
    stall = 0
    it = 0
    for it in range(1, config.max_iters + 1):
        g = sgn * g
        gmax = np.max(np.abs(g))
        if gmax < 1e-15:
            break
        d = g / gmax
        improved = False
        for _ in range(25):
            qt = _project(q + step * d, inc, lo, target_p, config.tol_feas)
            ft = _objective(qt, s, c, tau, grid, direction, inner_mode)
            if sgn * (ft - f) > 0.0:
                improved = True
                break
            step *= 0.5
            if step < 1e-12:
                break
        if not improved:
            break
        gain = sgn * (ft - f)
        q = qt
        f, g = _objective_grad(q, s, c, tau, grid, direction, inner_mode)
        step = min(step * 1.6, 10.0)
        if gain < config.tol_obj * (1.0 + abs(f)):
            stall += 1
            if stall >= 4:
                break
        else:
            stall = 0
    return q, f, it


def _row_corner_starts(n, k1, k2, target_p, lo, inc):
    """Floored-row starts: m studies pinned at the floor, the rest at
    the level that meets the marginal mean.

    Rows at the floor act like fully concentrated selection, so the
    per-study bias ratio approaches its extreme; the optimum frequently
    lives at such corners, which gradient ascent from interior points
    does not reach.  The floored block must respect the column
    directions: non-decreasing columns admit a floored prefix (small-s
    studies), non-increasing ones a floored suffix.
    """
    if np.all(inc):
        which = "prefix"
    elif not np.any(inc):
        which = "suffix"
    else:
        return []
    starts = []
    for m in range(1, n):
        rest = min(1.0, (n * target_p - m * lo) / (n - m))
        q = np.full((n, k1), max(rest, lo))
        rows = slice(0, m) if which == "prefix" else slice(n - m, n)
        q[rows] = lo
        starts.append(q)
        # concentrated variants: the floored rows put their whole mass
        # on one extreme w column (one z sample's worth), the shape of
        # the per-study ratio's discrete extreme
        for col in (0, k1 - 1):
            qc = q.copy()
            qc[rows, col] = 1.0 / k2
            starts.append(qc)
    return starts


def _starts(y_sorted, s_sorted, tau, mu, target_p, grid, config, lo, rng):
    """Initial points: constant, calibrated probit2 discretization,
    asymmetric corners (one study floored, the rest compensating), and
    random noise.  Truncated to config.restarts entries."""
    n, k1 = s_sorted.size, grid.w.size
    starts = [np.full((n, k1), max(target_p, lo))]
    if config.restarts >= 2:
        try:
            ctx = REContext(mu=mu, tau=tau)
            model = calibrate_intercept(
                "probit2", {"beta": 2.0},
                y_sorted, s_sorted, target_p, ctx=ctx)
            starts.append(discretize_p1(model, ctx, grid.w, s_sorted))
        except (CalibrationError, ValueError):
            pass
        rest = min(1.0, target_p * n / max(n - 1, 1))
        for i in range(min(n, 6)):
            q = np.full((n, k1), max(rest, lo))
            q[i] = lo
            starts.append(q)
    while len(starts) < config.restarts:
        starts.append(rng.uniform(lo, 1.0, size=(n, k1)))
    return starts[: config.restarts]


def kprime_candidates(config: OptConfig, grid: MCGrid, mu: float, tau: float) -> list[int]:
    """Strided threshold grid, geometrically refined near both edges
    (where the envelope often peaks), plus the natural t-statistic
    threshold (the w index where mu + tau*w crosses zero)."""
    k1 = grid.w.size
    ks = set(range(0, k1 + 1, max(1, config.kprime_stride)))
    ks.add(k1)
    e = 1
    while e < max(2, config.kprime_stride):
        ks.add(e)
        ks.add(k1 - e)
        e *= 2
    if tau > 0:
        kt = int(np.searchsorted(grid.w, -mu / tau))
        ks.update({max(0, kt - 1), kt, min(k1, kt + 1)})
    return sorted(k for k in ks if 0 <= k <= k1)


def solve_opt2(data: MetaDataset, tau: float, mu: float, target_p: float,
               config: OptConfig | None = None, direction: str = "max",
               grid: MCGrid | None = None) -> Opt2Solution:
    """Optimize the discretized bias over the constraint set, taking the
    envelope over threshold candidates and both orientations."""
    if direction not in ("max", "min"):
        raise ValueError("direction must be 'max' or 'min'")
    if not 0.0 < target_p <= 1.0:
        raise ValueError("target_p must be in (0, 1]")
    config = config or OptConfig()
    if grid is None:
        grid = MCGrid.generate(config.seed, config.k1, config.k2)
    order = np.argsort(data.s, kind="stable")
    s = data.s[order]
    y = data.y[order]
    c = 1.0 / (s ** 2 + tau ** 2)
    lo = config.floor
    sgn = 1.0 if direction == "max" else -1.0

    if target_p >= 1.0:
        q1 = np.ones((data.n, grid.w.size))
        val = _objective(q1, s, c, tau, grid, direction, config.inner_mode)
        return Opt2Solution(value=val, direction=direction, best_kprime=grid.w.size,
                            best_orientation=1, q_opt=q1, feas_residual=0.0,
                            iterations=0, degraded=False,
                            candidates=[{"kprime": grid.w.size, "orientation": 1,
                                         "objective": val, "iterations": 0,
                                         "feas_residual": 0.0}])

    rng = rng_for(config.seed, 1)
    base_starts = _starts(y, s, tau, mu, target_p, grid, config, lo, rng)
    # tiny problems: rank the {lo, p, 1} vertex lattice per candidate and
    # seed from the best corners, which multi-start from smooth interior
    # points tends to miss
    nvar = data.n * grid.w.size
    vertices = None
    if nvar <= 6 and config.restarts >= 2:
        import itertools

        levels = sorted({lo, target_p, 1.0})
        vertices = np.array(list(itertools.product(levels, repeat=nvar)),
                            dtype=float).reshape(-1, data.n, grid.w.size)

    best = None
    candidates = []
    total_iters = 0
    # at tau = 0 the w-axis drops out of the objective and columns are
    # exchangeable, so the two orientations are column permutations of
    # each other: enumerate only one
    orientations = (1,) if tau == 0.0 else (1, 2)
    for orientation in orientations:
        warm = None
        for kprime in kprime_candidates(config, grid, mu, tau):
            inc = _directions(grid.w.size, kprime, orientation)
            cand_best = None
            if warm is None:
                starts = list(base_starts)
            elif config.restarts == 1:
                starts = [warm]
            else:
                starts = list(base_starts) + [warm]
            # both extreme column patterns (all-inc, all-dec) occur
            # within orientation 1, so the corner sweep runs only there
            extra = []
            keep = 0
            if orientation == 1 and kprime in (0, grid.w.size):
                extra += _row_corner_starts(data.n, grid.w.size, grid.z.size,
                                            target_p, lo, inc)
                keep = 4
            if vertices is not None:
                extra += list(vertices)
                keep = 10
            if extra:
                scored = []
                for vq in extra:
                    pv = _project(vq, inc, lo, target_p, config.tol_feas)
                    try:
                        fv = _objective(pv, s, c, tau, grid, direction,
                                        config.inner_mode)
                    except FloatingPointError:
                        continue
                    scored.append((sgn * fv, pv))
                scored.sort(key=lambda t: -t[0])
                starts += [pv for _, pv in scored[:keep]]
            for q0 in starts:
                try:
                    q, f, its = _pg_ascent(q0, inc, lo, target_p, s, c, tau,
                                           grid, direction, config.inner_mode, config)
                except FloatingPointError:
                    continue
                total_iters += its
                if cand_best is None or sgn * (f - cand_best[1]) > 0:
                    cand_best = (q, f, its)
            if cand_best is None:
                continue
            q, f, its = cand_best
            warm = q
            resid = feasibility_residual(q, inc, lo, target_p)
            candidates.append({"kprime": int(kprime), "orientation": orientation,
                               "objective": f, "iterations": its,
                               "feas_residual": resid})
            if best is None or sgn * (f - best[1]) > 0:
                best = (q, f, kprime, orientation, resid)

    if best is None:
        raise SolverError("no feasible candidate solve succeeded")
    q, f, kprime, orientation, resid = best
    degraded = resid > config.tol_feas
    return Opt2Solution(value=f, direction=direction, best_kprime=int(kprime),
                        best_orientation=orientation, q_opt=q,
                        feas_residual=resid, iterations=total_iters,
                        degraded=degraded, candidates=candidates)


def a1_bound(data: MetaDataset, tau: float, mu: float, target_p: float,
             config: OptConfig | None = None,
             grid: MCGrid | None = None) -> ExtBoundResult:
    """Lower and upper worst-case bias over the discretized class."""
    config = config or OptConfig()
    if grid is None:
        grid = MCGrid.generate(config.seed, config.k1, config.k2)
    up = solve_opt2(data, tau, mu, target_p, config, "max", grid)
    lowr = solve_opt2(data, tau, mu, target_p, config, "min", grid)
    bound = BoundResult(p=target_p, lower=min(lowr.value, up.value),
                        upper=max(lowr.value, up.value), method="A1", tau_used=tau)
    return ExtBoundResult(bound=bound, lower_solution=lowr, upper_solution=up)


def extended_bound(data: MetaDataset, tau: float, mu: float, target_p: float,
                   config: OptConfig | None = None,
                   grid: MCGrid | None = None) -> ExtendedBound:
    """Envelope of the closed-form bound and the optimized bound, with
    the interval-length ratio relative to the closed-form bound."""
    cj = cj_bound(data, tau, target_p)
    if target_p >= 1.0:
        zero = BoundResult(p=1.0, lower=0.0, upper=0.0, method="extended", tau_used=tau)
        a1 = a1_bound(data, tau, mu, 1.0, config, grid)
        return ExtendedBound(bound=zero, cj=cj, a1=a1, ratio=1.0)
    a1 = a1_bound(data, tau, mu, target_p, config, grid)
    lower = min(a1.bound.lower, cj.lower)
    upper = max(a1.bound.upper, cj.upper)
    bound = BoundResult(p=target_p, lower=lower, upper=upper,
                        method="extended", tau_used=tau)
    ratio = (upper - lower) / cj.width if cj.width > 0 else 1.0
    return ExtendedBound(bound=bound, cj=cj, a1=a1, ratio=ratio)
