"""Parametric selection models and their three representations.

Each model gives the publication probability of a study:

* ``p0(y, s)``   -- conditional on the observed estimate and its SE,
* ``p1(mu~, s)`` -- marginalized over the within-study sampling error,
* ``p2(s)``      -- marginalized additionally over the random effect.

The t-statistic families (all but Copas-Heckman) depend on the data only
through t = y/s (or |t| for two-sided variants), with the sign
convention beta >= 0 meaning larger t is more likely published.
Integrals use 64-point Gauss-Hermite quadrature; probit-family
integrands have closed forms.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .statkernel import Phi, find_root, phi

FAMILIES = ("copas-heckman", "logit1", "mlogit", "exp-gamma", "probit2", "logit2")
T_TYPE_FAMILIES = ("logit1", "mlogit", "exp-gamma", "probit2", "logit2")

# parameter that calibrate_intercept solves for, per family
FREE_PARAM = {
    "copas-heckman": "g0",
    "logit1": "beta",
    "mlogit": "beta",
    "exp-gamma": "beta",
    "probit2": "alpha",
    "logit2": "alpha",
}

_GH_X, _GH_W = np.polynomial.hermite.hermgauss(64)
_GH_Z = _GH_X * np.sqrt(2.0)          # standard-normal abscissae
_GH_P = _GH_W / np.sqrt(np.pi)        # weights summing to 1
_GL_X, _GL_W = np.polynomial.legendre.leggauss(129)


class CalibrationError(ValueError):
    """Target marginal selection probability unreachable for the family."""


@dataclass(frozen=True)
class REContext:
    """Random-effects parameters (mu, tau) the model is evaluated under;
    tau is treated as a fixed sensitivity parameter."""

    mu: float
    tau: float

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")


@dataclass(frozen=True)
class SelectionModel:
    family: str
    params: dict = field(default_factory=dict)
    tail: str = "one-sided"  # "one-sided" | "two-sided"; t-type families only

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.tail not in ("one-sided", "two-sided"):
            raise ValueError(f"unknown tail {self.tail!r}")
        if self.tail == "two-sided" and self.family == "copas-heckman":
            raise ValueError("two-sided tail applies to t-type families only")
        p = self.params
        if self.family == "copas-heckman":
            _require(p, "g0", "g1", "rho")
            if p["g1"] < 0:
                raise ValueError("g1 must be >= 0")
            if not -1.0 < p["rho"] < 1.0:
                raise ValueError("rho must be in (-1, 1)")
        elif self.family in ("logit1", "mlogit"):
            _require(p, "beta")
            if p["beta"] < 0:
                raise ValueError("beta must be >= 0")
        elif self.family == "exp-gamma":
            _require(p, "beta", "gamma")
            if p["beta"] < 0:
                raise ValueError("beta must be >= 0")
            if p["gamma"] not in (1, 2):
                raise ValueError("gamma must be 1 or 2")
        else:  # probit2 / logit2
            _require(p, "alpha", "beta")

    def with_params(self, **updates) -> "SelectionModel":
        return SelectionModel(self.family, {**self.params, **updates}, self.tail)


def _require(params: dict, *names):
    missing = [n for n in names if n not in params]
    if missing:
        raise ValueError(f"missing parameters: {', '.join(missing)}")


def p0(model: SelectionModel, y, s, ctx: REContext | None = None):
    """Publication probability given the observed (y, s)."""
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    if model.family == "copas-heckman":
        if ctx is None:
            raise ValueError("copas-heckman p0 requires an REContext")
        g0, g1, rho = model.params["g0"], model.params["g1"], model.params["rho"]
        v = ctx.tau ** 2 + s ** 2
        num = g0 + g1 / s + rho * s * (y - ctx.mu) / v
        den = np.sqrt(1.0 - rho ** 2 * s ** 2 / v)
        out = Phi(num / den)
    else:
        t = y / s
        if model.tail == "two-sided":
            t = np.abs(t)
        out = _p0_t(model, t, s)
    return out


def _p0_t(model: SelectionModel, t, s):
    p = model.params
    if model.family == "logit1":
        u = np.exp(-p["beta"] * (1.0 - Phi(t)))
        return 2.0 * u / (1.0 + u)
    if model.family == "mlogit":
        u = np.exp(-p["beta"] * s * (1.0 - Phi(t)))
        return 2.0 * u / (1.0 + u)
    if model.family == "exp-gamma":
        return np.exp(-p["beta"] * Phi(-t) ** p["gamma"])
    if model.family == "probit2":
        return Phi(p["alpha"] + p["beta"] * t)
    if model.family == "logit2":
        return expit(p["alpha"] + p["beta"] * t)
    raise AssertionError(model.family)


def p1(model: SelectionModel, mu_tilde, s, ctx: REContext | None = None):
    """Selection probability given the study-specific true effect mu~.

    Integrates p0 over y ~ N(mu~, s^2).  probit2 (one-sided) uses the
    normal-probit convolution identity.
    """
    mu_tilde = np.asarray(mu_tilde, dtype=float)
    s = np.asarray(s, dtype=float)
    if model.family == "probit2" and model.tail == "one-sided":
        a, b = model.params["alpha"], model.params["beta"]
        return Phi((a + b * mu_tilde / s) / np.sqrt(1.0 + b * b))
    mt, sv = np.broadcast_arrays(mu_tilde, s)
    if model.tail == "two-sided":
        # fold the |t| kink away: integrate G(u) (phi(u-m) + phi(u+m))
        # over u >= 0 with m = mu~/s, where the integrand is smooth
        m = np.abs(mt / sv)
        hi = m + 9.0
        u = 0.5 * hi[..., None] * (_GL_X + 1.0)       # (..., 129) on [0, hi]
        g = _p0_t(model, u, sv[..., None])
        dens = phi(u - m[..., None]) + phi(u + m[..., None])
        out = 0.5 * hi * ((g * dens) @ _GL_W)
    else:
        y_nodes = mt[..., None] + sv[..., None] * _GH_Z  # (..., 64)
        vals = p0(model, y_nodes, sv[..., None], ctx)
        out = np.asarray(vals @ _GH_P)
    return float(out) if out.ndim == 0 else out


def p2(model: SelectionModel, s, ctx: REContext):
    """Selection probability given only s, under mu~ ~ N(mu, tau^2).

    Degenerates to p1(mu, s) at tau = 0.  Copas-Heckman and one-sided
    probit2 have closed forms.
    """
    s = np.asarray(s, dtype=float)
    if model.family == "copas-heckman":
        out = np.asarray(Phi(model.params["g0"] + model.params["g1"] / s))
        return float(out) if out.ndim == 0 else out
    if model.family == "probit2" and model.tail == "one-sided":
        a, b = model.params["alpha"], model.params["beta"]
        out = np.asarray(Phi((a + b * ctx.mu / s) /
                             np.sqrt(1.0 + b * b * (1.0 + ctx.tau ** 2 / s ** 2))))
        return float(out) if out.ndim == 0 else out
    if ctx.tau == 0.0:
        out = np.asarray(p1(model, ctx.mu, s, ctx))
        return float(out) if out.ndim == 0 else out
    mu_nodes = ctx.mu + ctx.tau * _GH_Z  # (64,)
    vals = np.asarray(p1(model, mu_nodes, s[..., None], ctx))
    out = vals @ _GH_P
    return float(out) if out.ndim == 0 else out


def discretize_p1(model: SelectionModel, ctx: REContext, w: np.ndarray,
                  s: np.ndarray) -> np.ndarray:
    """Matrix q[i, k] = p1(mu + tau * w_k, s_i) over a w-sample."""
    mu_tilde = ctx.mu + ctx.tau * np.asarray(w, dtype=float)
    return np.asarray(p1(model, mu_tilde[None, :], np.asarray(s, float)[:, None], ctx))


def calibrate_intercept(family: str, fixed_params: dict, y, s, target_p: float,
                        ctx: REContext | None = None, tail: str = "one-sided",
                        tol: float = 1e-10) -> SelectionModel:
    """Solve the family's free parameter so that the sample-average
    selection probability (1/S) sum_i p0(y_i, s_i) equals target_p.

    The free parameter is g0 (copas-heckman), alpha (probit2/logit2), or
    beta (one-parameter families).  Raises CalibrationError naming the
    attainable range when the target cannot be reached.
    """
    if not 0.0 < target_p < 1.0:
        raise ValueError("target_p must be in (0, 1)")
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    free = FREE_PARAM[family]

    def mean_p(theta: float) -> float:
        m = SelectionModel(family, {**fixed_params, free: theta}, tail)
        return float(np.mean(p0(m, y, s, ctx)))

    resid = lambda th: mean_p(th) - target_p

    if free == "beta":
        # mean p0 decreases from 1 at beta = 0
        lo, hi = 0.0, 8.0
        if resid(lo) < 0:
            raise CalibrationError(
                f"{family}: target {target_p} exceeds the beta=0 ceiling {mean_p(lo):.6f}")
        while resid(hi) > 0 and hi < 1e3:
            hi *= 4.0
        if resid(hi) > 0:
            raise CalibrationError(
                f"{family}: attainable range is [{mean_p(hi):.3g}, {mean_p(0.0):.6f}], "
                f"target {target_p} is below it")
        root = find_root(resid, lo, hi, tol=1e-12)
    else:
        lo, hi = -50.0, 50.0
        while resid(lo) > 0 and lo > -1e4:
            lo *= 4.0
        while resid(hi) < 0 and hi < 1e4:
            hi *= 4.0
        if resid(lo) > 0 or resid(hi) < 0:
            raise CalibrationError(
                f"{family}: attainable range is [{mean_p(lo):.3g}, {mean_p(hi):.3g}] "
                f"for {free} in [{lo:.3g}, {hi:.3g}]")
        root = find_root(resid, lo, hi, tol=1e-12)

    model = SelectionModel(family, {**fixed_params, free: root}, tail)
    if abs(resid(root)) > max(tol, 1e-8):
        raise CalibrationError(f"{family}: calibration residual {resid(root):.3g} too large")
    return model


def check_A0(model: SelectionModel, ctx: REContext, s_grid,
             tol: float = 1e-10):
    """Scan p2 over an increasing s-grid for monotone non-increase.

    Returns ("monotone-nonincreasing", None) or ("violated-at", s*)
    with s* the first grid point where p2 increases.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any(np.diff(s_grid) <= 0):
        raise ValueError("s_grid must be strictly increasing")
    vals = np.asarray(p2(model, s_grid, ctx))
    rises = np.diff(vals) > tol
    if not np.any(rises):
        return ("monotone-nonincreasing", None)
    return ("violated-at", float(s_grid[int(np.argmax(rises)) + 1]))


def find_a1_threshold(q: np.ndarray, tol: float = 1e-9):
    """Threshold index and orientation under which a discretized p1
    matrix satisfies the single-direction-flip monotonicity constraint.

    `q` has shape (N, K1) with rows ordered by increasing s and columns
    by increasing w.  Returns (kprime, orientation) where columns
    k < kprime are non-increasing in s and the rest non-decreasing
    (orientation 1; orientation 2 is the mirror image), or None.
    """
    n, k1 = q.shape
    d = np.diff(q, axis=0)  # (N-1, K1)
    non_inc = np.all(d <= tol, axis=0)   # column non-increasing in s
    non_dec = np.all(d >= -tol, axis=0)
    for orient, first, second in ((1, non_inc, non_dec), (2, non_dec, non_inc)):
        for kprime in range(k1 + 1):
            if np.all(first[:kprime]) and np.all(second[kprime:]):
                return kprime, orient
    return None
