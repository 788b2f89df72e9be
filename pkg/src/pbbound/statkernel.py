"""Scalar statistical primitives shared by every other module.

Standard-normal pdf/cdf/quantile, seeded sampling, and a bracketing
root finder.  Everything here is deterministic and thread-safe; RNG
streams are derived per-task from a master seed plus an index.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import optimize, special

Z975 = 1.959963985  # 97.5% standard-normal quantile

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def phi(x):
    """Standard normal density, elementwise."""
    x = np.asarray(x, dtype=float)
    out = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return float(out) if out.ndim == 0 else out


def Phi(x):
    """Standard normal cdf, elementwise (erfc-based, ~1e-16 accurate)."""
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


def Phi_inv(q):
    """Standard normal quantile on (0, 1), polished with one Newton step.

    Raises ValueError at q <= 0 or q >= 1.
    """
    q_arr = np.asarray(q, dtype=float)
    if np.any(q_arr <= 0.0) or np.any(q_arr >= 1.0):
        raise ValueError("Phi_inv requires q in the open interval (0, 1)")
    x = special.ndtri(q_arr)
    # one Newton step: x <- x - (Phi(x) - q) / phi(x)
    x = x - (special.ndtr(x) - q_arr) / (_INV_SQRT_2PI * np.exp(-0.5 * x * x))
    return float(x) if x.ndim == 0 else x


def mills_factor(p):
    """phi(Phi_inv(p)) / p for p in (0, 1]; returns 0 at p = 1 (limit)."""
    p = float(p)
    if not 0.0 < p <= 1.0:
        raise ValueError("mills_factor requires p in (0, 1]")
    if p == 1.0:
        return 0.0
    return phi(Phi_inv(p)) / p


def rng_for(seed: int, *indices: int) -> np.random.Generator:
    """Independent generator for a task under a master seed.

    The index tuple names the task (e.g. replication number, grid
    point); identical tuples always give identical streams.
    """
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), *(int(i) for i in indices)]))


def sample_normal(seed: int, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng_for(seed).standard_normal(n)


def sample_lognormal(seed: int, mu_log: float, sd_log: float, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    if sd_log <= 0:
        raise ValueError("sd_log must be > 0")
    return np.exp(rng_for(seed).standard_normal(n) * sd_log + mu_log)


def antithetic_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    """Sorted standard-normal sample with exact mean 0 (mirrored pairs).

    For odd n the center point is 0.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    half = rng.standard_normal(n // 2)
    parts = [half, -half]
    if n % 2:
        parts.append(np.zeros(1))
    return np.sort(np.concatenate(parts))


def find_root(f, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Root of a sign-changing scalar function on [lo, hi] via Brent.

    Raises ValueError when f(lo) and f(hi) have the same sign so the
    caller can widen the bracket.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise ValueError(f"no sign change on [{lo}, {hi}]: f={flo:.3g},{fhi:.3g}")
    return optimize.brentq(f, lo, hi, xtol=tol)
