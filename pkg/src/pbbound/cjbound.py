"""Closed-form Copas-Jackson worst-case bias bound.

For selection probabilities that are non-increasing in the marginal
standard deviation sigma = sqrt(s^2 + tau^2), the worst-case bias at
marginal selection probability p is

    U = (sum sigma_i^-1 / sum sigma_i^-2) * phi(Phi^-1(p)) / p,  L = -U.

tau is an input sensitivity parameter, not estimated here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MetaDataset
from .statkernel import mills_factor


@dataclass(frozen=True)
class BoundResult:
    p: float
    lower: float
    upper: float
    method: str  # "CJ" | "A1" | "extended"
    tau_used: float

    def __post_init__(self):
        if self.lower > self.upper + 1e-12:
            raise ValueError(f"lower {self.lower} > upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower


def cj_bound(data: MetaDataset, tau: float, p: float) -> BoundResult:
    """Copas-Jackson bound at marginal selection probability p in (0, 1].

    p = 1 returns the exact zero bound (no unpublished studies).
    """
    if not 0.0 < p <= 1.0:
        raise ValueError("p must be in (0, 1]")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    sigma = np.sqrt(data.s ** 2 + tau * tau)
    scale = float(np.sum(1.0 / sigma) / np.sum(1.0 / sigma ** 2))
    u = scale * mills_factor(p)
    return BoundResult(p=p, lower=-u, upper=u, method="CJ", tau_used=tau)


def cj_bound_sweep(data: MetaDataset, tau: float, p_grid) -> list[BoundResult]:
    """One bound per grid point; U is non-increasing in p."""
    return [cj_bound(data, tau, p) for p in p_grid]
