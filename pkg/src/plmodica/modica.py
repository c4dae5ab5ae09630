"""
The Modica functional for the regularized flow.

With phi(s) = (2/p)(eps^2 + s)^(p/2) and xi(s) = 2 s phi'(s) - phi(s), the
field P = xi(|Du|^2) - 2 F(u) is nonpositive exactly when the regularized
gradient bound holds; at eps = 0 this is |Du|^p <= p/(p-1) F(u).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from plmodica.grid import Grid, ScalarField, gradient
from plmodica.potential import Potential


@dataclass(frozen=True)
class ModicaProfile:
    p: float
    eps: float = 0.0

    def __post_init__(self):
        if not 1.0 < self.p <= 2.0:
            raise ValueError("p must lie in (1, 2]")
        if not self.eps >= 0.0:
            raise ValueError("eps must be nonnegative")


def _as_s(s):
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0):
        raise ValueError("s must be nonnegative")
    return s


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def phi(s, prof: ModicaProfile):
    s = _as_s(s)
    return _out((2.0 / prof.p) * (prof.eps**2 + s) ** (prof.p / 2.0))


def dphi(s, prof: ModicaProfile):
    """phi'(s) = (eps^2 + s)^(p/2 - 1); infinite at s = eps = 0 when p < 2."""
    s = _as_s(s)
    b = prof.eps**2 + s
    with np.errstate(divide="ignore"):
        return _out(np.where(b > 0, b, 0.0) ** (prof.p / 2.0 - 1.0))


def xi(s, prof: ModicaProfile):
    s = _as_s(s)
    p, e2 = prof.p, prof.eps**2
    b = e2 + s
    safe = np.where(b > 0, b, 1.0)
    first = np.where(b > 0, 2.0 * s * safe ** (p / 2.0 - 1.0), 0.0)
    return _out(first - (2.0 / p) * b ** (p / 2.0))


def lam(s, prof: ModicaProfile):
    """d xi / ds = (eps^2 + s)^(p/2 - 2) (eps^2 + (p-1) s), strictly positive."""
    s = _as_s(s)
    p, e2 = prof.p, prof.eps**2
    if p == 2.0:
        return _out(np.ones_like(s))
    if e2 == 0.0 and np.any(s == 0):
        raise ValueError("Λ undefined at s = ε = 0 for p < 2")
    return _out((e2 + s) ** (p / 2.0 - 2.0) * (e2 + (p - 1.0) * s))


def xi_shifted(s, prof: ModicaProfile):
    """xi(s) shifted up by (2/p) eps^p so that it vanishes at s = 0."""
    return _out(np.asarray(xi(s, prof)) + (2.0 / prof.p) * prof.eps**prof.p)


def g_eps(s, prof: ModicaProfile, delta: float):
    """xi_shifted(s) - delta (eps^2 + s)^(p/2); equals -delta eps^p at s = 0.

    Nondecreasing in s whenever delta <= 2(p-1)/p.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    s = _as_s(s)
    return _out(np.asarray(xi_shifted(s, prof)) - delta * (prof.eps**2 + s) ** (prof.p / 2.0))


@dataclass(frozen=True)
class PField:
    """Per-cell P values; frame cells of a Dirichlet grid are NaN (undefined)."""

    grid: Grid
    values: np.ndarray

    def interior_values(self) -> np.ndarray:
        return self.values[self.grid.interior()]

    def max(self) -> float:
        return float(np.max(self.interior_values()))

    def positive_part(self) -> float:
        return max(self.max(), 0.0)


def modica_field(u: ScalarField, prof: ModicaProfile, P: Potential) -> PField:
    s = np.sum(gradient(u).components ** 2, axis=0)
    values = np.asarray(xi(s, prof)) - 2.0 * P.F(u.values)
    if not u.grid.periodic:
        frame = ~u.grid.interior_mask()
        values = values.copy()
        values[frame] = np.nan
    return PField(u.grid, values)


@dataclass
class EstimateReport:
    max_excess: float
    location: tuple[int, ...]
    tolerance: float

    @property
    def satisfied(self) -> bool:
        return self.max_excess <= self.tolerance

    def lines(self):
        status = "PASS" if self.satisfied else "FAIL"
        return [
            f"initial gradient estimate max excess {self.max_excess:.3e} at cell {self.location} "
            f"threshold {self.tolerance:.3e} {status}"
        ]


def check_initial_estimate(g: ScalarField, p: float, P: Potential, tol: float = 1e-10) -> EstimateReport:
    """Max over interior cells of |Dg|^p - p/(p-1) F(g)."""
    if not 1.0 < p <= 2.0:
        raise ValueError("p must lie in (1, 2]")
    inner = g.grid.interior()
    mag = gradient(g).norm()[inner]
    excess = mag**p - p / (p - 1.0) * P.F(g.values[inner])
    k = np.unravel_index(int(np.argmax(excess)), excess.shape)
    if not g.grid.periodic:
        k = tuple(i + 1 for i in k)
    return EstimateReport(float(excess.max()), tuple(int(i) for i in k), tol)
