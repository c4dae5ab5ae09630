"""Nonlinearities F >= 0 with f = F' and f' = F'', plus sampled structural checks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

ArrayFn = Callable[[np.ndarray], np.ndarray]

SCAN_STEP = 1e-3
SCAN_WIDTH = 10.0
# sampled checks never look beyond this window, even on an unbounded range
_SAMPLE_WINDOW = 10.0


@dataclass(frozen=True)
class Potential:
    """F and its first two derivatives, all vectorised over numpy arrays."""

    name: str
    F: ArrayFn
    f: ArrayFn
    df: ArrayFn
    admissible: tuple[float, float] = (-math.inf, math.inf)

    def contains(self, values) -> bool:
        lo, hi = self.admissible
        v = np.asarray(values)
        return bool(np.all(v >= lo) and np.all(v <= hi))

    def lipschitz(self, lo: float, hi: float, samples: int = 2001) -> float:
        """max |f'| over [lo, hi] by dense sampling (endpoints included)."""
        u = np.linspace(lo, hi, samples)
        return float(np.max(np.abs(self.df(u))))

    def sample_range(self) -> tuple[float, float]:
        lo, hi = self.admissible
        return max(lo, -_SAMPLE_WINDOW), min(hi, _SAMPLE_WINDOW)

    def derivative_mismatch(self, samples: int = 1000) -> tuple[float, float]:
        """Worst relative central-difference mismatch of F vs f and f vs f'.

        Relative to max(|exact|, 1) so that zeros of f do not blow up the ratio.
        """
        lo, hi = self.sample_range()
        u = np.linspace(lo, hi, samples)
        d = 1e-5 * np.maximum(1.0, np.abs(u))
        fd_F = (self.F(u + d) - self.F(u - d)) / (2 * d)
        fd_f = (self.f(u + d) - self.f(u - d)) / (2 * d)
        f = self.f(u)
        df = self.df(u)
        e1 = np.max(np.abs(fd_F - f) / np.maximum(np.abs(f), 1.0))
        e2 = np.max(np.abs(fd_f - df) / np.maximum(np.abs(df), 1.0))
        return float(e1), float(e2)


def _vectorize(fn):
    return lambda u: fn(np.asarray(u, dtype=np.float64))


def double_well() -> Potential:
    """F(u) = (1 - u^2)^2 / 4, the Allen-Cahn well with f = u^3 - u."""
    return Potential(
        "double_well",
        _vectorize(lambda u: 0.25 * (1.0 - u * u) ** 2),
        _vectorize(lambda u: u * u * u - u),
        _vectorize(lambda u: 3.0 * u * u - 1.0),
        admissible=(-10.0, 10.0),
    )


def sine_potential() -> Potential:
    """F(u) = 1 - cos u, the nonnegative antiderivative of sin u."""
    return Potential(
        "sine",
        _vectorize(lambda u: 1.0 - np.cos(u)),
        _vectorize(np.sin),
        _vectorize(np.cos),
    )


def zero_potential() -> Potential:
    """F = 0: the homogeneous (pure diffusion) case."""
    return Potential(
        "zero",
        _vectorize(np.zeros_like),
        _vectorize(np.zeros_like),
        _vectorize(np.zeros_like),
    )


def polynomial_potential(coeffs, admissible=(-10.0, 10.0)) -> Potential:
    """F(u) = sum_k coeffs[k] u^k (low to high degree)."""
    P = np.polynomial.Polynomial(np.asarray(coeffs, dtype=np.float64))
    dP = P.deriv()
    ddP = dP.deriv()
    name = "poly:" + ",".join(repr(float(c)) for c in coeffs)
    return Potential(name, _vectorize(P), _vectorize(dP), _vectorize(ddP), admissible=tuple(admissible))


def parse_potential(spec: str) -> Potential:
    """``double_well`` | ``sine`` | ``zero`` | ``poly:c0,c1,...``."""
    spec = spec.strip()
    if spec == "double_well":
        return double_well()
    if spec == "sine":
        return sine_potential()
    if spec == "zero":
        return zero_potential()
    if spec.startswith("poly:"):
        try:
            coeffs = [float(c) for c in spec[5:].split(",") if c.strip()]
        except ValueError as exc:
            raise ValueError(f"bad polynomial coefficients in {spec!r}") from exc
        if not coeffs:
            raise ValueError("polynomial potential needs at least one coefficient")
        return polynomial_potential(coeffs)
    raise ValueError(f"unknown potential {spec!r}")


@dataclass(frozen=True)
class AssumptionCertificate:
    """Bracketing values with -q <= M1 <= -M, M <= M2 <= q and f(M1) <= 0 <= f(M2)."""

    M: float
    M1: float
    M2: float
    q: float

    def holds(self, potential: Potential) -> bool:
        f1 = float(potential.f(np.array(self.M1)))
        f2 = float(potential.f(np.array(self.M2)))
        return (
            -self.q <= self.M1 <= -self.M
            and self.M <= self.M2 <= self.q
            and f1 <= 0.0 <= f2
        )


def _first_crossing(f, start, direction, bound, want_nonneg):
    ok = (lambda v: v >= 0.0) if want_nonneg else (lambda v: v <= 0.0)
    prev = None
    k = 0
    while True:
        u = start + direction * k * SCAN_STEP
        if direction * (u - bound) > 0:
            return None
        if ok(float(f(np.array(u)))):
            break
        prev = u
        k += 1
    if prev is None:
        return u
    # tighten the bracket so the answer does not depend on where the scan grid fell
    good, bad = u, prev
    for _ in range(80):
        mid = 0.5 * (good + bad)
        if mid == good or mid == bad:
            break
        if ok(float(f(np.array(mid)))):
            good = mid
        else:
            bad = mid
    return good


def certify_assumption(P: Potential, M: float) -> AssumptionCertificate:
    """Smallest M2 >= M with f(M2) >= 0 and largest M1 <= -M with f(M1) <= 0.

    Scans outward at step 1e-3 up to q = M + 10, then bisects the last
    scan interval.
    """
    M = float(M)
    if not math.isfinite(M) or M < 0:
        raise ValueError("M must be a finite nonnegative number")
    q = M + SCAN_WIDTH
    M2 = _first_crossing(P.f, M, +1.0, q, want_nonneg=True)
    M1 = _first_crossing(P.f, -M, -1.0, -q, want_nonneg=False)
    if M1 is None or M2 is None:
        raise ValueError("bracketing assumption not certifiable: f keeps one sign out to the scan bound")
    return AssumptionCertificate(M, M1, M2, q)


@dataclass
class NonnegReport:
    minimum: float
    argmin: float
    negative: bool

    def lines(self) -> list[str]:
        status = "FAIL" if self.negative else "PASS"
        return [f"min F {self.minimum:.3e} at u={self.argmin:.6g} threshold -1.0e-12 {status}"]


def nonneg_report(P: Potential, lo: float, hi: float, samples: int = 10_000) -> NonnegReport:
    if not lo < hi:
        raise ValueError("need lo < hi")
    u = np.linspace(lo, hi, samples)
    F = P.F(u)
    k = int(np.argmin(F))
    return NonnegReport(float(F[k]), float(u[k]), bool(F[k] < -1e-12))
