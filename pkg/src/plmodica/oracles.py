"""
Independent references: closed-form profiles and decay rates, a direct
summation mollifier, and the propagation-of-zeros experiment.

Everything here is deliberately simple, single-threaded code.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from plmodica.evolution import SimulationParams, run
from plmodica.grid import ScalarField, bump_kernel, gradient, sup_norm
from plmodica.modica import check_initial_estimate
from plmodica.potential import Potential, double_well

SQRT2 = math.sqrt(2.0)
RK4_STEP = 1e-4


@dataclass
class Profile1D:
    x: np.ndarray
    u: np.ndarray
    du: np.ndarray
    p: float = 2.0
    potential: Potential = field(default_factory=double_well, repr=False)

    def equality_residual(self) -> np.ndarray:
        """(p-1)/p |u'|^p - F(u), zero for an exact equality-case profile."""
        return (self.p - 1.0) / self.p * np.abs(self.du) ** self.p - self.potential.F(self.u)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("x", "u"))
            for xi, ui in zip(self.x, self.u):
                w.writerow((repr(float(xi)), repr(float(ui))))
        return path


def tanh_wave(x) -> Profile1D:
    """u = tanh(x / sqrt 2), the standing wave of Lap u = u^3 - u."""
    x = np.asarray(x, dtype=np.float64)
    u = np.tanh(x / SQRT2)
    return Profile1D(x, u, (1.0 - u * u) / SQRT2, 2.0, double_well())


_dense_cache: dict = {}


def _rk4_branch(rate, u0, length, sign):
    n = int(math.ceil(length / RK4_STEP))
    xs = np.empty(n + 1)
    us = np.empty(n + 1)
    h = sign * RK4_STEP
    u = u0
    xs[0], us[0] = 0.0, u0
    for k in range(1, n + 1):
        k1 = rate(u)
        k2 = rate(u + 0.5 * h * k1)
        k3 = rate(u + 0.5 * h * k2)
        k4 = rate(u + h * k3)
        u = u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        xs[k], us[k] = k * h, u
    return xs, us


def _dense_profile(p, P: Potential, u0, length):
    key = (float(p), P.name, float(u0))
    hit = _dense_cache.get(key)
    if hit is not None and hit[0] >= length:
        return hit[1], hit[2]
    c = p / (p - 1.0)
    F = P.F
    inv_p = 1.0 / p

    def rate(v):
        return (c * max(float(F(v)), 0.0)) ** inv_p

    xr, ur = _rk4_branch(rate, float(u0), length, +1.0)
    xl, ul = _rk4_branch(rate, float(u0), length, -1.0)
    x = np.concatenate([xl[::-1], xr[1:]])
    u = np.concatenate([ul[::-1], ur[1:]])
    _dense_cache[key] = (length, x, u)
    return x, u


def modica_profile(p: float, P: Potential, u0: float, x_samples) -> Profile1D:
    """Increasing solution of u' = (p/(p-1) F(u))^(1/p) with u(0) = u0.

    Integrated by classical RK4 at step 1e-4 in x, then resampled with cubic
    Hermite interpolation (values and slopes both known on the dense grid).
    """
    if not 1.0 < p <= 2.0:
        raise ValueError("p must lie in (1, 2]")
    if not float(P.F(np.array(u0))) > 0.0:
        raise ValueError("degenerate start (constant solution)")
    x_samples = np.asarray(x_samples, dtype=np.float64)
    length = float(np.max(np.abs(x_samples))) + 2 * RK4_STEP
    x, u = _dense_profile(p, P, u0, length)
    c = p / (p - 1.0)
    slope = (c * np.maximum(P.F(u), 0.0)) ** (1.0 / p)
    us = CubicHermiteSpline(x, u, slope)(x_samples)
    du = (c * np.maximum(P.F(us), 0.0)) ** (1.0 / p)
    return Profile1D(x_samples, us, du, p, P)


def spectral_decay(k: int, t: float) -> float:
    """Amplitude e^{-k^2 t} of the mode sin(kx) under the heat flow on [0, 2 pi)."""
    return math.exp(-k * k * t)


def brute_mollify(g: ScalarField, radius: float) -> ScalarField:
    """Direct O(N W) convolution with the shared bump kernel.

    Out-of-range neighbours wrap (periodic) or clamp to the frame
    (Dirichlet). Offsets are summed in ascending source index.
    """
    grid = g.grid
    w = bump_kernel(radius, grid.h, grid.n)
    half = w.shape[0] // 2
    vals = g.values
    out = np.empty(grid.shape)

    def idx(i, n):
        if grid.periodic:
            return i % n
        return min(max(i, 0), n - 1)

    if grid.n == 1:
        (nx,) = grid.shape
        for i in range(nx):
            acc = 0.0
            for k in range(-half, half + 1):
                acc += float(w[k + half]) * float(vals[idx(i + k, nx)])
            out[i] = acc
    else:
        nx, ny = grid.shape
        for i in range(nx):
            for j in range(ny):
                acc = 0.0
                for a in range(-half, half + 1):
                    ia = idx(i + a, nx)
                    for b in range(-half, half + 1):
                        acc += float(w[a + half, b + half]) * float(vals[ia, idx(j + b, ny)])
                out[i, j] = acc
    return g.with_values(out)


def _nearest_zero(P: Potential, v: float) -> float | None:
    """Newton on f from v; returns a zero of F near v, or None."""
    u = v
    for _ in range(60):
        d = float(P.df(np.array(u)))
        if d == 0.0:
            break
        nxt = u - float(P.f(np.array(u))) / d
        if nxt == u:
            break
        u = nxt
    return u if float(P.F(np.array(u))) <= 1e-12 else None


def zero_growth_constant(P: Potential, u0: float, p: float) -> float:
    """C in |Du| <= C |u - u0| near a zero u0 of F.

    F(u) <= K (u - u0)^2 with K = sup F''/2 over u0 +- 0.1, and the gradient
    bound |Du|^p <= p/(p-1) F(u) then gives C = (p/(p-1) K)^(1/p) for
    |u - u0| <= 1.
    """
    K = 0.5 * float(np.max(P.df(np.linspace(u0 - 0.1, u0 + 0.1, 401))))
    return (p / (p - 1.0) * max(K, 0.0)) ** (1.0 / p)


@dataclass
class ZerosReport:
    status: str
    passed: bool
    drift: float = 0.0
    margin: float = math.inf
    ode_ratio: float = 0.0
    checked_cells: int = 0
    times: list = field(default_factory=list)
    result: object = field(default=None, repr=False)

    def lines(self):
        if self.status == "boundary case, excluded":
            return ["zeros experiment: boundary case, excluded"]
        if self.status == "constant":
            verdict = "PASS" if self.passed else "FAIL"
            return [f"zeros experiment constant branch drift {self.drift:.3e} threshold 1.0e-12 {verdict}"]
        return [
            f"zeros experiment min interior F {self.margin:.3e} threshold >0 {'PASS' if self.margin > 0 else 'FAIL'}",
            f"zeros experiment local growth ratio {self.ode_ratio:.4f} over {self.checked_cells} cells threshold 1 "
            f"{'PASS' if self.ode_ratio <= 1.0 else 'FAIL'}",
        ]


def zeros_experiment(g: ScalarField, params: SimulationParams, P: Potential, n_steps: int | None = None,
                     estimate_tol: float | None = None) -> ZerosReport:
    """Contrapositive check of propagation of zeros along a run.

    At every recorded time the state is either constant (oscillation at most
    1e-8 sup|g|) or F(u) > 0 on every interior cell. Where F(u) < 1e-3 the
    local growth |Du| <= C |u - u0| towards the nearby zero u0 of F is also
    checked; this is the bound that forces a profile touching a zero to be
    flat there.
    """
    scale = max(sup_norm(g), 1e-300)
    inner = g.grid.interior()
    is_const = (g.values.max() - g.values.min()) <= 1e-8 * scale
    if not is_const and np.min(P.F(g.values[inner])) <= 1e-14:
        return ZerosReport("boundary case, excluded", True)
    if not is_const:
        tol = 5 * g.grid.h**2 if estimate_tol is None else estimate_tol
        rep = check_initial_estimate(g, params.p, P, tol)
        if not rep.satisfied:
            raise ValueError(f"datum violates the gradient estimate (excess {rep.max_excess:.3e})")

    res = run(g, params, P, n_steps=n_steps)
    times = [t for t, _ in res.snapshots]
    if is_const:
        drift = max(float(np.max(np.abs(v - g.values))) for _, v in res.snapshots)
        osc_ok = all(o <= 1e-8 * scale for o in res.diagnostics.osc)
        return ZerosReport("constant", bool(osc_ok and drift <= 1e-12), drift=drift, times=times, result=res)

    margin = math.inf
    worst_ratio = 0.0
    checked = 0
    ok = True
    for (_, v), osc in zip(res.snapshots, res.diagnostics.osc):
        u = ScalarField(g.grid, v)
        if osc <= 1e-8 * scale:
            continue
        Fin = P.F(v[inner])
        margin = min(margin, float(Fin.min()))
        ok &= bool(Fin.min() > 0.0)
        near = Fin < 1e-3
        if not near.any():
            continue
        mag = gradient(u).norm()[inner][near]
        vals = v[inner][near]
        for m, val in zip(mag, vals):
            u0 = _nearest_zero(P, float(val))
            if u0 is None:
                continue
            C = zero_growth_constant(P, u0, params.p)
            dist = abs(val - u0)
            ratio = math.inf if dist == 0.0 and m > 0 else (0.0 if m == 0 else m / (C * dist))
            worst_ratio = max(worst_ratio, ratio)
            checked += 1
    passed = ok and worst_ratio <= 1.0
    return ZerosReport("non-constant", passed, margin=margin, ode_ratio=worst_ratio, checked_cells=checked,
                       times=times, result=res)
