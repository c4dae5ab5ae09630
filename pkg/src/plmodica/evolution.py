"""
Forward-Euler time stepping of the regularized Cauchy problem on a
truncated box, and the multi-run experiments built on it.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from plmodica.grid import Grid, ScalarField, gradient, sup_norm, write_plmf
from plmodica.modica import ModicaProfile, modica_field
from plmodica.operators import RegularizationParams, rhs_with_count
from plmodica.potential import AssumptionCertificate, Potential, certify_assumption

logger = logging.getLogger(__name__)

CSV_HEADER = ("t", "maxP", "supU", "supDu", "minF", "osc")


class BlowUpError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimulationParams:
    p: float
    eps: float = 0.0
    T: float = 1.0
    dt: float | None = None
    cfl_safety: float = 0.9
    record_every: int = 50

    def __post_init__(self):
        RegularizationParams(self.p, self.eps)
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.dt is not None and self.T < self.dt:
            raise ValueError("horizon T must be at least dt")
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if int(self.record_every) < 1:
            raise ValueError("record_every must be a positive step count")

    @property
    def reg(self) -> RegularizationParams:
        return RegularizationParams(self.p, self.eps)

    @property
    def profile(self) -> ModicaProfile:
        return ModicaProfile(self.p, self.eps)


@dataclass
class DiagnosticsSeries:
    t: list = field(default_factory=list)
    maxP: list = field(default_factory=list)
    supU: list = field(default_factory=list)
    supDu: list = field(default_factory=list)
    minF: list = field(default_factory=list)
    osc: list = field(default_factory=list)

    def append(self, t, u: ScalarField, prof: ModicaProfile, P: Potential):
        inner = u.grid.interior()
        self.t.append(float(t))
        self.maxP.append(modica_field(u, prof, P).max())
        self.supU.append(sup_norm(u))
        self.supDu.append(gradient(u).sup_norm(interior_only=True))
        self.minF.append(float(np.min(P.F(u.values[inner]))))
        self.osc.append(float(u.values.max() - u.values.min()))

    def __len__(self):
        return len(self.t)

    def rows(self):
        return list(zip(self.t, self.maxP, self.supU, self.supDu, self.minF, self.osc))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for row in self.rows():
                w.writerow([repr(float(v)) for v in row])
        return path


def cfl_dt(grid: Grid, params: SimulationParams, P: Potential | None = None, grad_bound: float = 0.0,
           value_range: tuple[float, float] | None = None) -> float:
    """safety * min(h^2 / (2 n max(1, p-1)), 1 / max(1, L_f (eps^2 + G^2)^((2-p)/2))).

    ``L_f`` is max |f'| over ``value_range``; it is 0 without a potential.
    """
    p, eps = params.p, params.eps
    diffusive = grid.h**2 / (2 * grid.n * max(1.0, p - 1.0))
    lf = 0.0
    if P is not None and value_range is not None:
        lf = P.lipschitz(*value_range)
    factor = 1.0 if p == 2.0 else (eps**2 + grad_bound**2) ** ((2.0 - p) / 2.0)
    reactive = 1.0 / max(1.0, lf * factor)
    return params.cfl_safety * min(diffusive, reactive)


def step(u: ScalarField, params: SimulationParams, P: Potential, dt: float | None = None) -> ScalarField:
    """One forward-Euler step on interior cells; frame cells keep their values.

    Cells where the coefficient matrix is undefined (p < 2, eps = 0, Du = 0)
    use the identity matrix.
    """
    if dt is None:
        dt = params.dt if params.dt is not None else cfl_dt(u.grid, params)
    return _advance(u, params.reg, P, dt)[0]


def _advance(u: ScalarField, reg: RegularizationParams, P: Potential, dt: float):
    r, nsing = rhs_with_count(u, reg, P)
    new = u.values + dt * r.values
    if not u.grid.periodic:
        frame = ~u.grid.interior_mask()
        new[frame] = u.values[frame]
    if not np.isfinite(new).all():
        raise BlowUpError("blow-up: reduce dt or check potential range")
    return ScalarField(u.grid, new), nsing


@dataclass
class Plan:
    certificate: AssumptionCertificate | None
    value_range: tuple[float, float]
    grad_bound: float
    dt_bound: float


def plan_run(g: ScalarField, params: SimulationParams, P: Potential) -> Plan:
    """Certify the bracketing assumption for the datum and compute the stable step."""
    M = sup_norm(g)
    if not P.contains(np.array([-M - 1.0, M + 1.0])):
        raise ValueError(f"potential {P.name} is not admissible on [-{M + 1:g}, {M + 1:g}]")
    try:
        cert = certify_assumption(P, M)
        value_range = (cert.M1, cert.M2)
    except ValueError:
        if params.p == 2.0:
            raise
        # bracketing is only needed at p = 2
        cert = None
        value_range = (-M - 1.0, M + 1.0)
    G = gradient(g).sup_norm(interior_only=True)
    return Plan(cert, value_range, G, cfl_dt(g.grid, params, P, G, value_range))


@dataclass
class RunResult:
    final: ScalarField
    diagnostics: DiagnosticsSeries
    snapshots: list
    dt: float
    steps: int
    certificate: AssumptionCertificate | None
    max_modulus: float
    substituted_cells: int

    @property
    def modulus_bound(self) -> float | None:
        return None if self.certificate is None else self.certificate.q + 1e-6

    @property
    def bounded(self) -> bool:
        b = self.modulus_bound
        return True if b is None else self.max_modulus <= b


def run(g: ScalarField, params: SimulationParams, P: Potential, *, snapshot_dir=None, keep_snapshots: bool = True,
        n_steps: int | None = None, enforce_estimate: bool = False, estimate_tol: float = 1e-10) -> RunResult:
    """Evolve ``g`` to time T (or for exactly ``n_steps`` steps).

    The step is the CFL bound (or ``params.dt``) shrunk so that a whole
    number of steps lands on T. Diagnostics and snapshots are taken at
    t = 0, every ``record_every`` steps, and at the end.
    """
    if enforce_estimate:
        from plmodica.modica import check_initial_estimate

        rep = check_initial_estimate(g, params.p, P, estimate_tol)
        if not rep.satisfied:
            raise ValueError(f"initial datum violates the gradient estimate (excess {rep.max_excess:.3e})")
    plan = plan_run(g, params, P)
    if params.dt is not None:
        if params.dt > plan.dt_bound * (1 + 1e-12):
            raise ValueError(f"dt={params.dt:g} exceeds the stability bound {plan.dt_bound:g}")
        dt = params.dt
    else:
        dt = plan.dt_bound
    if n_steps is None:
        n_steps = max(1, math.ceil(params.T / dt - 1e-9))
        dt = params.T / n_steps
    if snapshot_dir is not None:
        snapshot_dir = Path(snapshot_dir)
        snapshot_dir.mkdir(parents=True, exist_ok=True)

    reg, prof = params.reg, params.profile
    diag = DiagnosticsSeries()
    snaps = []

    def record(k, u):
        t = k * dt
        diag.append(t, u, prof, P)
        if keep_snapshots:
            snaps.append((t, u.values))
        if snapshot_dir is not None:
            write_plmf(snapshot_dir / f"snap_{k:07d}.plmf", u, t)

    u = g
    record(0, u)
    max_mod = sup_norm(u)
    substituted = 0
    every = int(params.record_every)
    for k in range(1, n_steps + 1):
        u, nsing = _advance(u, reg, P, dt)
        if nsing:
            substituted += nsing
            logger.debug("step %d: identity coefficients at %d zero-gradient cells", k, nsing)
        max_mod = max(max_mod, sup_norm(u))
        if k % every == 0 or k == n_steps:
            record(k, u)
    if substituted:
        logger.warning("identity coefficients substituted at %d zero-gradient cell-steps", substituted)
    result = RunResult(u, diag, snaps, dt, n_steps, plan.certificate, max_mod, substituted)
    if not result.bounded:
        logger.warning("sup|u| = %g exceeded the certified bound %g", max_mod, result.modulus_bound)
    return result


@dataclass
class PairReport:
    times: np.ndarray
    ratios: np.ndarray
    exponent: float
    reference: float
    initial_separation: float
    runs: tuple = field(default=(), repr=False)
    # rounding budget on the ratio: a few ulps of sup|u| per step, relative to the separation
    allowance: float = 1e-12

    @property
    def passed(self) -> bool:
        return self.exponent <= self.reference

    @property
    def nonexpansive(self) -> bool:
        return bool(np.all(self.ratios <= 1.0 + self.allowance))

    def lines(self):
        status = "PASS" if self.passed else "FAIL"
        return [
            f"contraction exponent {self.exponent:.4f} threshold {self.reference:.4f} {status}",
            f"max separation ratio {self.ratios.max():.6f} (nonexpansive: {self.nonexpansive})",
        ]


def _shared_dt(data, params, P):
    plans = [plan_run(g, params, P) for g in data]
    dt = min(pl.dt_bound for pl in plans)
    if params.dt is not None:
        dt = min(dt, params.dt)
    return dt, plans


def evolve_pair(g1: ScalarField, g2: ScalarField, params: SimulationParams, P: Potential) -> PairReport:
    """Run two data side by side and measure M = max_t log(|u-v|_inf(t) / |g1-g2|_inf) / t.

    The reference is L_f max(1, (eps^2 + G^2)^((2-p)/2)) + 0.1 with L_f over
    the certified range of both data and G the largest gradient seen.
    """
    if g1.grid != g2.grid:
        raise ValueError("data live on different grids")
    d0 = sup_norm(g1.values - g2.values)
    if d0 == 0.0:
        raise ValueError("zero initial separation")
    dt, plans = _shared_dt((g1, g2), params, P)
    shared = replace(params, dt=dt)
    a = run(g1, shared, P)
    b = run(g2, shared, P)
    times = np.array([t for t, _ in a.snapshots])
    ratios = np.array([sup_norm(ua - ub) / d0 for (_, ua), (_, ub) in zip(a.snapshots, b.snapshots)])
    positive = times > 0
    with np.errstate(divide="ignore"):
        rates = np.log(ratios[positive]) / times[positive]
    exponent = float(np.max(rates)) if rates.size else -math.inf

    lo = min(pl.value_range[0] for pl in plans)
    hi = max(pl.value_range[1] for pl in plans)
    lf = P.lipschitz(lo, hi)
    G = max(max(a.diagnostics.supDu), max(b.diagnostics.supDu))
    factor = 1.0 if params.p == 2.0 else (params.eps**2 + G**2) ** ((2.0 - params.p) / 2.0)
    reference = lf * max(1.0, factor) + 0.1
    scale = max(max(a.diagnostics.supU), max(b.diagnostics.supU))
    allowance = max(1e-12, 4 * np.finfo(np.float64).eps * a.steps * scale / d0)
    return PairReport(times, ratios, exponent, reference, d0, (a, b), allowance)


@dataclass
class SweepReport:
    eps_list: list
    distances: list
    runs: list = field(repr=False, default_factory=list)

    @property
    def finals(self):
        return [r.final for r in self.runs]

    @property
    def decreasing(self) -> bool:
        d = self.distances
        return all(d[i] > d[i + 1] for i in range(len(d) - 1))

    @property
    def eps_independent(self) -> bool:
        return max(self.distances, default=0.0) <= 1e-12

    @property
    def passed(self) -> bool:
        return self.decreasing or self.eps_independent

    def lines(self):
        status = "PASS" if self.passed else "FAIL"
        ds = ", ".join(f"{d:.3e}" for d in self.distances)
        mode = "decreasing" if self.decreasing else ("eps-independent" if self.eps_independent else "not Cauchy")
        return [f"eps sweep {self.eps_list} distances [{ds}] {mode} {status}"]


def epsilon_sweep(g: ScalarField, params: SimulationParams, eps_list, P: Potential) -> SweepReport:
    """Run each eps on one grid and one dt; report |u^{eps_i} - u^{eps_(i+1)}|_inf at T."""
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 2:
        raise ValueError("need at least two eps values")
    if any(e < 0 or e > 1 for e in eps_list):
        raise ValueError("each eps must lie in [0, 1]")
    if any(eps_list[i] <= eps_list[i + 1] for i in range(len(eps_list) - 1)):
        raise ValueError("eps_list must be strictly decreasing")
    dt = min(_shared_dt([g], replace(params, eps=e), P)[0] for e in eps_list)
    runs = [run(g, replace(params, eps=e, dt=dt), P) for e in eps_list]
    dists = [sup_norm(runs[i].final.values - runs[i + 1].final.values) for i in range(len(runs) - 1)]
    return SweepReport(eps_list, dists, runs)
