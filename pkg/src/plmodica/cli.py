"""
Experiment driver.

    plmodica <config-path> [--out DIR] [--threads K]

The config is plain ``key = value`` text with ``#`` comments. Numeric
values accept arithmetic on literals and ``pi`` (e.g. ``h = 10/256``).
Every run writes ``diagnostics.csv``, ``*.plmf`` snapshots and
``report.txt`` into the output directory; the exit status is 0 only if
every assertion in the report passes.
"""

from __future__ import annotations

import argparse
import ast
import logging
import math
import operator
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from plmodica import kernels
from plmodica.evolution import DiagnosticsSeries, SimulationParams, epsilon_sweep, evolve_pair, run
from plmodica.grid import DIRICHLET, PERIODIC, Grid, ScalarField, mollify, read_plmf, sup_norm, write_plmf
from plmodica.modica import check_initial_estimate
from plmodica.oracles import modica_profile, spectral_decay, tanh_wave, zeros_experiment
from plmodica.potential import Potential, parse_potential

logger = logging.getLogger("plmodica")

EXPERIMENTS = ("run", "pair", "eps-sweep", "verify-estimate", "oracle-compare", "zeros")
REQUIRED = ("experiment", "extent", "h", "boundary", "p", "potential", "datum")
KNOWN = REQUIRED + (
    "n", "eps", "T", "dt", "cfl_safety", "record_every", "datum2", "perturb", "eps_list",
    "steps", "tolerance", "mollify_radius", "out", "threads",
)


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}


def _eval_number(text: str) -> float:
    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        raise ValueError(text)

    try:
        value = ev(ast.parse(text.strip(), mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError, OverflowError):
        raise ValueError(f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"not a finite number: {text!r}")
    return value


def _datum_ok(spec: str) -> bool:
    kind, _, arg = spec.partition(":")
    if kind == "tanh-wave":
        return arg == ""
    if kind in ("constant", "modica-profile"):
        _eval_number(arg)
        return True
    if kind == "sine":
        k = _eval_number(arg)
        return k == int(k)
    if kind == "file":
        return bool(arg)
    return False


@dataclass
class ExperimentConfig:
    experiment: str
    extent: list
    h: float
    boundary: str
    p: float
    potential: str
    datum: str
    n: int = 1
    eps: float = 0.0
    T: float = 1.0
    dt: float | None = None
    cfl_safety: float = 0.9
    record_every: int = 50
    datum2: str | None = None
    perturb: float | None = None
    eps_list: list | None = None
    steps: int | None = None
    tolerance: float | None = None
    mollify_radius: float | None = None
    out: str | None = None
    threads: int | None = None
    lines: dict = field(default_factory=dict, repr=False)
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    def grid(self) -> Grid:
        pairs = [(self.extent[2 * k], self.extent[2 * k + 1]) for k in range(self.n)]
        return Grid.from_extent(pairs, self.h, self.boundary)

    def params(self) -> SimulationParams:
        return SimulationParams(self.p, self.eps, self.T, self.dt, self.cfl_safety, self.record_every)

    def build_potential(self) -> Potential:
        return parse_potential(self.potential)

    def build_datum(self, spec: str, grid: Grid, P: Potential) -> ScalarField:
        kind, _, arg = spec.partition(":")
        x = grid.coords()
        if kind == "constant":
            g = ScalarField.constant(grid, _eval_number(arg))
        elif kind == "sine":
            k = _eval_number(arg)
            vals = np.sin(k * x[0])
            for y in x[1:]:
                vals = vals * np.sin(k * y)
            g = ScalarField(grid, vals)
        elif kind == "tanh-wave":
            g = ScalarField(grid, tanh_wave(x[0]).u)
        elif kind == "modica-profile":
            prof = modica_profile(self.p, P, _eval_number(arg), grid.axis(0))
            vals = np.broadcast_to(prof.u.reshape((-1,) + (1,) * (grid.n - 1)), grid.shape)
            g = ScalarField(grid, vals)
        elif kind == "file":
            path = Path(arg)
            if not path.is_absolute():
                path = self.base_dir / path
            snap = read_plmf(path)
            if snap.shape != grid.shape:
                raise ValueError(f"{path}: snapshot shape {snap.shape} does not match grid {grid.shape}")
            g = ScalarField(grid, snap.values)
        else:
            raise ValueError(f"unknown datum {spec!r}")
        if self.mollify_radius is not None:
            g = mollify(g, self.mollify_radius)
        return g


def parse_config(text: str, base_dir=None) -> ExperimentConfig:
    raw: dict = {}
    where: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("expected 'key = value'", lineno)
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in KNOWN:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        if not value:
            raise ConfigError(f"empty value for {key!r}", lineno)
        raw[key] = value
        where[key] = lineno
    end = len(text.splitlines()) + 1
    for key in REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing mandatory key {key!r}", end)

    vals: dict = {}

    def num(key, check=None, msg=None, integer=False):
        try:
            v = _eval_number(raw[key])
        except ValueError as exc:
            raise ConfigError(str(exc), where[key]) from None
        if integer:
            if v != int(v):
                raise ConfigError(f"{key} must be an integer", where[key])
            v = int(v)
        if check is not None and not check(v):
            raise ConfigError(msg or f"{key} out of range", where[key])
        return v

    def numlist(key):
        try:
            return [_eval_number(s) for s in raw[key].split(",") if s.strip()]
        except ValueError as exc:
            raise ConfigError(str(exc), where[key]) from None

    exp = raw["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}", where["experiment"])
    vals["experiment"] = exp
    vals["n"] = num("n", lambda v: v in (1, 2), "n must be 1 or 2", integer=True) if "n" in raw else 1
    ext = numlist("extent")
    if len(ext) != 2 * vals["n"] or any(ext[2 * k] >= ext[2 * k + 1] for k in range(vals["n"])):
        raise ConfigError("extent needs lo,hi per axis with lo < hi", where["extent"])
    vals["extent"] = ext
    vals["h"] = num("h", lambda v: v > 0, "h must be positive")
    if raw["boundary"] not in (PERIODIC, DIRICHLET):
        raise ConfigError("boundary must be 'periodic' or 'dirichlet'", where["boundary"])
    vals["boundary"] = raw["boundary"]
    vals["p"] = num("p", lambda v: 1.0 < v <= 2.0, "p must lie in (1, 2]")
    if "eps" in raw:
        vals["eps"] = num("eps", lambda v: v >= 0, "eps must be nonnegative")
    if "T" in raw:
        vals["T"] = num("T", lambda v: v > 0, "T must be positive")
    if "dt" in raw:
        vals["dt"] = num("dt", lambda v: v > 0, "dt must be positive")
    if "cfl_safety" in raw:
        vals["cfl_safety"] = num("cfl_safety", lambda v: 0 < v <= 1, "cfl_safety must lie in (0, 1]")
    if "record_every" in raw:
        vals["record_every"] = num("record_every", lambda v: v >= 1, "record_every must be >= 1", integer=True)
    if "steps" in raw:
        vals["steps"] = num("steps", lambda v: v >= 1, "steps must be >= 1", integer=True)
    if "threads" in raw:
        vals["threads"] = num("threads", lambda v: v >= 1, "threads must be >= 1", integer=True)
    if "tolerance" in raw:
        vals["tolerance"] = num("tolerance", lambda v: v > 0, "tolerance must be positive")
    if "mollify_radius" in raw:
        vals["mollify_radius"] = num("mollify_radius", lambda v: v >= vals["h"], "kernel under-resolved")
    if "perturb" in raw:
        vals["perturb"] = num("perturb")
    if "eps_list" in raw:
        el = numlist("eps_list")
        if len(el) < 2 or any(e < 0 or e > 1 for e in el) or any(a <= b for a, b in zip(el, el[1:])):
            raise ConfigError("eps_list must be >= 2 strictly decreasing values in [0, 1]", where["eps_list"])
        vals["eps_list"] = el
    try:
        parse_potential(raw["potential"])
    except ValueError as exc:
        raise ConfigError(str(exc), where["potential"]) from None
    vals["potential"] = raw["potential"]
    for key in ("datum", "datum2"):
        if key in raw:
            try:
                ok = _datum_ok(raw[key])
            except ValueError:
                ok = False
            if not ok:
                raise ConfigError(f"bad datum spec {raw[key]!r}", where[key])
            vals[key] = raw[key]
    if "out" in raw:
        vals["out"] = raw["out"]

    if exp == "pair" and "datum2" not in vals and "perturb" not in vals:
        raise ConfigError("pair needs 'datum2' or 'perturb'", end)
    if exp == "eps-sweep" and "eps_list" not in vals:
        raise ConfigError("eps-sweep needs 'eps_list'", end)
    try:
        cfg = ExperimentConfig(**vals, lines=where, base_dir=Path(base_dir) if base_dir else Path.cwd())
        cfg.grid()
        cfg.params()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


class Report:
    def __init__(self):
        self.lines: list[str] = []
        self.ok = True

    def check(self, name, value, threshold, passed, op="<="):
        status = "PASS" if passed else "FAIL"
        self.ok &= bool(passed)
        self.lines.append(f"{name}: measured {value:.6e} {op} threshold {threshold:.6e} {status}")

    def info(self, text):
        self.lines.append(f"# {text}")

    def extend(self, lines, passed):
        self.lines.extend(lines)
        self.ok &= bool(passed)

    def write(self, path):
        Path(path).write_text("\n".join(self.lines) + "\n")


def _write_snapshots(out: Path, grid: Grid, snapshots, prefix=""):
    for i, (t, vals) in enumerate(snapshots):
        write_plmf(out / f"{prefix}snap_{i:05d}.plmf", ScalarField(grid, vals), t)


def _initial_only(out, g, cfg, P):
    diag = DiagnosticsSeries()
    diag.append(0.0, g, cfg.params().profile, P)
    diag.to_csv(out / "diagnostics.csv")
    write_plmf(out / "snap_00000.plmf", g, 0.0)


def dispatch(cfg: ExperimentConfig, out_dir=None) -> int:
    """Run the configured experiment; returns the process exit status."""
    out = Path(out_dir or cfg.out or "plmodica_out")
    out.mkdir(parents=True, exist_ok=True)
    report = Report()
    report.info(f"experiment {cfg.experiment} backend {kernels.BACKEND}")
    grid = cfg.grid()
    P = cfg.build_potential()
    params = cfg.params()
    g = cfg.build_datum(cfg.datum, grid, P)
    exp = cfg.experiment

    if exp == "verify-estimate":
        sampled = cfg.datum.startswith(("tanh-wave", "modica-profile"))
        tol = cfg.tolerance if cfg.tolerance is not None else (5 * grid.h**2 if sampled else 1e-10)
        rep = check_initial_estimate(g, cfg.p, P, tol)
        report.check("initial estimate max excess", rep.max_excess, tol, rep.satisfied)
        _initial_only(out, g, cfg, P)

    elif exp == "run":
        res = run(g, params, P, n_steps=cfg.steps)
        report.info(f"dt {res.dt:.6e} steps {res.steps} identity substitutions {res.substituted_cells}")
        report.info(f"max interior P over run {max(res.diagnostics.maxP):.6e}")
        if res.certificate is not None:
            report.check("sup|u| over run", res.max_modulus, res.modulus_bound, res.bounded)
        else:
            report.info("no bracketing certificate (not needed for p < 2); modulus bound not asserted")
        res.diagnostics.to_csv(out / "diagnostics.csv")
        _write_snapshots(out, grid, res.snapshots)

    elif exp == "pair":
        if cfg.datum2 is not None:
            g2 = cfg.build_datum(cfg.datum2, grid, P)
        else:
            g2 = g.with_values(g.values + cfg.perturb * np.cos(grid.coords()[0]))
        rep = evolve_pair(g, g2, params, P)
        report.check("contraction exponent", rep.exponent, rep.reference, rep.passed)
        report.info(f"max separation ratio {rep.ratios.max():.6e}")
        rep.runs[0].diagnostics.to_csv(out / "diagnostics.csv")
        rep.runs[1].diagnostics.to_csv(out / "diagnostics_second.csv")
        _write_snapshots(out, grid, rep.runs[0].snapshots, "a_")
        _write_snapshots(out, grid, rep.runs[1].snapshots, "b_")

    elif exp == "eps-sweep":
        rep = epsilon_sweep(g, params, cfg.eps_list, P)
        report.extend(rep.lines(), rep.passed)
        for i, d in enumerate(rep.distances):
            report.info(f"d_{i} = |u(eps={rep.eps_list[i]:g}) - u(eps={rep.eps_list[i + 1]:g})| = {d:.6e}")
        rep.runs[0].diagnostics.to_csv(out / "diagnostics.csv")
        for i, r in enumerate(rep.runs):
            r.diagnostics.to_csv(out / f"diagnostics_eps{i}.csv")
            write_plmf(out / f"eps{i}_final.plmf", r.final, r.steps * r.dt)
        _write_snapshots(out, grid, rep.runs[0].snapshots)

    elif exp == "oracle-compare":
        kind, _, arg = cfg.datum.partition(":")
        res = run(g, params, P, n_steps=cfg.steps)
        t_end = res.steps * res.dt
        if kind == "sine":
            if cfg.p != 2.0 or P.name != "zero" or not grid.periodic:
                raise ValueError("the heat oracle needs p = 2, potential = zero and a periodic grid")
            k = _eval_number(arg)
            exact = g.values * spectral_decay(k, t_end) ** grid.n
            tol = cfg.tolerance if cfg.tolerance is not None else 1e-3
            err = sup_norm(res.final.values - exact)
            report.check("heat oracle error", err, tol, err <= tol)
        elif kind in ("tanh-wave", "modica-profile"):
            tol = cfg.tolerance if cfg.tolerance is not None else 5e-3
            err = sup_norm(res.final.values - g.values)
            report.check("standing wave drift", err, tol, err <= tol)
        else:
            raise ValueError(f"no oracle for datum {cfg.datum!r}")
        res.diagnostics.to_csv(out / "diagnostics.csv")
        _write_snapshots(out, grid, res.snapshots)

    elif exp == "zeros":
        rep = zeros_experiment(g, params, P, n_steps=cfg.steps, estimate_tol=cfg.tolerance)
        report.extend(rep.lines(), rep.passed)
        if rep.result is not None:
            rep.result.diagnostics.to_csv(out / "diagnostics.csv")
            _write_snapshots(out, grid, rep.result.snapshots)
        else:
            _initial_only(out, g, cfg, P)

    report.write(out / "report.txt")
    return 0 if report.ok else 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="plmodica", description=__doc__.split("\n\n")[0].strip())
    ap.add_argument("config", help="path to a key = value experiment file")
    ap.add_argument("--out", help="output directory (overrides 'out' in the config)")
    ap.add_argument("--threads", type=int, help="numba worker threads (MODICA_THREADS overrides)")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    path = Path(args.config)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text, base_dir=path.parent)
    except ConfigError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return 2

    threads = os.environ.get("MODICA_THREADS") or args.threads or cfg.threads
    kernels.set_threads(int(threads) if threads else None)
    out = args.out or cfg.out or "plmodica_out"
    try:
        return dispatch(cfg, out)
    except OSError as exc:
        print(f"error: {exc.filename or out}: {exc.strerror}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "report.txt").write_text(f"ERROR: {exc}\n")
        except OSError:
            pass
        return 1


if __name__ == "__main__":
    sys.exit(main())
