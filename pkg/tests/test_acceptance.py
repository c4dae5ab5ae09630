"""Acceptance criteria. Each test logs one summary line (printed at the end of the run)."""

import math
import time

import numpy as np
import pytest

from plmodica.evolution import SimulationParams, epsilon_sweep, evolve_pair, run
from plmodica.grid import Grid, ScalarField, gradient, jensen_report, mollify
from plmodica.modica import ModicaProfile, lam, xi
from plmodica.operators import RegularizationParams, diffusion_coefficients
from plmodica.oracles import brute_mollify, modica_profile, spectral_decay, tanh_wave, zeros_experiment
from plmodica.potential import double_well, zero_potential


def wave_grid(h):
    return Grid.from_extent([(-10.0, 10.0)], h)


def ring(n):
    return Grid.from_extent([(0.0, 2 * math.pi)], 2 * math.pi / n, "periodic")


def triangle(x):
    return np.abs(np.mod(x + np.pi / 2, 2 * np.pi) - np.pi) - np.pi / 2


def max_positive_P(p, eps, h):
    grid = wave_grid(h)
    g = ScalarField(grid, modica_profile(p, double_well(), 0.0, grid.axis(0)).u)
    res = run(g, SimulationParams(p, eps, T=1.0, record_every=10), double_well(), keep_snapshots=False)
    return max(res.diagnostics.maxP)


@pytest.mark.parametrize("p, eps", [(2.0, 0.0), (2.0, 0.05), (1.5, 0.05)])
def test_c1_modica_preservation(acceptance_log, p, eps):
    t0 = time.perf_counter()
    coarse = max_positive_P(p, eps, 10 / 256)
    fine = max_positive_P(p, eps, 10 / 512)
    elapsed = time.perf_counter() - t0
    pos_c, pos_f = max(coarse, 0.0), max(fine, 0.0)
    # a zero positive part at both resolutions satisfies "shrinks by 2" trivially (0 <= 0 / 2)
    shrink_ok = pos_f <= pos_c / 2
    ok = coarse <= 1e-2 and shrink_ok and elapsed < 60
    factor = "n/a (both zero)" if pos_c == 0.0 else f"{pos_c / pos_f if pos_f else math.inf:.2f}"
    acceptance_log(f"C1 Modica preservation p={p} eps={eps}", ok,
                   f"max P {coarse:.3e} (<= 1e-2), at h/2 {fine:.3e}, positive-part shrink {factor} (>= 2), "
                   f"{elapsed:.1f}s")
    assert coarse <= 1e-2
    assert shrink_ok
    assert elapsed < 60  # both resolutions; budget is 30 s each


def test_c2_lambda_xi(acceptance_log):
    t0 = time.perf_counter()
    s = np.logspace(-6, 3, 60)
    worst, min_lam = 0.0, math.inf
    for p in (1.1, 1.5, 2.0):
        for eps in (0.0, 0.1):
            prof = ModicaProfile(p, eps)
            ds = 1e-4 * s  # step proportional to s, so the step resolves s^(p/2 - 1) down to s = 1e-6
            fd = (xi(s + ds, prof) - xi(s - ds, prof)) / (2 * ds)
            L = lam(s, prof)
            worst = max(worst, float(np.max(np.abs(fd - L) / L)))
            min_lam = min(min_lam, float(np.min(L)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and min_lam > 0 and elapsed < 1
    acceptance_log("C2 Lambda-xi consistency", ok,
                   f"max rel error {worst:.3e} (<= 1e-6), min Lambda {min_lam:.3e} (> 0), {elapsed:.3f}s")
    assert worst <= 1e-6 and min_lam > 0 and elapsed < 1


def test_c3_ellipticity(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = -math.inf
    count = 0
    for p in (1.1, 1.5, 2.0):
        for eps in (0.0, 0.1):
            prm = RegularizationParams(p, eps)
            lo, hi = min(1.0, p - 1.0), max(1.0, p - 1.0)
            for _ in range(1000):
                sigma = rng.normal(size=2) * 10.0 ** rng.uniform(-4, 3)
                v = rng.normal(size=2) * 10.0 ** rng.uniform(-2, 2)
                q = v @ diffusion_coefficients(sigma, prm) @ v
                n2 = v @ v
                worst = max(worst, lo * n2 - q, q - hi * n2)
                count += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 1
    acceptance_log("C3 uniform ellipticity", ok,
                   f"worst bound violation {worst:.3e} (<= 1e-12) over {count} samples, {elapsed:.3f}s")
    assert worst <= 1e-12 and elapsed < 1


def heat_error(n):
    grid = ring(n)
    x = grid.axis(0)
    params = SimulationParams(2.0, T=0.5, dt=0.25 * grid.h**2)
    res = run(ScalarField(grid, np.sin(x)), params, zero_potential(), keep_snapshots=False)
    return float(np.max(np.abs(res.final.values - spectral_decay(1, 0.5) * np.sin(x))))


def test_c4_heat_limit(acceptance_log):
    t0 = time.perf_counter()
    e1 = heat_error(128)
    e2 = heat_error(256)
    elapsed = time.perf_counter() - t0
    ratio = e1 / e2
    ok = e1 <= 1e-3 and 3.5 <= ratio <= 4.5 and elapsed < 10
    acceptance_log("C4 heat-limit oracle", ok,
                   f"error {e1:.3e} (<= 1e-3), refinement ratio {ratio:.3f} (in [3.5, 4.5]), {elapsed:.1f}s")
    assert e1 <= 1e-3 and 3.5 <= ratio <= 4.5 and elapsed < 10


def test_c5_standing_wave(acceptance_log):
    t0 = time.perf_counter()
    grid = wave_grid(10 / 256)
    g = ScalarField(grid, tanh_wave(grid.axis(0)).u)
    res = run(g, SimulationParams(2.0, 0.0, T=1.0), double_well(), keep_snapshots=False)
    drift = float(np.max(np.abs(res.final.values - g.values)))
    elapsed = time.perf_counter() - t0
    ok = drift <= 5e-3 and elapsed < 30
    acceptance_log("C5 stationary standing wave", ok, f"drift {drift:.3e} (<= 5e-3), {elapsed:.1f}s")
    assert drift <= 5e-3 and elapsed < 30


def test_c6_contraction(acceptance_log):
    t0 = time.perf_counter()
    grid = ring(128)
    x = grid.axis(0)
    g1 = ScalarField(grid, 0.5 * np.sin(x))
    g2 = g1.with_values(g1.values + 1e-3 * np.cos(x))
    params = SimulationParams(2.0, T=1.0, record_every=1)
    dw = evolve_pair(g1, g2, params, double_well())
    heat = evolve_pair(g1, g2, params, zero_potential())
    elapsed = time.perf_counter() - t0
    heat_max = float(heat.ratios.max())
    ok = dw.exponent <= 2.2 and heat.nonexpansive and elapsed < 30
    acceptance_log("C6 maximum-modulus contraction", ok,
                   f"exponent {dw.exponent:.4f} (<= 2.2), heat max r(t) {heat_max:.12f} "
                   f"(<= 1 + rounding {heat.allowance:.1e}), {elapsed:.1f}s")
    assert dw.exponent <= 2.2
    assert heat.nonexpansive
    assert elapsed < 30


def test_c7_mollification(acceptance_log):
    t0 = time.perf_counter()
    grid = ring(128)
    g = ScalarField(grid, triangle(grid.axis(0)))
    g_grad = gradient(g).sup_norm()
    worst_growth, worst_jensen, bitwise = -math.inf, -math.inf, True
    for k in (2, 5, 10):
        r = k * grid.h
        smooth = mollify(g, r)
        worst_growth = max(worst_growth, gradient(smooth).sup_norm() / g_grad - 1.0)
        for p in (1.1, 1.5, 2.0):
            worst_jensen = max(worst_jensen, jensen_report(g, p, r).worst_violation)
        bitwise &= bool(np.array_equal(brute_mollify(g, r).values, smooth.values))
    elapsed = time.perf_counter() - t0
    ok = worst_growth <= 1e-10 and worst_jensen <= 1e-10 and bitwise and elapsed < 1
    acceptance_log("C7 mollification bounds", ok,
                   f"gradient growth {worst_growth:.3e} (<= 1e-10), Jensen {worst_jensen:.3e} (<= 1e-10), "
                   f"brute bitwise {bitwise}, {elapsed:.3f}s")
    assert worst_growth <= 1e-10 and worst_jensen <= 1e-10 and bitwise and elapsed < 1


def test_c8_zeros(acceptance_log):
    t0 = time.perf_counter()
    grid = wave_grid(10 / 256)
    drifts = []
    for p in (2.0, 1.5):
        rep = zeros_experiment(ScalarField.constant(grid, 1.0), SimulationParams(p, T=1.0), double_well(),
                               n_steps=1000)
        assert rep.status == "constant"
        drifts.append(rep.drift)
    wave = zeros_experiment(ScalarField(grid, tanh_wave(grid.axis(0)).u), SimulationParams(2.0, T=1.0, record_every=10),
                            double_well())
    elapsed = time.perf_counter() - t0
    ok = max(drifts) <= 1e-12 and wave.status == "non-constant" and wave.margin > 0 and elapsed < 30
    acceptance_log("C8 propagation of zeros", ok,
                   f"constant drift {max(drifts):.3e} (<= 1e-12), tanh min interior F {wave.margin:.3e} (> 0) "
                   f"over {len(wave.times)} recorded times, {elapsed:.1f}s")
    assert max(drifts) <= 1e-12
    assert wave.status == "non-constant" and wave.margin > 0
    assert elapsed < 30


def test_c9_eps_limit(acceptance_log):
    t0 = time.perf_counter()
    grid = wave_grid(10 / 256)
    g = ScalarField(grid, tanh_wave(grid.axis(0)).u)
    eps_list = [0.2, 0.1, 0.05]
    sweep = epsilon_sweep(g, SimulationParams(1.5, T=1.0), eps_list, double_well())
    flat = epsilon_sweep(g, SimulationParams(2.0, T=1.0), eps_list, double_well())
    elapsed = time.perf_counter() - t0
    d = sweep.distances
    ok = sweep.decreasing and max(flat.distances) <= 1e-12 and elapsed < 60
    acceptance_log("C9 eps-limit", ok,
                   f"p=1.5 distances {d[0]:.3e} > {d[1]:.3e} (strictly decreasing), "
                   f"p=2 max distance {max(flat.distances):.1e} (<= 1e-12), {elapsed:.1f}s")
    assert sweep.decreasing
    assert max(flat.distances) <= 1e-12
    assert elapsed < 60
