"""
Discrete operators of the regularized equation

    u_t = a^eps_ij(Du) u_ij - (eps^2 + |Du|^2)^((2-p)/2) f(u),
    a^eps_ij(s) = delta_ij + (p - 2) s_i s_j / (eps^2 + |s|^2),

and residual diagnostics for its divergence form and for the unregularized
non-divergence equation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from plmodica import kernels
from plmodica.grid import ScalarField, gradient
from plmodica.potential import Potential


class SingularCoefficientError(ValueError):
    pass


@dataclass(frozen=True)
class RegularizationParams:
    p: float
    eps: float = 0.0

    def __post_init__(self):
        if not 1.0 < self.p <= 2.0:
            raise ValueError("p must lie in (1, 2]")
        if not self.eps >= 0.0:
            raise ValueError("eps must be nonnegative")


def diffusion_coefficients(sigma, params: RegularizationParams) -> np.ndarray:
    sigma = np.atleast_1d(np.asarray(sigma, dtype=np.float64))
    n = sigma.shape[0]
    if params.p == 2.0:
        return np.eye(n)
    denom = params.eps**2 + float(sigma @ sigma)
    if denom == 0.0:
        raise SingularCoefficientError("coefficient singular at vanishing gradient")
    return np.eye(n) + (params.p - 2.0) * np.outer(sigma, sigma) / denom


def _check_range(u: ScalarField, P: Potential):
    if not P.contains(u.values):
        raise ValueError("state left admissible range")


def _interior_to_full(u: ScalarField, inner_values) -> np.ndarray:
    out = np.zeros(u.grid.shape)
    out[u.grid.interior()] = inner_values
    return out


def regularized_diffusion(u: ScalarField, params: RegularizationParams, zero_gradient: str = "raise") -> ScalarField:
    """a^eps_ij(Du) u_ij on interior cells, 0 on the frame.

    ``zero_gradient="identity"`` replaces the coefficient matrix by the
    identity where it is undefined (p < 2, eps = 0, Du = 0) instead of raising.
    """
    grad, hess = kernels.numpy_derivatives(u.values, u.grid.h, u.grid.periodic)
    diff, singular = kernels.numpy_diffusion(grad, hess, params.p, params.eps)
    if singular.any() and zero_gradient != "identity":
        raise SingularCoefficientError("coefficient singular at vanishing gradient")
    return u.with_values(_interior_to_full(u, diff))


def reaction(u: ScalarField, params: RegularizationParams, P: Potential) -> ScalarField:
    """(eps^2 + |Du|^2)^((2-p)/2) f(u) on every cell."""
    _check_range(u, P)
    Du = gradient(u).components
    factor = kernels.numpy_reaction_factor(Du, params.p, params.eps)
    return u.with_values(factor * P.f(u.values))


def rhs(u: ScalarField, params: RegularizationParams, P: Potential, zero_gradient: str = "raise"):
    """Explicit right-hand side on interior cells (frame cells 0), via the active kernel backend."""
    _check_range(u, P)
    out, nsing = kernels.rhs(u.values, P.f(u.values), u.grid.h, params.p, params.eps, u.grid.periodic)
    if nsing and zero_gradient != "identity":
        raise SingularCoefficientError("coefficient singular at vanishing gradient")
    return u.with_values(out)


def rhs_with_count(u: ScalarField, params: RegularizationParams, P: Potential):
    """Like ``rhs`` with identity substitution; also returns the number of substituted cells."""
    _check_range(u, P)
    out, nsing = kernels.rhs(u.values, P.f(u.values), u.grid.h, params.p, params.eps, u.grid.periodic)
    return u.with_values(out), nsing


@dataclass
class ConsistencyReport:
    max_abs: float
    max_rel: float
    passed: bool
    tolerance: float = 1e-10

    def lines(self):
        status = "PASS" if self.passed else "FAIL"
        return [
            f"divergence/non-divergence relative discrepancy {self.max_rel:.3e} "
            f"threshold {self.tolerance:.1e} {status}"
        ]


def divergence_form_consistency(u: ScalarField, params: RegularizationParams, P: Potential | None = None,
                                tol: float = 1e-10) -> ConsistencyReport:
    """Compare phi'(|Du|^2) a^eps_ij u_ij with the expanded divergence phi' Lap u + 2 phi'' u_i u_j u_ij.

    Both sides are assembled from the same discrete derivatives. The relative
    discrepancy is taken against the largest magnitude of either side.
    """
    if params.eps <= 0.0:
        raise ValueError("divergence form requires eps > 0")
    if P is not None:
        _check_range(u, P)
    p, eps = params.p, params.eps
    grad, hess = kernels.numpy_derivatives(u.values, u.grid.h, u.grid.periodic)
    s = np.sum(grad**2, axis=0)
    dphi = (eps * eps + s) ** (p / 2.0 - 1.0)
    ddphi = (p / 2.0 - 1.0) * (eps * eps + s) ** (p / 2.0 - 2.0)

    # path 1: the coefficient matrix, assembled cell by cell
    nondiv = np.zeros_like(s)
    n = grad.shape[0]
    flat_g = grad.reshape(n, -1)
    flat_h = hess.reshape(n, n, -1)
    out = nondiv.reshape(-1)
    for c in range(out.size):
        a = diffusion_coefficients(flat_g[:, c], params)
        out[c] = np.sum(a * flat_h[:, :, c])
    lhs = dphi * nondiv

    # path 2: divergence of phi'(|Du|^2) Du expanded by the product rule
    lap = sum(hess[k, k] for k in range(n))
    div = dphi * lap + 2.0 * ddphi * kernels.anisotropic_part(grad, hess)

    diff = np.abs(lhs - div)
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(div))))
    max_abs = float(diff.max())
    max_rel = 0.0 if scale == 0.0 else max_abs / scale
    return ConsistencyReport(max_abs, max_rel, max_rel <= tol, tol)


@dataclass
class ResidualReport:
    max_residual: float
    eligible: int
    location: tuple[int, ...] | None

    @property
    def status(self) -> str:
        return "no eligible cells" if self.eligible == 0 else "ok"

    def lines(self):
        if self.eligible == 0:
            return ["non-divergence residual: no eligible cells"]
        return [f"non-divergence residual {self.max_residual:.3e} over {self.eligible} cells (max at {self.location})"]


def nondivergence_residual(u_now: ScalarField, u_next: ScalarField, dt: float, params: RegularizationParams,
                           P: Potential) -> ResidualReport:
    """Max residual of the unregularized equation

        (delta_ij + (p-2) u_i u_j / |Du|^2) u_ij - |Du|^(2-p) f(u) - u_t

    with u_t from a forward difference, on interior cells where |Du| > 0 and
    |Du| >= 10 eps.
    """
    if u_now.grid != u_next.grid:
        raise ValueError("fields live on different grids")
    p, eps = params.p, params.eps
    grad, hess = kernels.numpy_derivatives(u_now.values, u_now.grid.h, u_now.grid.periodic)
    s = np.sum(grad**2, axis=0)
    mag = np.sqrt(s)
    eligible = (mag > 0.0) & (mag >= 10.0 * eps)
    count = int(eligible.sum())
    if count == 0:
        return ResidualReport(0.0, 0, None)
    safe = np.where(eligible, s, 1.0)
    lap = sum(hess[k, k] for k in range(grad.shape[0]))
    op = lap + (p - 2.0) * kernels.anisotropic_part(grad, hess) / safe
    inner = u_now.grid.interior()
    fu = P.f(u_now.values[inner])
    ut = (u_next.values[inner] - u_now.values[inner]) / dt
    res = np.abs(op - np.where(eligible, mag, 1.0) ** (2.0 - p) * fu - ut)
    res = np.where(eligible, res, 0.0)
    k = np.unravel_index(int(np.argmax(res)), res.shape)
    if not u_now.grid.periodic:
        k = tuple(i + 1 for i in k)
    return ResidualReport(float(res.max()), count, tuple(int(i) for i in k))
