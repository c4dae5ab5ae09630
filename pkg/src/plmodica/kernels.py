"""
Hot inner loops: the explicit right-hand side of the regularized equation
and the discrete convolution behind mollification.

Each kernel exists twice, as a numba ``@njit`` loop and as a vectorised
numpy expression. Set ``PLMODICA_DISABLE_NUMBA=1`` (or uninstall numba) to
force the numpy path. Both paths write each output cell from an immutable
input buffer, so results do not depend on thread count.
"""

from __future__ import annotations

import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

_DISABLED = os.environ.get("PLMODICA_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("disabled by PLMODICA_DISABLE_NUMBA")
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via subprocess test
    numba = None
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


def set_threads(k: int | None) -> int:
    """Set the numba worker count (clamped to what the runtime allows); returns the value used."""
    if not HAVE_NUMBA or k is None:
        return 1
    k = max(1, min(int(k), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(k)
    return k


# ---------------------------------------------------------------- numpy path


def _shift(values, k, axis, periodic):
    """values[i + k] along ``axis`` restricted to interior cells."""
    if periodic:
        return np.roll(values, -k, axis=axis)
    sl = [slice(1, -1)] * values.ndim
    n = values.shape[axis]
    sl[axis] = slice(1 + k, n - 1 + k)
    return values[tuple(sl)]


def numpy_derivatives(values, h, periodic):
    """Centered first and second derivatives on interior cells.

    Returns ``(grad, hess)`` with ``grad`` of shape (n, *interior) and
    ``hess`` of shape (n, n, *interior). For periodic grids the interior is
    the whole array.
    """
    n = values.ndim
    centre = values if periodic else values[(slice(1, -1),) * n]
    grad = np.empty((n, *centre.shape))
    hess = np.empty((n, n, *centre.shape))
    for a in range(n):
        up = _shift(values, 1, a, periodic)
        dn = _shift(values, -1, a, periodic)
        grad[a] = (up - dn) / (2.0 * h)
        hess[a, a] = (up - 2.0 * centre + dn) / (h * h)
    if n == 2:
        if periodic:
            pp = np.roll(values, (-1, -1), axis=(0, 1))
            pm = np.roll(values, (-1, 1), axis=(0, 1))
            mp = np.roll(values, (1, -1), axis=(0, 1))
            mm = np.roll(values, (1, 1), axis=(0, 1))
        else:
            pp = values[2:, 2:]
            pm = values[2:, :-2]
            mp = values[:-2, 2:]
            mm = values[:-2, :-2]
        hess[0, 1] = hess[1, 0] = (pp - pm - mp + mm) / (4.0 * h * h)
    return grad, hess


def anisotropic_part(grad, hess):
    """u_i u_j u_ij."""
    n = grad.shape[0]
    q = np.zeros(grad.shape[1:])
    for i in range(n):
        for j in range(n):
            q += grad[i] * grad[j] * hess[i, j]
    return q


def numpy_diffusion(grad, hess, p, eps):
    """a^eps_ij(Du) u_ij on interior cells, plus a mask of singular cells (p<2, eps=0, Du=0).

    Singular cells get the identity matrix, i.e. the plain Laplacian.
    """
    lap = np.trace(hess, axis1=0, axis2=1) if hess.shape[0] > 1 else hess[0, 0].copy()
    if p == 2.0:
        return lap, np.zeros(lap.shape, dtype=bool)
    denom = eps * eps + np.sum(grad**2, axis=0)
    singular = denom == 0.0
    q = anisotropic_part(grad, hess)
    safe = np.where(singular, 1.0, denom)
    return lap + np.where(singular, 0.0, (p - 2.0) * q / safe), singular


def numpy_reaction_factor(grad, p, eps):
    """(eps^2 + |Du|^2)^((2-p)/2), with 0^positive = 0 and exactly 1 at p = 2."""
    if p == 2.0:
        return np.ones(grad.shape[1:])
    return (eps * eps + np.sum(grad**2, axis=0)) ** ((2.0 - p) / 2.0)


def numpy_rhs(u, fu, h, p, eps, periodic):
    grad, hess = numpy_derivatives(u, h, periodic)
    diff, singular = numpy_diffusion(grad, hess, p, eps)
    inner = (slice(None),) * u.ndim if periodic else (slice(1, -1),) * u.ndim
    out = np.zeros_like(u)
    out[inner] = diff - numpy_reaction_factor(grad, p, eps) * fu[inner]
    return out, int(singular.sum())


def numpy_convolve(padded, weights):
    """Direct convolution, accumulating offsets in ascending source index per cell."""
    m = weights.shape[0]
    shape = tuple(s - m + 1 for s in padded.shape)
    out = np.zeros(shape)
    if padded.ndim == 1:
        for k in range(m):
            out += weights[k] * padded[k : k + shape[0]]
    else:
        for a in range(m):
            for b in range(m):
                out += weights[a, b] * padded[a : a + shape[0], b : b + shape[1]]
    return out


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _rhs_1d_nb(u, fu, h, p, eps, periodic):
        n = u.shape[0]
        out = np.zeros(n)
        e2 = eps * eps
        expo = (2.0 - p) / 2.0
        lo, hi = (0, n) if periodic else (1, n - 1)
        nsing = 0
        for i in range(lo, hi):
            im = i - 1 if i > 0 else n - 1
            ip = i + 1 if i < n - 1 else 0
            ux = (u[ip] - u[im]) / (2.0 * h)
            uxx = (u[ip] - 2.0 * u[i] + u[im]) / (h * h)
            if p == 2.0:
                out[i] = uxx - fu[i]
                continue
            denom = e2 + ux * ux
            if denom == 0.0:
                nsing += 1
                out[i] = uxx - 0.0 * fu[i]
            else:
                diff = uxx + (p - 2.0) * (ux * ux * uxx) / denom
                out[i] = diff - denom**expo * fu[i]
        return out, nsing

    @njit(cache=True, parallel=True)
    def _rhs_2d_nb(u, fu, h, p, eps, periodic):
        nx, ny = u.shape
        out = np.zeros((nx, ny))
        e2 = eps * eps
        expo = (2.0 - p) / 2.0
        lo_x, hi_x = (0, nx) if periodic else (1, nx - 1)
        lo_y, hi_y = (0, ny) if periodic else (1, ny - 1)
        sing = np.zeros(nx, dtype=np.int64)
        for i in prange(lo_x, hi_x):
            im = i - 1 if i > 0 else nx - 1
            ip = i + 1 if i < nx - 1 else 0
            for j in range(lo_y, hi_y):
                jm = j - 1 if j > 0 else ny - 1
                jp = j + 1 if j < ny - 1 else 0
                c = u[i, j]
                ux = (u[ip, j] - u[im, j]) / (2.0 * h)
                uy = (u[i, jp] - u[i, jm]) / (2.0 * h)
                uxx = (u[ip, j] - 2.0 * c + u[im, j]) / (h * h)
                uyy = (u[i, jp] - 2.0 * c + u[i, jm]) / (h * h)
                lap = uxx + uyy
                if p == 2.0:
                    out[i, j] = lap - fu[i, j]
                    continue
                uxy = (u[ip, jp] - u[ip, jm] - u[im, jp] + u[im, jm]) / (4.0 * h * h)
                denom = e2 + (ux * ux + uy * uy)
                if denom == 0.0:
                    sing[i] += 1
                    out[i, j] = lap - 0.0 * fu[i, j]
                else:
                    q = ux * ux * uxx + ux * uy * uxy + uy * ux * uxy + uy * uy * uyy
                    out[i, j] = lap + (p - 2.0) * q / denom - denom**expo * fu[i, j]
        return out, sing.sum()

    @njit(cache=True)
    def _convolve_1d_nb(padded, weights):
        m = weights.shape[0]
        n = padded.shape[0] - m + 1
        out = np.empty(n)
        for i in range(n):
            acc = 0.0
            for k in range(m):
                acc += weights[k] * padded[i + k]
            out[i] = acc
        return out

    @njit(cache=True, parallel=True)
    def _convolve_2d_nb(padded, weights):
        m = weights.shape[0]
        nx = padded.shape[0] - m + 1
        ny = padded.shape[1] - m + 1
        out = np.empty((nx, ny))
        for i in prange(nx):
            for j in range(ny):
                acc = 0.0
                for a in range(m):
                    for b in range(m):
                        acc += weights[a, b] * padded[i + a, j + b]
                out[i, j] = acc
        return out

    def numba_rhs(u, fu, h, p, eps, periodic):
        fn = _rhs_1d_nb if u.ndim == 1 else _rhs_2d_nb
        out, nsing = fn(u, fu, float(h), float(p), float(eps), bool(periodic))
        return out, int(nsing)

    def numba_convolve(padded, weights):
        fn = _convolve_1d_nb if padded.ndim == 1 else _convolve_2d_nb
        return fn(np.ascontiguousarray(padded), np.ascontiguousarray(weights))

else:  # pragma: no cover
    numba_rhs = None
    numba_convolve = None


def rhs(u, fu, h, p, eps, periodic):
    """Interior values of a^eps_ij u_ij - (eps^2+|Du|^2)^((2-p)/2) f(u); frame cells are 0.

    Returns ``(out, n_singular)`` where ``n_singular`` counts cells whose
    coefficient matrix was replaced by the identity (p < 2, eps = 0, Du = 0).
    """
    if HAVE_NUMBA:
        return numba_rhs(u, fu, h, p, eps, periodic)
    return numpy_rhs(u, fu, h, p, eps, periodic)


def convolve(padded, weights):
    if HAVE_NUMBA:
        return numba_convolve(padded, weights)
    return numpy_convolve(padded, weights)
