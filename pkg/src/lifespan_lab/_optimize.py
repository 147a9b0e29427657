"""Finite-difference Newton refinement and grid local-minimum scans.

Shared by the lifespan functional, the profile crossing map and the
blowup-system fold locator so that the Hessians they report are built
from identical stencils and therefore comparable.
"""

from __future__ import annotations

import numpy as np


class NonConvergence(RuntimeError):
    """Newton refinement failed to reach the gradient tolerance."""


def fd_gradient(f, x, h):
    """5-point (fourth order) centered gradient with per-axis steps h."""
    g = np.empty(len(x))
    for k in range(len(x)):
        e = np.zeros(len(x))
        e[k] = h[k]
        g[k] = (f(x - 2 * e) - 8 * f(x - e) + 8 * f(x + e) - f(x + 2 * e)) / (12 * h[k])
    return g


def fd_hessian(f, x, h):
    """Centered Hessian: 5-point second differences on the diagonal, 4-point cross."""
    n = len(x)
    hess = np.empty((n, n))
    f0 = f(x)
    for k in range(n):
        e = np.zeros(n)
        e[k] = h[k]
        hess[k, k] = (
            -f(x - 2 * e) + 16 * f(x - e) - 30 * f0 + 16 * f(x + e) - f(x + 2 * e)
        ) / (12 * h[k] ** 2)
    for k in range(n):
        for l in range(k + 1, n):
            ek = np.zeros(n); ek[k] = h[k]
            el = np.zeros(n); el[l] = h[l]
            hess[k, l] = hess[l, k] = (
                f(x + ek + el) - f(x + ek - el) - f(x - ek + el) + f(x - ek - el)
            ) / (4 * h[k] * h[l])
    return hess


def _project(x, bounds, wrap):
    if bounds is not None:
        for k, b in enumerate(bounds):
            if b is not None:
                x[k] = min(max(x[k], b[0]), b[1])
    if wrap is not None:
        for k, p in enumerate(wrap):
            if p is not None:
                x[k] = x[k] % p
    return x


def newton_minimize(f, x0, h, grad_tol=1e-8, max_steps=50, bounds=None,
                    wrap=None, step_cap=None):
    """Newton iteration on FD gradient/Hessian toward a local minimum of f.

    The objective may return inf/nan outside its domain; when a stencil
    sample is non-finite or a step fails to descend, the stencil width is
    shrunk (the grid spacing passed in ``h`` is the baseline width, needed
    because minima can sit in narrow valleys close to the domain edge).
    ``bounds`` is a per-axis (lo, hi) list or None entries; ``wrap`` gives a
    period per axis.  Raises NonConvergence if the FD gradient norm does
    not drop below grad_tol within max_steps.
    """
    x = np.array(x0, dtype=float)
    h = np.asarray(h, dtype=float)
    if step_cap is None:
        step_cap = 10.0 * h
    # Conservative initial stencil: minima often sit in valleys a couple of
    # grid cells from the domain wall, where full-spacing stencils leave B.
    shrink = 0.25
    f0 = f(x)
    for _ in range(max_steps):
        h_eff = h * shrink
        g = fd_gradient(f, x, h_eff)
        hess = fd_hessian(f, x, h_eff)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(hess))):
            shrink = max(shrink * 0.25, 1e-3)
            continue
        gn = float(np.linalg.norm(g))
        if gn < grad_tol:
            return x, float(f0), gn, hess, True
        try:
            evals = np.linalg.eigvalsh(hess)
            if evals.min() > 1e-14 * max(abs(evals).max(), 1e-30):
                step = -np.linalg.solve(hess, g)
            else:
                step = -np.linalg.lstsq(hess + np.eye(len(x)) * abs(evals).max() * 1e-8,
                                        g, rcond=None)[0]
        except np.linalg.LinAlgError:
            step = -g * (np.min(h_eff) / max(gn, 1e-300))
        step = np.clip(step, -step_cap, step_cap)
        accepted = False
        for _bt in range(8):
            xn = _project(x + step, bounds, wrap)
            fn = f(xn)
            if np.isfinite(fn) and fn <= f0 + 1e-12 * (1.0 + abs(f0)):
                x, f0, accepted = xn, fn, True
                break
            step = step * 0.35
        if not accepted:
            shrink = max(shrink * 0.25, 1e-3)
    g = fd_gradient(f, x, h * shrink)
    if np.all(np.isfinite(g)) and np.linalg.norm(g) < grad_tol:
        return x, float(f0), float(np.linalg.norm(g)), fd_hessian(f, x, h * shrink), True
    raise NonConvergence(
        f"gradient norm {np.linalg.norm(g):.3e} after {max_steps} Newton steps"
    )


def grid_local_minima(values, mask, wrap_theta=True):
    """Indices (i, j) of masked grid points not exceeded by any masked neighbor.

    Axis 0 is sigma (no wrap), axis 1 is theta (wrapped when requested).
    Plateau points all qualify, which is what the uniqueness check wants:
    a ring of equal minima must not look unique.
    """
    vals = np.where(mask, values, np.inf)
    n_s, n_t = vals.shape
    is_min = mask.copy()
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            shifted = np.full_like(vals, np.inf)
            src_i = slice(max(0, -di), n_s - max(0, di))
            dst_i = slice(max(0, di), n_s - max(0, -di))
            if wrap_theta:
                shifted[dst_i, :] = np.roll(vals, dj, axis=1)[src_i, :]
            else:
                src_j = slice(max(0, -dj), n_t - max(0, dj))
                dst_j = slice(max(0, dj), n_t - max(0, -dj))
                tmp = np.full_like(vals, np.inf)
                tmp[:, dst_j] = vals[:, src_j]
                shifted[dst_i, :] = tmp[src_i, :]
            is_min &= vals <= shifted
    return [tuple(ij) for ij in np.argwhere(is_min)]
