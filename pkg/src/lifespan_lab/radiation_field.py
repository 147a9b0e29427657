"""Friedlander-type radiation field of the data and its sigma-derivatives.

The field is

    F0(sigma, theta) = (2 pi sqrt(2))^-1 *
        int_sigma^inf [R(s, omega; phi1) - d/ds R(s, omega; phi0)] / sqrt(s - sigma) ds,

where R is the Radon transform.  The substitution s = sigma + u^2 removes
the square-root singularity, after which the integrand is smooth and
standard Gauss-Legendre quadrature converges spectrally.  Derivatives in
sigma are taken by differentiating under the integral: the integrand
combination h(s) vanishes identically for s >= M together with all its
derivatives, so each sigma-derivative replaces h by its exact s-derivative
(Radon transforms of directional derivatives of the data), never by
differencing.

Tabulating the field would be prohibitively slow if every grid node paid
for its own chord quadratures, so each theta row first builds a Chebyshev
model of h and its s-derivatives on the support interval [-M, M] (a
controlled spectral approximation of exactly computed values); the
desingularized u-integrals then reduce to cheap polynomial evaluation.
A direct nested-quadrature route (`compute_F0`) is kept for pointwise
work: oracle tests, Newton refinement off the grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from numpy.polynomial import chebyshev as nch

from .initial_data import Field, InitialData, ZeroField, radon_profile, _gl_nodes

F0_CONST = 1.0 / (2.0 * math.pi * math.sqrt(2.0))
MAX_DERIV_ORDER = 3


class DerivOrderError(ValueError):
    """Requested sigma-derivative exceeds what the data can supply analytically."""


def _h_orders(data: InitialData, s_values, theta, max_order, n_quad=256):
    """h^(k)(s) = R(s; (w.grad)^k phi1) - R(s; (w.grad)^{k+1} phi0), k = 0..max_order."""
    orders = list(range(max_order + 2))
    r1 = radon_profile(data.phi1, s_values, theta, orders[:-1], n_quad=n_quad)
    r0 = radon_profile(data.phi0, s_values, theta, orders[1:], n_quad=n_quad)
    return r1 - r0


def compute_F0(data: InitialData, sigma: float, theta: float, deriv_order: int = 0,
               n_u: int = 128, n_quad: int = 512) -> float:
    """Pointwise F0 or one of its first three sigma-derivatives (exact route)."""
    if deriv_order > MAX_DERIV_ORDER:
        raise DerivOrderError(
            f"deriv_order {deriv_order} > {MAX_DERIV_ORDER}: the data module "
            "supplies analytic derivatives only up to fourth order"
        )
    m = data.support_radius
    if sigma >= m:
        return 0.0
    u_lo = math.sqrt(max(-m - sigma, 0.0))
    u_hi = math.sqrt(m - sigma)
    if u_hi <= u_lo:
        return 0.0
    x, w = _gl_nodes(n_u)
    u = 0.5 * (u_hi + u_lo) + 0.5 * (u_hi - u_lo) * x
    uw = 0.5 * (u_hi - u_lo) * w
    s = sigma + u * u
    hk = _h_orders(data, s, theta, deriv_order, n_quad=n_quad)[deriv_order]
    return float(F0_CONST * 2.0 * np.dot(hk, uw))


def _cheb_points(n):
    k = np.arange(n)
    return np.cos(np.pi * (k + 0.5) / n)


def _cheb_coeffs(values):
    """Chebyshev coefficients from first-kind point values; values shape (n, ...)."""
    n = values.shape[0]
    k = np.arange(n)
    mat = np.cos(np.pi * np.outer(k, k + 0.5) / n) * (2.0 / n)
    mat[0] *= 0.5
    return np.tensordot(mat, values, axes=(1, 0))


@dataclass
class RowModel:
    """Chebyshev model of h and its s-derivatives at one observation angle.

    Provides the radiation field and sigma-derivatives along the row via
    near-exact Gauss integration of the polynomial model (n_u of the order
    of the polynomial degree integrates it exactly; smaller n_u trades the
    aliasing of the coefficient tail for speed).
    """

    theta: float
    support_radius: float
    coeffs: np.ndarray          # shape (orders, n_cheb)
    n_u: int | None = None

    @classmethod
    def build(cls, data: InitialData, theta: float, max_order: int = MAX_DERIV_ORDER,
              n_cheb: int = 192, n_quad: int = 512, n_u: int | None = None):
        m = data.support_radius
        s_pts = m * _cheb_points(n_cheb)
        hk = _h_orders(data, s_pts, theta, max_order, n_quad=n_quad)
        coeffs = _cheb_coeffs(hk.T)          # (n_cheb, orders)
        return cls(theta=theta, support_radius=m, coeffs=coeffs.T, n_u=n_u)

    def h_values(self, s, order):
        s = np.asarray(s, dtype=float)
        xi = np.clip(s / self.support_radius, -1.0, 1.0)
        vals = nch.chebval(xi, self.coeffs[order])
        return np.where(np.abs(s) < self.support_radius, vals, 0.0)

    def F_derivs(self, sigma, orders):
        """F0 sigma-derivative table at the requested orders; sigma ascending array."""
        sigma = np.asarray(sigma, dtype=float)
        m = self.support_radius
        n_u = self.n_u if self.n_u is not None else self.coeffs.shape[1]
        x, w = _gl_nodes(n_u)
        u_lo = np.sqrt(np.maximum(-m - sigma, 0.0))
        u_hi = np.sqrt(np.maximum(m - sigma, 0.0))
        half = 0.5 * (u_hi - u_lo)
        u = (0.5 * (u_hi + u_lo))[:, None] + half[:, None] * x[None, :]
        uw = half[:, None] * w[None, :]
        s_nodes = sigma[:, None] + u * u
        xi = np.clip(s_nodes / m, -1.0, 1.0)
        live = np.abs(s_nodes) < m
        out = np.empty((len(orders), len(sigma)))
        for j, k in enumerate(orders):
            vals = nch.chebval(xi, self.coeffs[k])
            vals = np.where(live, vals, 0.0)
            out[j] = F0_CONST * 2.0 * np.sum(vals * uw, axis=1)
        out[:, u_hi <= u_lo] = 0.0
        return out


@dataclass
class RadiationField:
    """F0 and its first three sigma-derivatives on a (sigma, theta) grid."""

    sigma_grid: np.ndarray
    theta_grid: np.ndarray
    F0: np.ndarray
    dF0: np.ndarray
    d2F0: np.ndarray
    d3F0: np.ndarray
    sigma_min: float
    support_radius: float
    data: InitialData | None = None
    evaluator: object = None            # callable (sigma, theta, order) -> float
    diagnostics: dict = dc_field(default_factory=dict)

    def deriv_table(self, order):
        return (self.F0, self.dF0, self.d2F0, self.d3F0)[order]

    def point_eval(self, sigma, theta, order=0):
        """Off-grid field value via the exact route when available."""
        if self.evaluator is not None:
            return float(self.evaluator(sigma, theta, order))
        i = int(np.clip(np.searchsorted(self.sigma_grid, sigma), 1, len(self.sigma_grid) - 1))
        j = int(np.argmin(np.abs(self.theta_grid - (theta % (2 * np.pi)))))
        tab = self.deriv_table(order)
        s0, s1 = self.sigma_grid[i - 1], self.sigma_grid[i]
        t = (sigma - s0) / (s1 - s0)
        return float((1 - t) * tab[i - 1, j] + t * tab[i, j])

    def decay_constants(self):
        """Fitted sup of |d^k F0| (1+|sigma|)^(1/2+k) per order, over the grid."""
        weights = (1.0 + np.abs(self.sigma_grid))[:, None]
        return [float(np.max(np.abs(self.deriv_table(k)) * weights ** (0.5 + k)))
                for k in range(3)]

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("theta,sigma,F0,dF0,d2F0,d3F0\n")
            for j, th in enumerate(self.theta_grid):
                for i, s in enumerate(self.sigma_grid):
                    fh.write(
                        f"{th:.17g},{s:.17g},{self.F0[i, j]:.17g},{self.dF0[i, j]:.17g},"
                        f"{self.d2F0[i, j]:.17g},{self.d3F0[i, j]:.17g}\n"
                    )

    def save(self, path):
        np.savez_compressed(
            path, sigma_grid=self.sigma_grid, theta_grid=self.theta_grid,
            F0=self.F0, dF0=self.dF0, d2F0=self.d2F0, d3F0=self.d3F0,
            sigma_min=self.sigma_min, support_radius=self.support_radius,
        )

    @classmethod
    def load(cls, path, data: InitialData | None = None):
        z = np.load(path)
        fld = cls(
            sigma_grid=z["sigma_grid"], theta_grid=z["theta_grid"],
            F0=z["F0"], dF0=z["dF0"], d2F0=z["d2F0"], d3F0=z["d3F0"],
            sigma_min=float(z["sigma_min"]), support_radius=float(z["support_radius"]),
            data=data,
        )
        if data is not None:
            fld.evaluator = lambda s, t, k: compute_F0(data, s, t, k)
        return fld


def build_field(data: InitialData, sigma_min: float | None = None,
                n_sigma: int = 384, n_theta: int = 256,
                n_cheb: int = 192, n_quad: int = 512, n_u: int = 96) -> RadiationField:
    """Tabulate F0 and derivatives on the tensor grid, with support/decay checks."""
    if n_sigma < 128 or n_theta < 128:
        raise ValueError("grid counts must be at least 128")
    m = data.support_radius
    if sigma_min is None:
        sigma_min = -8.0 * m
    sigma_grid = np.linspace(sigma_min, m, n_sigma)
    theta_grid = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)
    tables = np.zeros((MAX_DERIV_ORDER + 1, n_sigma, n_theta))
    if not data.is_zero:
        orders = list(range(MAX_DERIV_ORDER + 1))
        for j, th in enumerate(theta_grid):
            row = RowModel.build(data, th, n_cheb=n_cheb, n_quad=n_quad, n_u=n_u)
            tables[:, :, j] = row.F_derivs(sigma_grid, orders)
    fld = RadiationField(
        sigma_grid=sigma_grid, theta_grid=theta_grid,
        F0=tables[0], dF0=tables[1], d2F0=tables[2], d3F0=tables[3],
        sigma_min=float(sigma_min), support_radius=m, data=data,
        evaluator=lambda s, t, k: compute_F0(data, s, t, k),
    )
    peak = float(np.max(np.abs(fld.F0)))
    edge = float(np.max(np.abs(fld.F0[0, :])))
    fld.diagnostics = {
        "max_abs_F0": peak,
        "edge_abs_F0": edge,
        "decay_constants": fld.decay_constants() if peak > 0 else [0.0, 0.0, 0.0],
    }
    if peak > 0 and edge > 0.05 * peak:
        warnings.warn(
            f"sigma_min={sigma_min} truncates the field at {edge / peak:.1%} of its "
            "peak; the lifespan search window may be too aggressive",
            stacklevel=2,
        )
    return fld
