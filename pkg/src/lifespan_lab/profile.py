"""Slow-time profile transport solved exactly along characteristics.

The profile V(q, theta, tau) obeys a Burgers-type equation whose
characteristics, labelled by the initial offset s, satisfy

    dq/ds (s, theta, tau) = exp(-F1 tau) (1 + F2/F1) - F2/F1,

with the limit 1 - tau F2 across F1 = 0.  The slope dV/dq is transported
unchanged along each characteristic, so

    q(theta, tau; s) = M + int_M^s dq/ds drho,
    V(q(s)) = int_M^s dF0(rho) * dq/ds(rho) drho,

both integrated on the radiation-field sigma grid (composite Simpson)
with cubic-spline evaluation between nodes.  The first time dq/ds
vanishes at some grid point is the gradient catastrophe; pointwise that
crossing time is found by bisection in tau, an independent route that
must reproduce the lifespan functional G0 wherever both are defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .coefficients import CoefficientSet, g1, g2
from .lifespan import F1_ZERO_RTOL
from .radiation_field import RadiationField, RowModel

__all__ = [
    "PastBlowup", "ProfileSolution", "profile_blowup_constant",
]


class PastBlowup(RuntimeError):
    """Profile evaluation requested at or beyond the gradient catastrophe."""


def _dqds_formula(F1, F2, tau, f1_tol):
    """Characteristic stretch dq/ds, stable across the F1 = 0 branch.

    The exponent is clamped: once exp(-F1 tau) saturates the float range
    only the sign of the result matters (bracketing), and the clamp keeps
    it correct.
    """
    F1 = np.asarray(F1, dtype=float)
    F2 = np.asarray(F2, dtype=float)
    small = np.abs(F1) <= f1_tol
    safe = np.where(small, 1.0, F1)
    x = np.clip(-F1 * tau, -700.0, 700.0)
    main = np.exp(x) + F2 * np.expm1(x) / safe
    return np.where(small, 1.0 - tau * F2, main)


class _Row:
    """Per-angle slice of the transport problem on the sigma grid."""

    def __init__(self, sigma_grid, F1, F2, w, f1_tol):
        self.sigma = sigma_grid
        self.F1 = F1
        self.F2 = F2
        self.w = w
        self.f1_tol = f1_tol
        self._cache = {}

    def dqds(self, tau):
        return _dqds_formula(self.F1, self.F2, tau, self.f1_tol)

    def _integrals(self, tau):
        hit = self._cache.get(tau)
        if hit is not None:
            return hit
        slope = self.dqds(tau)
        prefix_q = cumulative_simpson(slope, x=self.sigma, initial=0.0)
        prefix_v = cumulative_simpson(self.w * slope, x=self.sigma, initial=0.0)
        m = self.sigma[-1]
        q_vals = m + prefix_q - prefix_q[-1]
        v_vals = prefix_v - prefix_v[-1]
        q_spl = CubicSpline(self.sigma, q_vals)
        v_spl = CubicSpline(self.sigma, v_vals)
        out = (q_vals, v_vals, q_spl, v_spl)
        if len(self._cache) > 64:
            self._cache.clear()
        self._cache[tau] = out
        return out

    def q_of_s(self, tau, s):
        return float(self._integrals(tau)[2](s))

    def v_at_s(self, tau, s):
        return float(self._integrals(tau)[3](s))

    def invert_q(self, tau, q, tol=1e-12):
        """Monotone bisection of s -> q(s); q must be within the row's range."""
        q_vals = self._integrals(tau)[0]
        lo, hi = self.sigma[0], self.sigma[-1]
        q_lo, q_hi = q_vals[0], q_vals[-1]
        if q >= q_hi:
            return hi
        if q <= q_lo:
            return lo
        spl = self._integrals(tau)[2]
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if spl(mid) < q:
                lo = mid
            else:
                hi = mid
            if hi - lo < tol:
                break
        return 0.5 * (lo + hi)


@dataclass
class ProfileSolution:
    """Characteristic-flow evaluators over a tabulated radiation field."""

    field: RadiationField
    coeffs: CoefficientSet
    F1: np.ndarray
    F2: np.ndarray
    f1_tol: float
    rows: dict = dc_field(default_factory=dict)
    _tau0_grid: float | None = None

    @classmethod
    def build(cls, field: RadiationField, coeffs: CoefficientSet):
        g1_row = g1(coeffs, field.theta_grid)[None, :]
        g2_row = g2(coeffs, field.theta_grid)[None, :]
        F1 = g1_row * field.dF0
        F2 = g2_row * field.d2F0
        f1_tol = F1_ZERO_RTOL * max(float(np.max(np.abs(F1))), 1e-300)
        return cls(field=field, coeffs=coeffs, F1=F1, F2=F2, f1_tol=f1_tol)

    # -- row plumbing -------------------------------------------------------

    def _row_index(self, theta):
        tg = self.field.theta_grid
        span = 2.0 * math.pi
        j = int(np.argmin(np.abs((tg - theta + span / 2) % span - span / 2)))
        wrapped = (tg[j] - theta + span / 2) % span - span / 2
        return j, abs(wrapped)

    def row(self, theta) -> _Row:
        """Transport row at the given angle (grid column or exact rebuild)."""
        j, dist = self._row_index(theta)
        if dist < 1e-12:
            key = ("grid", j)
            if key not in self.rows:
                self.rows[key] = _Row(self.field.sigma_grid, self.F1[:, j],
                                      self.F2[:, j], self.field.dF0[:, j], self.f1_tol)
            return self.rows[key]
        key = ("exact", round(float(theta), 14))
        if key not in self.rows:
            if self.field.data is None:
                raise ValueError("off-grid angle needs the source data attached to the field")
            model = RowModel.build(self.field.data, float(theta))
            w, d2 = model.F_derivs(self.field.sigma_grid, [1, 2])
            f1 = g1(self.coeffs, float(theta)) * w
            f2 = g2(self.coeffs, float(theta)) * d2
            self.rows[key] = _Row(self.field.sigma_grid, f1, f2, w, self.f1_tol)
        return self.rows[key]

    def dense_row(self, theta, lo=None, n: int = 1537, n_cheb: int = 384) -> _Row:
        """Transport row on a dense local sigma grid, rebuilt exactly.

        The global table resolution suffices for grid scans, but residual
        and fold work probes the transport integrals at accuracies where
        the table's spline floor would dominate; these rows trade a fresh
        Radon pass for a far lower floor.
        """
        if lo is None:
            lo = float(self.field.sigma_grid[0])
        key = ("dense", round(float(theta), 14), round(float(lo), 10), n, n_cheb)
        if key not in self.rows:
            if self.field.data is None:
                raise ValueError("dense rows need the source data attached to the field")
            dense = np.linspace(lo, self.field.support_radius, n)
            model = RowModel.build(self.field.data, float(theta), n_cheb=n_cheb)
            w, d2 = model.F_derivs(dense, [1, 2])
            f1 = g1(self.coeffs, float(theta)) * w
            f2 = g2(self.coeffs, float(theta)) * d2
            row = _Row(dense, f1, f2, w, self.f1_tol)
            from scipy.interpolate import CubicSpline as _CS
            row.f_splines = (_CS(dense, f1), _CS(dense, f2))
            self.rows[key] = row
        return self.rows[key]

    def _point_F(self, s, theta):
        row = self.row(theta)
        f1 = float(CubicSpline(row.sigma, row.F1)(s))
        f2 = float(CubicSpline(row.sigma, row.F2)(s))
        return f1, f2

    # -- public operations --------------------------------------------------

    def tau0_estimate(self) -> float:
        """Grid-level first crossing time (greatest lower scale for guards)."""
        if self._tau0_grid is None:
            cmap = self.crossing_map()
            self._tau0_grid = float(np.min(cmap))
        return self._tau0_grid

    def dq_ds(self, s: float, theta: float, tau: float) -> float:
        f1, f2 = self._point_F(s, theta)
        return float(_dqds_formula(f1, f2, tau, self.f1_tol))

    def crossing_time(self, s: float, theta: float, hi: float | None = None) -> float:
        """Smallest tau > 0 with dq/ds = 0, by bisection; inf if none."""
        f1, f2 = self._point_F(s, theta)
        return _crossing_from_F(f1, f2, self.f1_tol,
                                hi if hi is not None else 4.0 * self.tau0_estimate())

    def q_of_s(self, theta: float, tau: float, s: float) -> float:
        return self.row(theta).q_of_s(tau, s)

    def V_eval(self, q: float, theta: float, tau: float) -> float:
        guard = self.tau0_estimate() * (1.0 - 1e-6)
        if tau >= guard:
            raise PastBlowup(f"tau={tau} is not below the catastrophe time ~{guard}")
        m = self.field.support_radius
        if q >= m:
            return 0.0
        row = self.row(theta)
        s = row.invert_q(tau, q)
        return row.v_at_s(tau, s)

    def dV_dq(self, q: float, theta: float, tau: float) -> float:
        """Slope of the profile via transport: dV/dq = dF0 at the label s(q)."""
        guard = self.tau0_estimate() * (1.0 - 1e-6)
        if tau >= guard:
            raise PastBlowup(f"tau={tau} is not below the catastrophe time ~{guard}")
        row = self.row(theta)
        s = row.invert_q(tau, q)
        return float(CubicSpline(row.sigma, row.w)(s))

    def crossing_map(self) -> np.ndarray:
        """First crossing time on the full (sigma, theta) grid (inf where none)."""
        return _crossing_grid(self.F1, self.F2, self.f1_tol)

    def to_crossing_csv(self, path):
        cmap = self.crossing_map()
        with open(path, "w") as fh:
            fh.write("theta,s,tau_cross\n")
            for j, th in enumerate(self.field.theta_grid):
                for i, s in enumerate(self.field.sigma_grid):
                    fh.write(f"{th:.17g},{s:.17g},{cmap[i, j]:.17g}\n")

    def profile_csv(self, path, tau, theta_values=None):
        tg = self.field.theta_grid if theta_values is None else theta_values
        with open(path, "w") as fh:
            fh.write("theta,q,V,dV\n")
            for th in tg:
                row = self.row(th)
                q_vals, v_vals = row._integrals(tau)[:2]
                for i in range(len(q_vals)):
                    fh.write(f"{th:.17g},{q_vals[i]:.17g},{v_vals[i]:.17g},"
                             f"{row.w[i]:.17g}\n")


def _crossing_from_F(f1, f2, f1_tol, hi):
    if abs(f1) <= f1_tol:
        return 1.0 / f2 if f2 > 0.0 else math.inf
    if f1 + f2 <= 0.0 or f2 <= 0.0:
        return math.inf
    lo, high = 0.0, hi
    for _ in range(90):
        if _dqds_formula(f1, f2, high, f1_tol) <= 0.0:
            break
        high *= 2.0
    else:
        return math.inf
    for _ in range(80):
        mid = 0.5 * (lo + high)
        if _dqds_formula(f1, f2, mid, f1_tol) > 0.0:
            lo = mid
        else:
            high = mid
    return 0.5 * (lo + high)


def _crossing_grid(F1, F2, f1_tol):
    """Vectorized bisection for the first root of dq/ds in tau, per grid node.

    The slope is monotone when a crossing exists (F1 + F2 > 0 and F2 > 0);
    brackets expand per point until the slope turns negative.
    """
    small = np.abs(F1) <= f1_tol
    feasible = np.where(small, F2 > 0.0, (F1 + F2 > 0.0) & (F2 > 0.0))
    out = np.full(F1.shape, np.inf)
    active = feasible & ~small
    if np.any(active):
        scale = 1.0 / np.maximum(np.where(active, F2, 1.0), 1e-300)
        high = np.where(active, scale, 1.0)
        for _ in range(90):
            still_pos = active & (_dqds_formula(F1, F2, high, f1_tol) > 0.0)
            if not np.any(still_pos):
                break
            high = np.where(still_pos, 2.0 * high, high)
        lo = np.zeros(F1.shape)
        for _ in range(80):
            mid = 0.5 * (lo + high)
            pos = _dqds_formula(F1, F2, mid, f1_tol) > 0.0
            lo = np.where(active & pos, mid, lo)
            high = np.where(active & ~pos, mid, high)
        out[active] = (0.5 * (lo + high))[active]
    lim = small & (F2 > 0.0)
    with np.errstate(divide="ignore"):
        out[lim] = (1.0 / F2)[lim]
    return out


def profile_blowup_constant(sol: ProfileSolution, refine: bool = True):
    """First crossing time over the grid, Newton-refined off the grid.

    Returns (tau_cross, (sigma, theta)).  The refinement drives the
    implicit sigma-derivative of the crossing time to zero along slices
    (mirroring the lifespan search, but through the bisection route's
    implicit-function derivative, not the closed-form G0).
    """
    cmap = sol.crossing_map()
    i0, j0 = np.unravel_index(int(np.argmin(np.where(np.isfinite(cmap), cmap, np.inf))),
                              cmap.shape)
    tau_grid = float(cmap[i0, j0])
    if not math.isfinite(tau_grid):
        return math.inf, (math.nan, math.nan)
    sg = sol.field.sigma_grid
    tg = sol.field.theta_grid
    if not refine:
        return tau_grid, (float(sg[i0]), float(tg[j0]))
    x, val = _refine_crossing(sol, float(sg[i0]), float(tg[j0]),
                              float(sg[1] - sg[0]), float(tg[1] - tg[0]))
    return val, x


def _crossing_exact(sol: ProfileSolution, sigma, theta, hi):
    """Crossing time from the exact pointwise field route (off grid)."""
    f1 = g1(sol.coeffs, theta) * sol.field.point_eval(sigma, theta, 1)
    f2 = g2(sol.coeffs, theta) * sol.field.point_eval(sigma, theta, 2)
    return _crossing_from_F(f1, f2, sol.f1_tol, hi)


def _dcrossing_dsigma(sol: ProfileSolution, sigma, theta, hi):
    """Implicit-function sigma-derivative of the crossing time.

    At the crossing, Phi(tau, sigma) = dq/ds = 0, so
    dtau/dsigma = -(dPhi/dsigma)/(dPhi/dtau), both factors analytic in the
    field derivatives.  Independent of the closed-form G0 expression.
    """
    g1v = g1(sol.coeffs, theta)
    g2v = g2(sol.coeffs, theta)
    f1 = g1v * sol.field.point_eval(sigma, theta, 1)
    f2 = g2v * sol.field.point_eval(sigma, theta, 2)
    df1 = g1v * sol.field.point_eval(sigma, theta, 2)
    df2 = g2v * sol.field.point_eval(sigma, theta, 3)
    tau = _crossing_from_F(f1, f2, sol.f1_tol, hi)
    if not math.isfinite(tau):
        return math.nan, math.inf
    if abs(f1) <= sol.f1_tol:
        # tau = 1/F2 exactly on the limit branch
        return -df2 / (f2 * f2), tau
    ex = math.exp(-f1 * tau)
    dphi_dtau = -ex * (f1 + f2)
    dratio = (df2 * f1 - f2 * df1) / (f1 * f1)
    dphi_dsigma = -tau * df1 * ex * (1.0 + f2 / f1) + (ex - 1.0) * dratio
    if dphi_dtau == 0.0:
        return math.nan, tau
    return -dphi_dsigma / dphi_dtau, tau


def _refine_crossing(sol: ProfileSolution, sigma0, theta0, h_sigma, h_theta):
    from scipy.optimize import brentq

    hi = 4.0 * sol.tau0_estimate()
    sig_lo, sig_hi = sigma0 - 4 * h_sigma, min(sigma0 + 4 * h_sigma,
                                               sol.field.support_radius - 1e-9)

    def slope(s, th):
        return _dcrossing_dsigma(sol, s, th, hi)[0]

    def sigma_star(th, center):
        for widen in (1.0, 2.0):
            lo = max(center - 3 * h_sigma * widen, sig_lo)
            hi_b = min(center + 3 * h_sigma * widen, sig_hi)
            samples = np.linspace(lo, hi_b, 17)
            vals = np.array([slope(s, th) for s in samples])
            best = None
            for k in range(len(samples) - 1):
                a, b = vals[k], vals[k + 1]
                if np.isfinite(a) and np.isfinite(b) and a < 0.0 <= b:
                    mid = 0.5 * (samples[k] + samples[k + 1])
                    if best is None or abs(mid - center) < best[0]:
                        best = (abs(mid - center), samples[k], samples[k + 1])
            if best is not None:
                return brentq(lambda s: slope(s, th), best[1], best[2],
                              xtol=1e-14, rtol=1e-15)
        return center

    theta = theta0
    s_center = sigma0
    fd = max(h_theta * 1e-2, 1e-5)
    for _ in range(60):
        sig = sigma_star(theta, s_center)
        s_center = sig
        tp = _crossing_exact(sol, sig, theta + 0.5 * h_theta, hi)
        tm = _crossing_exact(sol, sig, theta - 0.5 * h_theta, hi)
        p = (tp - tm) / h_theta
        if not math.isfinite(p):
            break
        if abs(p) < 1e-10:
            break
        sp = sigma_star(theta + fd, s_center)
        sm = sigma_star(theta - fd, s_center)
        pp = (_crossing_exact(sol, sp, theta + fd + 0.5 * h_theta, hi)
              - _crossing_exact(sol, sp, theta + fd - 0.5 * h_theta, hi)) / h_theta
        pm = (_crossing_exact(sol, sm, theta - fd + 0.5 * h_theta, hi)
              - _crossing_exact(sol, sm, theta - fd - 0.5 * h_theta, hi)) / h_theta
        dp = (pp - pm) / (2.0 * fd)
        if not math.isfinite(dp) or dp <= 0.0:
            step = -math.copysign(h_theta, p)
        else:
            step = -p / dp
        step = min(max(step, -3 * h_theta), 3 * h_theta)
        theta += step
        if abs(step) < 1e-12:
            break
    sig = sigma_star(theta, s_center)
    return (float(sig), float(theta % (2 * math.pi))), float(
        _crossing_exact(sol, sig, theta, hi))
