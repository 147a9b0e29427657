"""The frozen-parameter blowup system and its exact solution.

In the fold coordinates (X, Y, T) the leading-order system is

    dphi/dT + sum_ij (d_ij w + sum_k e_ijk what_k v) what_i what_j = 0,
    dv/dT = 0,
    dw/dX = v dphi/dX,

with phi(X, Y, 0) = X, phi(M, Y, T) = M, and v prescribed through the
radiation field at the start time tau1.  Its exact solution is the
characteristic flow of the profile transport reparametrized so that the
slow time starts at tau1: the label map sbar(X, Y) inverts the flow at
tau1 and

    phi(X, Y, T)   = q(Y, T + tau1; sbar),
    v(X, Y)        = dF0(sbar, Y),
    w(X, Y, T)     = V-integral at slow time T + tau1 up to sbar.

The fold condition (a single interior zero of dphi/dX with negative
T-slope and positive definite transverse Hessian) is verified
numerically at the predicted point: X at the image of the lifespan
minimizer, Y at the minimizing angle, T at tau0 - tau1.

Everything here runs on per-angle rows rebuilt from the exact Radon
machinery on a dense local sigma window: the global radiation-field
table is too coarse for the fold's curvatures, and spline noise there
would drown the zero of dphi/dX.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .coefficients import g1, g2
from .lifespan import LifespanReport
from .profile import ProfileSolution, _Row, _dqds_formula

__all__ = [
    "OutOfRange", "BlowupSystemSolution", "ConditionHReport", "verify_condition_H",
]


class OutOfRange(ValueError):
    """Requested X lies outside the image of the label map."""


@dataclass
class ConditionHReport:
    zero_point: tuple           # (X*, Y*, T*)
    min_dXphi: float
    dTdXphi_at_star: float
    grad_dXphi_at_star: np.ndarray
    hessian_dXphi_at_star: np.ndarray
    satisfied: bool
    failing_clauses: list = dc_field(default_factory=list)
    predicted_point: tuple = (math.nan, math.nan)
    extras: dict = dc_field(default_factory=dict)


@dataclass
class BlowupSystemSolution:
    """Exact leading-order solution evaluators on a local fold domain."""

    profile: ProfileSolution
    tau1: float
    x_range: tuple
    y_range: tuple
    t_max: float
    n_dense: int = 1025
    n_cheb: int = 512

    @classmethod
    def build(cls, profile: ProfileSolution, tau0: float, minimizer: tuple,
              tau1: float | None = None, delta_y: float = 0.5, delta_x: float = 2.0):
        if tau1 is None:
            tau1 = 0.5 * tau0
        if not 0.0 < tau1 < tau0:
            raise ValueError("tau1 must lie strictly between 0 and tau0")
        sigma0, theta0 = minimizer
        m = profile.field.support_radius
        x_lo = max(sigma0 - delta_x, float(profile.field.sigma_grid[0]) + 0.5)
        x_hi = min(m, sigma0 + delta_x)
        return cls(profile=profile, tau1=float(tau1),
                   x_range=(x_lo, x_hi),
                   y_range=(theta0 - delta_y, theta0 + delta_y),
                   t_max=float(tau0 - tau1))

    def row(self, Y: float) -> _Row:
        """Dense-sigma transport row at angle Y (label window up to M)."""
        lo = max(self.x_range[0] - 0.5, float(self.profile.field.sigma_grid[0]))
        if len(self.profile.rows) > 512:
            self.profile.rows.clear()
        return self.profile.dense_row(float(Y), lo=lo, n=self.n_dense,
                                      n_cheb=self.n_cheb)

    # -- pointwise evaluators ------------------------------------------------

    def sbar_invert(self, X: float, Y: float) -> float:
        """Label sbar with X = q(Y, tau1; sbar), by monotone bisection."""
        row = self.row(Y)
        q_vals = row._integrals(self.tau1)[0]
        if X > q_vals[-1] + 1e-12 or X < q_vals[0] - 1e-12:
            raise OutOfRange(f"X={X} outside the tau1 flow image "
                             f"[{q_vals[0]:.4f}, {q_vals[-1]:.4f}]")
        return row.invert_q(self.tau1, min(max(X, q_vals[0]), q_vals[-1]))

    def phi(self, X: float, Y: float, T: float) -> float:
        s = self.sbar_invert(X, Y)
        return self.row(Y).q_of_s(T + self.tau1, s)

    def v(self, X: float, Y: float, T: float = 0.0) -> float:
        row = self.row(Y)
        s = self.sbar_invert(X, Y)
        return float(np.interp(s, row.sigma, row.w))

    def w(self, X: float, Y: float, T: float) -> float:
        s = self.sbar_invert(X, Y)
        return self.row(Y).v_at_s(T + self.tau1, s)

    def dX_phi(self, X: float, Y: float, T: float) -> float:
        """Fold indicator: the ratio form dq/ds(T + tau1) / dq/ds(tau1) at sbar."""
        row = self.row(Y)
        s = self.sbar_invert(X, Y)
        f1 = float(row.f_splines[0](s))
        f2 = float(row.f_splines[1](s))
        num = float(_dqds_formula(f1, f2, T + self.tau1, row.f1_tol))
        den = float(_dqds_formula(f1, f2, self.tau1, row.f1_tol))
        return num / den

    def dXphi_row(self, X: np.ndarray, Y: float, T: float) -> np.ndarray:
        """Vectorized fold indicator along an X-array at fixed angle."""
        row = self.row(Y)
        q1, _, q_spl, _ = row._integrals(self.tau1)
        sbar = np.interp(X, q1, row.sigma)
        slope = _dqds_formula(row.F1, row.F2, self.tau1, row.f1_tol)
        for _ in range(2):
            sbar = sbar - (q_spl(sbar) - X) / np.maximum(
                np.interp(sbar, row.sigma, slope), 1e-12)
        f1 = row.f_splines[0](sbar)
        f2 = row.f_splines[1](sbar)
        num = _dqds_formula(f1, f2, T + self.tau1, row.f1_tol)
        den = _dqds_formula(f1, f2, self.tau1, row.f1_tol)
        return num / den

    # -- lattice evaluation and residuals -------------------------------------

    def lattice(self, n_x=33, n_y=17, n_t=9, t_frac=0.9):
        xs = np.linspace(self.x_range[0], self.x_range[1] - 1e-9, n_x)
        ys = np.linspace(self.y_range[0], self.y_range[1], n_y)
        ts = np.linspace(0.0, t_frac * self.t_max, n_t)
        return xs, ys, ts

    def fields_on_lattice(self, xs, ys, ts):
        """phi, v, w arrays of shape (n_x, n_y, n_t) (v constant in T)."""
        nx, ny, nt = len(xs), len(ys), len(ts)
        phi = np.empty((nx, ny, nt))
        w = np.empty((nx, ny, nt))
        v = np.empty((nx, ny))
        for j, y in enumerate(ys):
            row = self.row(y)
            q1, _, q_spl, _ = row._integrals(self.tau1)
            sbar = np.interp(xs, q1, row.sigma)
            slope = _dqds_formula(row.F1, row.F2, self.tau1, row.f1_tol)
            for _ in range(2):
                sbar = sbar - (q_spl(sbar) - xs) / np.maximum(
                    np.interp(sbar, row.sigma, slope), 1e-12)
            v[:, j] = np.interp(sbar, row.sigma, row.w)
            for k, t in enumerate(ts):
                _, _, q_s, v_s = row._integrals(t + self.tau1)
                phi[:, j, k] = q_s(sbar)
                w[:, j, k] = v_s(sbar)
        return phi, v, w

    def system_residual(self, n_x=33, n_y=17, n_t=9, t_frac=0.9):
        """Max residual of the three equations by centered differences."""
        xs, ys, ts = self.lattice(n_x, n_y, n_t, t_frac)
        phi, v, w = self.fields_on_lattice(xs, ys, ts)
        g1v = g1(self.profile.coeffs, ys)[None, :, None]
        g2v = g2(self.profile.coeffs, ys)[None, :, None]
        dt = ts[1] - ts[0]
        dx = xs[1] - xs[0]
        dphi_dt = (phi[:, :, 2:] - phi[:, :, :-2]) / (2 * dt)
        r1 = dphi_dt + g1v * w[:, :, 1:-1] + g2v * v[:, :, None]
        dw_dx = (w[2:, :, :] - w[:-2, :, :]) / (2 * dx)
        dphi_dx = (phi[2:, :, :] - phi[:-2, :, :]) / (2 * dx)
        r3 = dw_dx - v[1:-1, :, None] * dphi_dx
        return max(float(np.max(np.abs(r1))), float(np.max(np.abs(r3))))


def _label_indicator(row, tau1, t_star):
    """dq/ds ratio (the fold indicator pulled back to label coordinates)."""
    num = _dqds_formula(row.F1, row.F2, t_star + tau1, row.f1_tol)
    den = _dqds_formula(row.F1, row.F2, tau1, row.f1_tol)
    return num / den


def _indicator_and_slope(row, s, tau1, t_star):
    """Indicator value and its analytic s-derivative at label s.

    With N = dq/ds at tau0 and D = dq/ds at tau1, both closed forms in
    (F1, F2)(s), the slope is (N' D - N D')/D^2 where the primes follow
    from the spline representations of F1 and F2.
    """
    f1 = float(row.f_splines[0](s))
    f2 = float(row.f_splines[1](s))
    df1 = float(row.f_splines[0].derivative()(s))
    df2 = float(row.f_splines[1].derivative()(s))
    tau0 = t_star + tau1

    def val_and_partials(tau):
        x = min(max(-f1 * tau, -700.0), 700.0)
        ex = math.exp(x)
        em1 = math.expm1(x)
        if abs(f1) <= row.f1_tol:
            return 1.0 - tau * f2, 0.0, -tau
        v = ex + f2 * em1 / f1
        dv_df1 = -tau * ex + f2 * (-tau * ex * f1 - em1) / (f1 * f1)
        dv_df2 = em1 / f1
        return v, dv_df1, dv_df2

    n, dn1, dn2 = val_and_partials(tau0)
    d, dd1, dd2 = val_and_partials(tau1)
    num_prime = dn1 * df1 + dn2 * df2
    den_prime = dd1 * df1 + dd2 * df2
    value = n / d
    slope = (num_prime * d - n * den_prime) / (d * d)
    return value, slope


def verify_condition_H(sol: BlowupSystemSolution, report: LifespanReport,
                       n_y: int = 49, max_polish: int = 25) -> ConditionHReport:
    """Locate and certify the fold point of dphi/dX at T = tau0 - tau1.

    All location work happens in label coordinates (s, Y), where the
    indicator's s-derivative is analytic and no map inversion enters; the
    reported gradient and Hessian are transformed back to (X, Y) through
    the tau1 flow.  Runs regardless of the nondegeneracy verdict so that
    degenerate (radial) datasets report which clause fails.
    """
    from scipy.optimize import brentq

    t_star = sol.t_max
    sigma0, theta0 = report.minimizer
    sigma_bar = sol.row(theta0).q_of_s(sol.tau1, sigma0)
    y_lo, y_hi = sol.y_range
    ys = np.linspace(y_lo, y_hi, n_y)
    hy = float(ys[1] - ys[0])

    def s_star_and_mu(y):
        """Interior minimizer of the indicator along the label axis."""
        row = sol.row(y)
        prof = _label_indicator(row, sol.tau1, t_star)
        i = int(np.argmin(prof))
        i = min(max(i, 2), len(row.sigma) - 3)
        slope = lambda s: _indicator_and_slope(row, s, sol.tau1, t_star)[1]
        a, b = float(row.sigma[i - 2]), float(row.sigma[i + 2])
        sa, sb = slope(a), slope(b)
        if sa < 0.0 <= sb:
            s = brentq(slope, a, b, xtol=1e-14)
        else:
            s = float(row.sigma[i])
        val = _indicator_and_slope(row, s, sol.tau1, t_star)[0]
        return s, val

    mu_grid = np.empty(n_y)
    s_grid = np.empty(n_y)
    for j, y in enumerate(ys):
        s_grid[j], mu_grid[j] = s_star_and_mu(y)
    j0 = int(np.argmin(mu_grid))
    y_star = float(ys[j0])

    def mu_at(y):
        return s_star_and_mu(y)[1]

    # Newton polish along the valley floor; by the envelope theorem (the
    # label minimizer is an exact root of the analytic slope) dmu/dY equals
    # the partial Y-derivative of the indicator at the fold.  Coarse stage
    # first, then a fine Richardson stage: the coarse stencil's own
    # truncation would otherwise park the stationary point off by O(dy^2).
    def dmu_centered(y, dd):
        return (mu_at(y + dd) - mu_at(y - dd)) / (2 * dd)

    def dmu_rich(y, dd):
        return (4.0 * dmu_centered(y, 0.5 * dd) - dmu_centered(y, dd)) / 3.0

    for dy, deriv in ((0.25 * hy, dmu_centered), (2e-4, dmu_rich)):
        for _ in range(max_polish):
            dmu = deriv(y_star, dy)
            d2mu = (mu_at(y_star + dy) - 2 * mu_at(y_star) + mu_at(y_star - dy)) / (dy * dy)
            if abs(dmu) < 1e-8:
                break
            if not np.isfinite(d2mu) or d2mu <= 0.0:
                step = -math.copysign(dy, dmu)
            else:
                step = -dmu / d2mu
            y_new = min(max(y_star + min(max(step, -10 * hy), 10 * hy), y_lo), y_hi)
            if y_new == y_star:
                break
            y_star = y_new

    s_star, val = s_star_and_mu(y_star)
    row_star = sol.row(y_star)

    # Richardson-extrapolated tangential gradient at the fold.
    def mu_diff(dd):
        return (mu_at(y_star + dd) - mu_at(y_star - dd)) / (2 * dd)

    dyf = 2e-4
    gy = (4.0 * mu_diff(0.5 * dyf) - mu_diff(dyf)) / 3.0
    gs = _indicator_and_slope(row_star, s_star, sol.tau1, t_star)[1]

    # Label-space Hessian by differences of the analytic slope, then the
    # chart transform to (X, Y) through the tau1 flow.
    ds = 0.1 * float(row_star.sigma[1] - row_star.sigma[0]) * 10
    h_ss = (_indicator_and_slope(row_star, s_star + ds, sol.tau1, t_star)[1]
            - _indicator_and_slope(row_star, s_star - ds, sol.tau1, t_star)[1]) / (2 * ds)
    dy_c = 0.25 * hy
    row_p = sol.row(y_star + dy_c)
    row_m = sol.row(y_star - dy_c)
    h_sy = (_indicator_and_slope(row_p, s_star, sol.tau1, t_star)[1]
            - _indicator_and_slope(row_m, s_star, sol.tau1, t_star)[1]) / (2 * dy_c)
    e_p = _indicator_and_slope(row_p, s_star, sol.tau1, t_star)[0]
    e_m = _indicator_and_slope(row_m, s_star, sol.tau1, t_star)[0]
    h_yy = (e_p - 2 * val + e_m) / (dy_c * dy_c)
    hess_label = np.array([[h_ss, h_sy], [h_sy, h_yy]])

    # Chart transform: X = q(Y, tau1; s).  J = [[dX/ds, dX/dY], [0, 1]].
    x_s = float(_dqds_formula(float(row_star.f_splines[0](s_star)),
                              float(row_star.f_splines[1](s_star)),
                              sol.tau1, row_star.f1_tol))
    q_p = row_p.q_of_s(sol.tau1, s_star)
    q_m = row_m.q_of_s(sol.tau1, s_star)
    x_y = (q_p - q_m) / (2 * dy_c)
    jac = np.array([[x_s, x_y], [0.0, 1.0]])
    jinv = np.linalg.inv(jac)
    grad = jinv.T @ np.array([gs, gy])
    hess = jinv.T @ hess_label @ jinv
    grad_norm = float(np.linalg.norm(grad))
    x_star = row_star.q_of_s(sol.tau1, s_star)

    dt = max(1e-3 * sol.t_max, 1e-6)
    row_vals = row_star.f_splines
    f1s, f2s = float(row_vals[0](s_star)), float(row_vals[1](s_star))
    num_now = float(_dqds_formula(f1s, f2s, t_star + sol.tau1, row_star.f1_tol))
    num_back = float(_dqds_formula(f1s, f2s, t_star - dt + sol.tau1, row_star.f1_tol))
    dtd = (num_now - num_back) / dt / x_s

    evals = np.linalg.eigvalsh(hess)
    trace_scale = max(abs(float(np.trace(hess))), 1e-30)
    clauses = []
    if not report.nd_satisfied:
        clauses.append("nd_not_satisfied")
    if not dtd < 0.0:
        clauses.append("dT_dXphi_not_negative")
    if not grad_norm < 1e-6:
        clauses.append("gradient_not_zero")
    if not evals.min() > 1e-8 * trace_scale:
        vec = np.linalg.eigh(hess)[1][:, 0]
        if abs(vec[1]) > abs(vec[0]):
            clauses.append("theta_degenerate_hessian")
        else:
            clauses.append("hessian_not_positive_definite")
    cell = (float((sol.x_range[1] - sol.x_range[0]) / 96.0), hy)
    if abs(x_star - sigma_bar) > cell[0] or abs(y_star - theta0) > cell[1]:
        clauses.append("zero_point_mismatch")

    return ConditionHReport(
        zero_point=(float(x_star), float(y_star), float(t_star)),
        min_dXphi=float(val),
        dTdXphi_at_star=float(dtd),
        grad_dXphi_at_star=grad,
        hessian_dXphi_at_star=hess,
        satisfied=not clauses,
        failing_clauses=clauses,
        predicted_point=(float(sigma_bar), float(theta0)),
        extras={"hessian_eigenvalues": evals, "grid_cell": cell,
                "label_point": float(s_star), "mu_profile": mu_grid, "y_grid": ys},
    )
