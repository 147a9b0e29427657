"""Glued approximate solution and its equation residual.

The approximation carries the exact linear wave at early times and hands
over to the slow-time profile along outgoing rays:

    u_a(t, x) = eps chi(eps t) w0(t, x)
              + (eps / sqrt(r)) (1 - chi(eps t)) chi(-3 eps q) V(q, omega, tau),

with q = r - t and tau = eps sqrt(1 + t) (this module's slow-time
convention; the fold analysis uses eps sqrt(t), the conversion being
explicit wherever the two meet).  chi is a genuinely C-infinity cutoff,
1 below 1 and 0 above 2, built as the normalized integral of a standard
bump so its derivative is closed form.

The linear wave is evaluated through the 2-D Poisson formula.  Writing
K[f](t, x) = (t / 2 pi) int f(x + t sin(psi) omega(alpha)) sin(psi) dpsi dalpha
over psi in [0, pi/2], alpha in [0, 2 pi] (the sin substitution removes
the inverse square root), the solution with data (phi0, phi1) is

    w0   = K[phi0]/t + t-average of sin^2 (omega.grad phi0) + K[phi1],
    dt w0 = K[lap phi0] + K[phi1]/t + t-average of sin^2 (omega.grad phi1),

everything smooth, so tensor Gauss-Legendre x trapezoid quadrature
converges spectrally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .initial_data import InitialData, _gl_nodes
from .profile import PastBlowup, ProfileSolution

_CHI_NORM = None


def _chi_bump(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 1.0) & (t < 2.0)
    out = np.zeros_like(t)
    tt = np.where(inside, t, 1.5)
    out = np.where(inside, np.exp(-1.0 / ((tt - 1.0) * (2.0 - tt))), 0.0)
    return out


def _chi_norm():
    global _CHI_NORM
    if _CHI_NORM is None:
        x, w = _gl_nodes(96)
        t = 1.5 + 0.5 * x
        _CHI_NORM = float(np.dot(_chi_bump(t), 0.5 * w))
    return _CHI_NORM


def chi(s):
    """C-infinity cutoff: 1 for s <= 1, 0 for s >= 2."""
    s = np.asarray(s, dtype=float)
    scalar = s.ndim == 0
    s = np.atleast_1d(s)
    out = np.where(s <= 1.0, 1.0, 0.0)
    mid = (s > 1.0) & (s < 2.0)
    if np.any(mid):
        x, w = _gl_nodes(96)
        sm = s[mid]
        half = 0.5 * (2.0 - sm)
        nodes = sm[:, None] + half[:, None] * (x[None, :] + 1.0)
        vals = np.sum(_chi_bump(nodes) * w[None, :], axis=1) * half
        out[mid] = vals / _chi_norm()
    return float(out[0]) if scalar else out


def chi_prime(s):
    """Closed-form derivative of the cutoff."""
    s = np.asarray(s, dtype=float)
    return -_chi_bump(s) / _chi_norm()


def linear_wave(data: InitialData, t: float, points,
                n_psi: int = 32, n_alpha: int = 64):
    """Free-wave value and time derivative of the data at time t.

    ``points`` has shape (..., 2); returns (w0, dt_w0) matching its
    leading shape.  The disk average is windowed per point to the part of
    the backward cone that meets the data disk, so the node counts stay
    adequate at any t (for a far observer the data occupy a narrow ridge
    of the full cone).
    """
    points = np.asarray(points, dtype=float)
    base_shape = points.shape[:-1]
    if t == 0.0:
        return data.phi0(points), data.phi1(points)
    flat = points.reshape(-1, 2)
    n = flat.shape[0]
    m = data.support_radius
    dist = np.hypot(flat[:, 0], flat[:, 1])

    s_lo = np.maximum(dist - m, 0.0)
    s_hi = np.minimum(dist + m, t)
    live = s_hi > s_lo
    psi_lo = np.arcsin(np.clip(s_lo / t, 0.0, 1.0))
    psi_hi = np.arcsin(np.clip(s_hi / t, 0.0, 1.0))
    x, wgl = _gl_nodes(n_psi)
    half = 0.5 * (psi_hi - psi_lo)
    psi = psi_lo[:, None] + half[:, None] * (x[None, :] + 1.0)     # (n, n_psi)
    wpsi = half[:, None] * wgl[None, :]

    alpha0 = np.arctan2(flat[:, 1], flat[:, 0])
    with np.errstate(invalid="ignore", divide="ignore"):
        a_half = np.where(dist > 1.02 * m,
                          1.05 * np.arcsin(np.clip(m / np.maximum(dist, 1e-30), 0, 1)),
                          math.pi)
    xa, wa = _gl_nodes(n_alpha)
    alpha = (alpha0 + math.pi)[:, None] + a_half[:, None] * xa[None, :]  # opposite side
    walpha = a_half[:, None] * wa[None, :]
    omega = np.stack([np.cos(alpha), np.sin(alpha)], axis=-1)      # (n, n_alpha, 2)

    sin_psi = np.sin(psi)
    pos = (flat[:, None, None, :]
           + t * sin_psi[:, :, None, None] * omega[:, None, :, :])  # (n, npsi, nalpha, 2)

    def K(field_vals, psi_weight):
        acc = np.einsum("npa,np->npa", field_vals, psi_weight)
        acc = np.einsum("npa,na->n", acc, walpha)
        return np.where(live, t * acc, 0.0) / (2.0 * math.pi)

    w_sin = wpsi * sin_psi
    w_sin2 = wpsi * sin_psi * sin_psi
    omega_b = np.broadcast_to(omega[:, None, :, :], pos.shape)

    phi0_d = data.phi0.line_derivs(pos, omega_b, 1)
    phi1_d = data.phi1.line_derivs(pos, omega_b, 1)
    k_phi0 = K(phi0_d[0], w_sin)
    k_phi1 = K(phi1_d[0], w_sin)
    with np.errstate(invalid="ignore"):
        w0 = k_phi0 / t + K(phi0_d[1], w_sin2) + k_phi1
        dt_w0 = (K(data.phi0.laplacian(pos), w_sin) + k_phi1 / t
                 + K(phi1_d[1], w_sin2))
    w0 = w0.reshape(base_shape)
    dt_w0 = dt_w0.reshape(base_shape)
    if base_shape == ():
        return float(w0), float(dt_w0)
    return w0, dt_w0


@dataclass
class ApproxSolution:
    """The glued approximation for one value of the small parameter.

    With ``dense_rows`` set (default), profile values come from exact
    dense transport rows instead of the global field table; residual
    differencing divides by h^2 and needs the lower evaluation floor.
    """

    data: InitialData
    profile: ProfileSolution
    epsilon: float
    dense_rows: bool = True

    def _row(self, theta):
        if self.dense_rows:
            q_min = -2.0 / (3.0 * self.epsilon) - 0.5
            lo = max(q_min, float(self.profile.field.sigma_grid[0]))
            return self.profile.dense_row(theta, lo=lo)
        return self.profile.row(theta)

    def tau_of_t(self, t):
        return self.epsilon * math.sqrt(1.0 + t)

    def _check_time(self, t):
        guard = self.profile.tau0_estimate() * (1.0 - 1e-6)
        if self.tau_of_t(t) >= guard:
            raise PastBlowup(
                f"eps*sqrt(1+t)={self.tau_of_t(t):.6f} reaches the catastrophe "
                f"time ~{guard:.6f}"
            )

    def profile_part(self, t: float, points) -> np.ndarray:
        """(eps/sqrt(r)) chi(-3 eps q) V(q, omega, tau); zero where cut off."""
        eps = self.epsilon
        points = np.asarray(points, dtype=float)
        r = np.hypot(points[..., 0], points[..., 1])
        q = r - t
        cut = chi(-3.0 * eps * q)
        out = np.zeros_like(r)
        live = (cut > 0.0) & (r > 1e-12)
        if np.any(live):
            theta = np.arctan2(points[..., 1], points[..., 0]) % (2.0 * math.pi)
            v = self._v_batch(q[live], theta[live], self.tau_of_t(t))
            out[live] = (eps / np.sqrt(r[live])) * cut[live] * v
        return out

    def _v_batch(self, q, theta, tau):
        """Profile values at scattered (q, theta): periodic 4-row Lagrange."""
        fld = self.profile.field
        tg = fld.theta_grid
        n_t = len(tg)
        dtheta = tg[1] - tg[0]
        out = np.empty(len(q))
        j0 = np.floor(theta / dtheta).astype(int) % n_t
        frac = theta / dtheta - np.floor(theta / dtheta)
        # Lagrange weights on the 4 surrounding rows (offsets -1, 0, 1, 2)
        wts = np.empty((4, len(q)))
        x = frac
        wts[0] = -x * (x - 1.0) * (x - 2.0) / 6.0
        wts[1] = (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0
        wts[2] = -(x + 1.0) * x * (x - 2.0) / 2.0
        wts[3] = (x + 1.0) * x * (x - 1.0) / 6.0
        out[:] = 0.0
        for k, off in enumerate((-1, 0, 1, 2)):
            rows = (j0 + off) % n_t
            for j in np.unique(rows):
                sel = rows == j
                row = self._row(tg[j])
                q_vals, v_vals, q_spl, v_spl = row._integrals(tau)
                s = np.interp(q[sel], q_vals, row.sigma)
                slope = np.gradient(q_vals, row.sigma)
                s = s - (q_spl(s) - q[sel]) / np.maximum(
                    np.interp(s, row.sigma, slope), 1e-12)
                vals = v_spl(s)
                vals = np.where(q[sel] >= fld.support_radius, 0.0, vals)
                out[sel] += wts[k, sel] * vals
        return out

    def u_a(self, t: float, points) -> np.ndarray:
        """The glued approximation at one time over an array of points."""
        self._check_time(t)
        eps = self.epsilon
        points = np.asarray(points, dtype=float)
        chi_t = chi(eps * t)
        out = np.zeros(points.shape[:-1])
        if chi_t > 0.0:
            w0, _ = linear_wave(self.data, t, points)
            out = out + eps * chi_t * w0
        if chi_t < 1.0:
            out = out + (1.0 - chi_t) * self.profile_part(t, points)
        return out

    def residual_Ja(self, t: float, points, h_fd: float = 0.02) -> np.ndarray:
        """Equation residual of u_a by centered differences.

        Evaluates d_tt u - lap u + sum (d_ij u + sum_k e_ijk d_k u) d_ij u
        on the truncated quadratic model.  The principal second
        derivatives use the fourth-order five-point stencil: their
        truncation acts on the order-eps linear piece and would otherwise
        drown the order-eps^2 residual.  Mixed and first derivatives stay
        second order; they only enter through the small quadratic
        coefficients.
        """
        pts = np.asarray(points, dtype=float)
        h = h_fd
        e1 = np.array([h, 0.0])
        e2 = np.array([0.0, h])

        u00 = self.u_a(t, pts)
        lines = {}
        for name, shift in (("t", None), ("x", e1), ("y", e2)):
            vals = {}
            for k in (-2, -1, 1, 2):
                if shift is None:
                    vals[k] = self.u_a(t + k * h, pts)
                else:
                    vals[k] = self.u_a(t, pts + k * shift)
            lines[name] = vals

        def d1(v):
            return (v[-2] - 8 * v[-1] + 8 * v[1] - v[2]) / (12 * h)

        def d2c(v):
            return (-v[-2] + 16 * v[-1] - 30 * u00 + 16 * v[1] - v[2]) / (12 * h * h)

        du = np.stack([d1(lines["t"]), d1(lines["x"]), d1(lines["y"])])
        d2 = np.empty((3, 3) + u00.shape)
        d2[0, 0] = d2c(lines["t"])
        d2[1, 1] = d2c(lines["x"])
        d2[2, 2] = d2c(lines["y"])
        d2[0, 1] = d2[1, 0] = (
            self.u_a(t + h, pts + e1) - self.u_a(t + h, pts - e1)
            - self.u_a(t - h, pts + e1) + self.u_a(t - h, pts - e1)
        ) / (4 * h * h)
        d2[0, 2] = d2[2, 0] = (
            self.u_a(t + h, pts + e2) - self.u_a(t + h, pts - e2)
            - self.u_a(t - h, pts + e2) + self.u_a(t - h, pts - e2)
        ) / (4 * h * h)
        d2[1, 2] = d2[2, 1] = (
            self.u_a(t, pts + e1 + e2) - self.u_a(t, pts + e1 - e2)
            - self.u_a(t, pts - e1 + e2) + self.u_a(t, pts - e1 - e2)
        ) / (4 * h * h)

        coeffs = self.profile.coeffs
        res = d2[0, 0] - d2[1, 1] - d2[2, 2]
        for i in range(3):
            for j in range(3):
                gij = coeffs.d[i, j] * u00
                for k in range(3):
                    gij = gij + coeffs.e[i, j, k] * du[k]
                res = res + gij * d2[i, j]
        return res

    def residual_l2_radial(self, t: float, dr: float = 0.04, h_fd: float = 0.01,
                           r_pad: float = 1.5) -> float:
        """L2 norm over the plane of the residual, exploiting radial symmetry.

        The r-grid is confined to where the residual can live: the full
        backward cone while the linear piece is active, and only the
        outgoing annulus afterwards (the profile piece is cut off at
        q = -2/(3 eps)), with spacing dr that resolves the data features
        at any horizon.
        """
        m = self.data.support_radius
        eps = self.epsilon
        r_hi = m + t + r_pad
        if chi(eps * t) > 0.0:
            r_lo = max(h_fd * 2, 1e-3)
        else:
            r_lo = max(t - 2.0 / (3.0 * eps) - r_pad, h_fd * 2)
        n_r = max(64, int(math.ceil((r_hi - r_lo) / dr)))
        r = np.linspace(r_lo, r_hi, n_r)
        pts = np.stack([r, np.zeros_like(r)], axis=-1)
        vals = self.residual_Ja(t, pts, h_fd=h_fd)
        integrand = vals * vals * r
        return math.sqrt(2.0 * math.pi * np.trapezoid(integrand, r))
