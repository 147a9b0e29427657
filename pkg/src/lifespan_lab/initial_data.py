"""Smooth compactly supported initial data and their Radon transforms.

Data fields are closed-form bump expressions, not sampled grids: the
radiation-field module needs directional derivatives of the data up to
fourth order under the Radon integral, and differencing sampled values
would amplify noise there.  Every family reduces along a straight line
x0 + t*omega to

    A * f(q(t)) * p(t),      q(t) = qa*t^2 + qb*t + qc,

with f(z) = exp(1/(z-1)) for z < 1 (the standard bump profile), q a
quadratic and p a polynomial.  Derivatives of f(q(t)) at t = 0 follow
from the two-term Faa di Bruno formula, so directional derivatives of
any order are exact.

The Radon transform R(s, omega; v) is the line integral of v over
{x . omega = s}, computed by composite Gauss-Legendre quadrature along
the chord; its s-derivatives use the exact identity

    d/ds R(s, omega; v) = R(s, omega; (omega . grad) v),

never finite differencing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_legendre

_EDGE = 1e-7          # z above 1 - _EDGE counts as outside the bump support
_MAX_DERIV = 6


def _bump_poly_table(n_max: int = _MAX_DERIV):
    """Coefficient arrays P_n with d^n/dz^n exp(1/(z-1)) = P_n(w) e^w, w = 1/(z-1).

    Recurrence P_{n+1} = -w^2 (P_n + P_n'), starting from P_0 = 1.
    """
    polys = [np.array([1.0])]
    for _ in range(n_max):
        p = polys[-1]
        dp = p[1:] * np.arange(1, len(p))
        s = p.copy()
        s[: len(dp)] += dp
        nxt = np.zeros(len(p) + 2)
        nxt[2:] = -s
        polys.append(nxt)
    return polys

_BUMP_POLYS = _bump_poly_table()


def _profile_derivs(z, max_order):
    """exp(1/(z-1)) and its z-derivatives up to max_order, vectorized.

    Returns array of shape (max_order+1,) + z.shape; zero where z is at
    or beyond the support edge.
    """
    z = np.asarray(z, dtype=float)
    inside = z < 1.0 - _EDGE
    w = np.where(inside, 1.0 / (z - 1.0), -1.0)
    ew = np.where(inside, np.exp(w), 0.0)
    out = np.empty((max_order + 1,) + z.shape)
    for n in range(max_order + 1):
        out[n] = np.polynomial.polynomial.polyval(w, _BUMP_POLYS[n]) * ew
    return out


@lru_cache(maxsize=64)
def _faa_weights(order):
    """(m1, m2, weight) triples in g^(n) = sum w * f^(m1+m2) * qb^m1 * (2 qa)^m2."""
    rows = []
    for m2 in range(order // 2 + 1):
        m1 = order - 2 * m2
        w = math.factorial(order) / (
            math.factorial(m1) * math.factorial(m2) * 2.0**m2
        )
        rows.append((m1, m2, w))
    return tuple(rows)


def _compose_line_derivs(fder, qa, qb, max_order):
    """Derivatives of f(q(t)) at t = 0 from the z-derivatives of f at q(0)."""
    out = np.empty_like(fder[: max_order + 1])
    qa2 = 2.0 * qa
    for n in range(max_order + 1):
        acc = 0.0
        for m1, m2, w in _faa_weights(n):
            term = w * fder[m1 + m2]
            if m1:
                term = term * qb**m1
            if m2:
                term = term * qa2**m2
            acc = acc + term
        out[n] = acc
    return out


class Field:
    """Base class: a smooth scalar field with exact directional derivatives."""

    support_radius: float = 0.0

    def line_derivs(self, points, omega, max_order):
        """Array (max_order+1, ...) of (omega . grad)^n at the points."""
        raise NotImplementedError

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        return self.line_derivs(points, np.array([1.0, 0.0]), 0)[0]

    def directional_derivative(self, points, omega, order):
        return self.line_derivs(points, omega, order)[order]

    def gradient(self, points):
        e1 = np.array([1.0, 0.0])
        e2 = np.array([0.0, 1.0])
        gx = self.line_derivs(points, e1, 1)[1]
        gy = self.line_derivs(points, e2, 1)[1]
        return np.stack([gx, gy], axis=-1)

    def hessian(self, points):
        """2x2 Hessian via second directional derivatives (polarization)."""
        e1 = np.array([1.0, 0.0])
        e2 = np.array([0.0, 1.0])
        dp = np.array([1.0, 1.0]) / np.sqrt(2.0)
        dm = np.array([1.0, -1.0]) / np.sqrt(2.0)
        h11 = self.line_derivs(points, e1, 2)[2]
        h22 = self.line_derivs(points, e2, 2)[2]
        h12 = 0.5 * (self.line_derivs(points, dp, 2)[2] - self.line_derivs(points, dm, 2)[2])
        out = np.empty(h11.shape + (2, 2))
        out[..., 0, 0] = h11
        out[..., 0, 1] = h12
        out[..., 1, 0] = h12
        out[..., 1, 1] = h22
        return out

    def laplacian(self, points):
        e1 = np.array([1.0, 0.0])
        e2 = np.array([0.0, 1.0])
        return self.line_derivs(points, e1, 2)[2] + self.line_derivs(points, e2, 2)[2]


class ZeroField(Field):
    def __init__(self, support_radius=1.0):
        self.support_radius = float(support_radius)

    def line_derivs(self, points, omega, max_order):
        points = np.asarray(points, dtype=float)
        return np.zeros((max_order + 1,) + points.shape[:-1])


class QuadraticBump(Field):
    """amplitude * exp(1/(z-1)) * poly(x - center) with z = (x-c)^T Q (x-c).

    Q is the inverse-squared-axes quadratic form, so the support is the
    ellipse {z < 1}.  ``poly`` maps (i, j) exponents of the centered
    coordinates to coefficients; an empty dict means the bare bump.
    """

    def __init__(self, amplitude=1.0, center=(0.0, 0.0), axes=(1.0, 1.0),
                 tilt=0.0, poly=None):
        self.amplitude = float(amplitude)
        self.center = np.asarray(center, dtype=float)
        self.axes = (float(axes[0]), float(axes[1]))
        self.tilt = float(tilt)
        ct, st = np.cos(self.tilt), np.sin(self.tilt)
        rot = np.array([[ct, -st], [st, ct]])
        self.Q = rot @ np.diag([1.0 / self.axes[0] ** 2, 1.0 / self.axes[1] ** 2]) @ rot.T
        self.poly = {tuple(k): float(v) for k, v in (poly or {}).items()}
        self.support_radius = float(np.linalg.norm(self.center) + max(self.axes))
        self._poly_deg = max((i + j for (i, j) in self.poly), default=0)

    def _poly_line_coeffs(self, y, omega):
        """t-polynomial coefficients of poly(y + t*omega), vectorized over points."""
        deg = self._poly_deg
        shape = y.shape[:-1]
        coeffs = np.zeros((deg + 1,) + shape)
        if not self.poly:
            coeffs[0] = 1.0
            return coeffs
        y1, y2 = y[..., 0], y[..., 1]
        w1, w2 = omega[..., 0], omega[..., 1]
        for (i, j), c in self.poly.items():
            # (y1 + t w1)^i (y2 + t w2)^j expanded in t
            for a in range(i + 1):
                ca = math.comb(i, a) * y1 ** (i - a) * w1**a
                for b in range(j + 1):
                    cb = math.comb(j, b) * y2 ** (j - b) * w2**b
                    coeffs[a + b] += c * ca * cb
        return coeffs

    def line_derivs(self, points, omega, max_order):
        points = np.asarray(points, dtype=float)
        omega = np.broadcast_to(np.asarray(omega, dtype=float), points.shape)
        y = points - self.center
        qc = np.einsum("...i,ij,...j->...", y, self.Q, y)
        qb = 2.0 * np.einsum("...i,ij,...j->...", y, self.Q, omega)
        qa = np.einsum("...i,ij,...j->...", omega, self.Q, omega)
        fder = _profile_derivs(qc, max_order)
        bump = _compose_line_derivs(fder, qa, qb, max_order)
        if not self.poly:
            return self.amplitude * bump
        pc = self._poly_line_coeffs(y, omega)
        out = np.zeros_like(bump)
        for n in range(max_order + 1):
            acc = np.zeros(points.shape[:-1])
            for k in range(n + 1):
                m = n - k
                if m < len(pc):
                    acc += math.comb(n, k) * bump[k] * pc[m] * math.factorial(m)
            out[n] = acc
        return self.amplitude * out


def radial_bump(amplitude=1.0, center=(0.0, 0.0), radius=1.0):
    return QuadraticBump(amplitude, center, axes=(radius, radius))


class SumField(Field):
    def __init__(self, parts):
        self.parts = list(parts)
        self.support_radius = max((p.support_radius for p in self.parts), default=0.0)

    def line_derivs(self, points, omega, max_order):
        points = np.asarray(points, dtype=float)
        out = np.zeros((max_order + 1,) + points.shape[:-1])
        for p in self.parts:
            out += p.line_derivs(points, omega, max_order)
        return out


def field_from_config(section: dict) -> Field:
    family = section.get("family", "zero")
    if family == "zero":
        return ZeroField(section.get("support_radius", 1.0))
    if family == "sum":
        return SumField(field_from_config(c) for c in section["components"])
    amplitude = section.get("amplitude", 1.0)
    center = section.get("center", (0.0, 0.0))
    if family == "radial_bump":
        return radial_bump(amplitude, center, section.get("radius", 1.0))
    if family == "anisotropic_bump":
        return QuadraticBump(amplitude, center, axes=section.get("axes", (1.0, 0.5)),
                             tilt=section.get("tilt", 0.0))
    if family == "bump_poly":
        poly = {tuple(int(x) for x in k.split(",")): v
                for k, v in section.get("poly", {}).items()}
        return QuadraticBump(amplitude, center, axes=section.get("axes", (1.0, 1.0)),
                             tilt=section.get("tilt", 0.0), poly=poly)
    raise ValueError(f"unknown field family {family!r}")


@dataclass
class InitialData:
    """The data pair (phi0, phi1), both supported in the disk of radius M."""

    phi0: Field
    phi1: Field
    support_radius: float

    def __post_init__(self):
        m = max(self.phi0.support_radius, self.phi1.support_radius)
        if self.support_radius < m - 1e-12:
            raise ValueError(
                f"support_radius {self.support_radius} smaller than field support {m}"
            )

    @property
    def is_zero(self) -> bool:
        return isinstance(self.phi0, ZeroField) and isinstance(self.phi1, ZeroField)

    @classmethod
    def from_config(cls, section: dict) -> "InitialData":
        m = section.get("support_radius")
        if "phi0" in section or "phi1" in section:
            phi0 = field_from_config(section.get("phi0", {"family": "zero"}))
            phi1 = field_from_config(section.get("phi1", {"family": "zero"}))
        else:
            phi0 = field_from_config(section)
            phi1 = ZeroField(phi0.support_radius)
        if m is None:
            m = max(phi0.support_radius, phi1.support_radius)
        return cls(phi0=phi0, phi1=phi1, support_radius=float(m))


# ---------------------------------------------------------------------------
# Radon transform machinery
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _gl_nodes(n):
    x, w = roots_legendre(n)
    return x, w


def _chord_nodes(s, theta, radius, n_quad):
    """Quadrature nodes/weights along {x . omega = s} inside the support disk."""
    half = math.sqrt(max(radius * radius - s * s, 0.0))
    half += 1e-9 * radius
    n_panels = max(1, int(math.ceil(4.0 * half / radius)))
    per = max(4, int(math.ceil(n_quad / n_panels)))
    x, w = _gl_nodes(per)
    edges = np.linspace(-half, half, n_panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    hw = 0.5 * (edges[1:] - edges[:-1])
    p = (mid[:, None] + hw[:, None] * x[None, :]).ravel()
    pw = (hw[:, None] * w[None, :]).ravel()
    omega = np.array([math.cos(theta), math.sin(theta)])
    perp = np.array([-omega[1], omega[0]])
    pts = s * omega[None, :] + p[:, None] * perp[None, :]
    return pts, pw, omega


def radon(v: Field, s: float, theta: float, n_quad: int = 256) -> float:
    """Line integral of v over {x . omega(theta) = s}."""
    if abs(s) >= v.support_radius:
        return 0.0
    pts, pw, _ = _chord_nodes(s, theta, v.support_radius, n_quad)
    return float(np.dot(v(pts), pw))


def radon_derivative(v: Field, order: int, s: float, theta: float,
                     n_quad: int = 256) -> float:
    """Exact s-derivative of the Radon transform: R(s, omega; (omega.grad)^order v)."""
    if order < 1:
        raise ValueError("order must be a positive integer")
    if abs(s) >= v.support_radius:
        return 0.0
    pts, pw, omega = _chord_nodes(s, theta, v.support_radius, n_quad)
    vals = v.directional_derivative(pts, omega, order)
    return float(np.dot(vals, pw))


def radon_profile(v: Field, s_values, theta: float, orders, n_quad: int = 256,
                  n_panels: int = 4):
    """R(s, omega; (omega.grad)^k v) for every s in s_values and k in orders.

    All chords are batched into a single field evaluation, sharing the
    expensive bump intermediates across derivative orders; this is the
    primitive behind the radiation-field tabulation.
    """
    s_values = np.asarray(s_values, dtype=float)
    orders = list(orders)
    out = np.zeros((len(orders), len(s_values)))
    radius = v.support_radius
    inside = np.abs(s_values) < radius
    if not np.any(inside) or isinstance(v, ZeroField):
        return out
    max_order = max(orders)
    omega = np.array([math.cos(theta), math.sin(theta)])
    perp = np.array([-omega[1], omega[0]])
    per = max(8, int(math.ceil(n_quad / n_panels)))
    x, w = _gl_nodes(per)
    s_in = s_values[inside]
    half = np.sqrt(np.maximum(radius * radius - s_in * s_in, 0.0)) + 1e-9 * radius
    # panel grid per chord: edges (n_s, n_panels+1) -> nodes (n_s, n_panels*per)
    frac = np.linspace(-1.0, 1.0, n_panels + 1)
    edges = half[:, None] * frac[None, :]
    mid = 0.5 * (edges[:, 1:] + edges[:, :-1])
    hw = 0.5 * (edges[:, 1:] - edges[:, :-1])
    p = (mid[..., None] + hw[..., None] * x).reshape(len(s_in), -1)
    pw = (hw[..., None] * w).reshape(len(s_in), -1)
    pts = (s_in[:, None, None] * omega[None, None, :]
           + p[..., None] * perp[None, None, :])
    ders = v.line_derivs(pts, omega, max_order)
    for j, k in enumerate(orders):
        out[j, inside] = np.sum(ders[k] * pw, axis=-1)
    return out


def disk_integral(v: Field, n_r: int = 128, n_ang: int = 256) -> float:
    """Area integral of v over its support disk (polar tensor quadrature)."""
    radius = v.support_radius
    xr, wr = _gl_nodes(n_r)
    r = 0.5 * radius * (xr + 1.0)
    wr = 0.5 * radius * wr
    ang = np.linspace(0.0, 2.0 * np.pi, n_ang, endpoint=False)
    pts = np.empty((n_r, n_ang, 2))
    pts[..., 0] = r[:, None] * np.cos(ang)[None, :]
    pts[..., 1] = r[:, None] * np.sin(ang)[None, :]
    vals = v(pts)
    return float(np.sum(vals * r[:, None] * wr[:, None]) * (2.0 * np.pi / n_ang))


def mass_identity_check(v: Field, n_theta: int = 8, n_quad: int = 256) -> float:
    """Quadrature health metric: max_theta | int R(s) ds  -  float integral of v |."""
    area = disk_integral(v)
    radius = v.support_radius
    xs, ws = _gl_nodes(n_quad)
    s_nodes = radius * xs
    s_w = radius * ws
    worst = 0.0
    for theta in np.linspace(0.0, np.pi, n_theta, endpoint=False):
        row = radon_profile(v, s_nodes, theta, [0], n_quad=n_quad)[0]
        worst = max(worst, abs(float(np.dot(row, s_w)) - area))
    return worst


@dataclass
class RadonSamples:
    """Tabulated R(s, omega; v) on a rectangular (s, theta) grid."""

    s_grid: np.ndarray
    theta_grid: np.ndarray
    values: np.ndarray

    @classmethod
    def build(cls, v: Field, s_grid, theta_grid, n_quad: int = 256):
        s_grid = np.asarray(s_grid, dtype=float)
        theta_grid = np.asarray(theta_grid, dtype=float)
        vals = np.empty((len(s_grid), len(theta_grid)))
        for j, th in enumerate(theta_grid):
            vals[:, j] = radon_profile(v, s_grid, th, [0], n_quad=n_quad)[0]
        return cls(s_grid=s_grid, theta_grid=theta_grid, values=vals)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("theta,s,value\n")
            for j, th in enumerate(self.theta_grid):
                for i, s in enumerate(self.s_grid):
                    fh.write(f"{th:.17g},{s:.17g},{self.values[i, j]:.17g}\n")
