"""Structural constants of the quadratic wave-operator model.

The operator coefficients are expanded as

    g_ij(u, grad u) = c_ij + d_ij * u + sum_k e[i,j,k] * du/dx_k,

with the principal part fixed to the d'Alembertian, c = diag(1, -1, -1)
in (t, x1, x2) ordering.  Everything downstream (radiation field,
lifespan functional, profile transport, direct simulation) is driven by
the two angular forms g1 and g2 obtained by contracting d and e with
the forward null direction (-1, cos(theta), sin(theta)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Relative tolerance used to decide whether the cubic angular form is
# identically zero (null condition) on a sample grid.
NULL_FORM_RTOL = 1e-12

C_MATRIX = np.diag([1.0, -1.0, -1.0])


class CoefficientError(ValueError):
    """Raised when a coefficient tensor violates the model constraints."""


@dataclass(frozen=True)
class CoefficientSet:
    """Constant tensors (c, d, e) of the quadratic coefficient model.

    ``d`` is 3x3 symmetric with d[0,0] = 0 and at least one nonzero
    entry.  ``e`` is 3x3x3 with e[i,j,k] multiplying du/dx_k inside
    g_ij; it is symmetrized over (i, j) at construction since it only
    ever contracts the symmetric Hessian.
    """

    d: np.ndarray
    e: np.ndarray
    c: np.ndarray = field(default_factory=lambda: C_MATRIX.copy())

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        e = np.asarray(self.e, dtype=float)
        if d.shape != (3, 3):
            raise CoefficientError(f"d must be 3x3, got {d.shape}")
        if e.shape != (3, 3, 3):
            raise CoefficientError(f"e must be 3x3x3, got {e.shape}")
        if not np.allclose(d, d.T, atol=0.0, rtol=0.0):
            raise CoefficientError("d must be exactly symmetric")
        if d[0, 0] != 0.0:
            raise CoefficientError("d[0,0] must vanish")
        if not np.any(d != 0.0):
            raise CoefficientError("d must have a nonzero entry off (0,0)")
        e = 0.5 * (e + np.swapaxes(e, 0, 1))
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "c", C_MATRIX.copy())

    @classmethod
    def from_config(cls, section: dict) -> "CoefficientSet":
        """Build from a ``[coefficients]`` config section (keys d, e)."""
        try:
            d = section["d"]
            e = section["e"]
        except KeyError as missing:
            raise CoefficientError(f"coefficients section lacks {missing}") from None
        return cls(d=np.array(d, dtype=float), e=np.array(e, dtype=float))

    @property
    def e_max(self) -> float:
        return float(np.max(np.abs(self.e)))


@dataclass(frozen=True)
class DirectionFrame:
    """Unit direction omega(theta) and the associated 3-vectors.

    omega_hat = (-1, cos, sin) is null for the d'Alembertian symbol;
    omega_tilde and omega_bar are the tangential / radial lifts used by
    the blowup-system coordinates.
    """

    theta: float

    @property
    def omega(self) -> np.ndarray:
        return np.array([np.cos(self.theta), np.sin(self.theta)])

    @property
    def omega_hat(self) -> np.ndarray:
        return np.array([-1.0, np.cos(self.theta), np.sin(self.theta)])

    @property
    def omega_tilde(self) -> np.ndarray:
        return np.array([0.0, -np.sin(self.theta), np.cos(self.theta)])

    @property
    def omega_bar(self) -> np.ndarray:
        return np.array([0.0, np.cos(self.theta), np.sin(self.theta)])


def _omega_hat(theta):
    theta = np.asarray(theta, dtype=float)
    return np.stack(
        [-np.ones_like(theta), np.cos(theta), np.sin(theta)], axis=-1
    )


def g1(coeffs: CoefficientSet, theta) -> np.ndarray | float:
    """Quadratic angular form sum_ij d_ij omega_hat_i omega_hat_j."""
    oh = _omega_hat(theta)
    out = np.einsum("...i,ij,...j->...", oh, coeffs.d, oh)
    return float(out) if np.isscalar(theta) else out


def g2(coeffs: CoefficientSet, theta) -> np.ndarray | float:
    """Cubic angular form sum_ijk e[i,j,k] omega_hat_i omega_hat_j omega_hat_k."""
    oh = _omega_hat(theta)
    out = np.einsum("...i,...j,ijk,...k->...", oh, oh, coeffs.e, oh)
    return float(out) if np.isscalar(theta) else out


def null_condition_violated(coeffs: CoefficientSet, n_theta: int = 256) -> bool:
    """True iff the cubic form g2 is not identically zero on the light cone.

    Sampled on a uniform theta grid; the tolerance is relative to the
    max-norm of e so the verdict is scale free.  The blowup theory only
    applies when this returns True.
    """
    if n_theta < 64:
        raise ValueError("n_theta must be at least 64")
    thetas = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)
    vals = g2(coeffs, thetas)
    scale = coeffs.e_max
    if scale == 0.0:
        return False
    return bool(np.max(np.abs(vals)) > NULL_FORM_RTOL * scale)
