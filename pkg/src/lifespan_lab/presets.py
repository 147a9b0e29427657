"""Built-in experiment presets.

Three data/coefficient families with qualitatively different lifespan
structure, used by the test suite and available to the CLI via
``--preset``:

* ``radial``       rotationally symmetric data and operator: the blowup
                   constant exists but the minimizer is a whole ring, so
                   the nondegeneracy condition fails by symmetry; the
                   direct radial solver applies.
* ``anisotropic``  tilted elliptical bump with an odd-in-x1 polynomial
                   factor (zero mean, so the radiation field decays fast
                   inside the default window) and generic coefficients:
                   unique interior minimizer with positive definite
                   Hessian.
* ``two_bump``     sum of two offset bumps, same coefficient family.

The velocity component phi1 carries the data (phi0 = 0): the radiation
field is then one derivative smoother, which keeps its second and third
sigma-derivatives wide enough to resolve on default grids.
"""

import copy

_D_GENERIC = [[0.0, 0.06, -0.03], [0.06, 0.22, 0.03], [-0.03, 0.03, 0.1]]


def _e_tensor(entries):
    e = [[[0.0] * 3 for _ in range(3)] for _ in range(3)]
    for (i, j, k), v in entries.items():
        e[i][j][k] = v
        e[j][i][k] = v
    return e

_E_GENERIC = _e_tensor({(0, 0, 0): 0.9, (1, 1, 1): 0.5, (2, 2, 2): -0.35})
_E_RADIAL = _e_tensor({(0, 0, 0): 1.5})
_D_RADIAL = [[0.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.5]]

PRESETS = {
    "radial": {
        "coefficients": {"d": _D_RADIAL, "e": _E_RADIAL},
        "initial_data": {
            "support_radius": 1.0,
            "phi0": {"family": "radial_bump", "amplitude": 0.3, "center": [0.0, 0.0],
                     "radius": 1.0},
            "phi1": {"family": "zero", "support_radius": 1.0},
        },
        "grids": {"n_sigma": 384, "n_theta": 256, "sigma_min": -8.0},
        "solver": {"mode": "radial", "eps_list": [0.4, 0.28, 0.2, 0.14],
                   "resolution": 512, "courant": 0.4},
    },
    "anisotropic": {
        "coefficients": {"d": _D_GENERIC, "e": _E_GENERIC},
        "initial_data": {
            "support_radius": 1.0,
            "phi0": {"family": "zero", "support_radius": 1.0},
            "phi1": {"family": "bump_poly", "amplitude": 1.2, "center": [0.15, -0.1],
                     "axes": [0.72, 0.48], "tilt": 0.6,
                     "poly": {"1,0": 1.0, "1,1": 0.8}},
        },
        "grids": {"n_sigma": 384, "n_theta": 256, "sigma_min": -8.0},
        "solver": {"mode": "cartesian2d", "eps_list": [0.2], "resolution": 2048,
                   "courant": 0.4},
    },
    "two_bump": {
        "coefficients": {"d": _D_GENERIC, "e": _E_GENERIC},
        "initial_data": {
            "support_radius": 1.0,
            "phi0": {"family": "zero", "support_radius": 1.0},
            "phi1": {"family": "sum", "components": [
                {"family": "bump_poly", "amplitude": 1.0, "center": [0.38, 0.1],
                 "axes": [0.55, 0.55], "poly": {"1,0": 1.0}},
                {"family": "bump_poly", "amplitude": 0.8, "center": [-0.33, -0.18],
                 "axes": [0.5, 0.5], "poly": {"1,0": 1.0}},
            ]},
        },
        "grids": {"n_sigma": 384, "n_theta": 256, "sigma_min": -8.0},
        "solver": {"mode": "cartesian2d", "eps_list": [0.2], "resolution": 2048,
                   "courant": 0.4},
    },
}


def preset_config(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])
