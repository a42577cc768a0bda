"""Symmetry-adapted spectral basis on the periodic channel and its inner products.

The domain is T_{2*pi/alpha} x (0, 1) with free-slip, fixed-temperature walls.
State variables (phi, w1, w2, theta, psi) expand in trigonometric bases that
encode the symmetry class (w1 odd in x1, everything else even) and the wall
conditions:

    w1    ~ sin(alpha*j*x1) * cos(k*pi*x2),   j >= 1, k >= 0
    w2    ~ cos(alpha*j*x1) * sin(k*pi*x2),   j >= 0, k >= 1
    theta ~ cos(alpha*j*x1) * sin(k*pi*x2),   j >= 0, k >= 1
    psi   ~ cos(alpha*j*x1) * sin(k*pi*x2),   j >= 0, k >= 1
    phi   ~ cos(alpha*j*x1) * cos(k*pi*x2),   (j, k) != (0, 0)

Coefficients are raw trigonometric amplitudes; all L2 pairings carry explicit
measure factors so operator matrices stay equal to the textbook mode matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np

VARIABLES = ("phi", "w1", "w2", "theta", "psi")

# Variable -> (x1 parity, x2 parity); "c" cosine-type, "s" sine-type.
VAR_PARITY = {
    "phi": ("c", "c"),
    "w1": ("s", "c"),
    "w2": ("c", "s"),
    "theta": ("c", "s"),
    "psi": ("c", "s"),
}


class ModeIndex(NamedTuple):
    j: int
    k: int


@dataclass(frozen=True)
class Params:
    """Physical and discretization parameters.

    R1, R2 are the square roots of the thermal and salinity Rayleigh numbers;
    eps is the artificial Mach number (eps = 0 selects the incompressible
    formulation); (J, K) is the spectral truncation.
    """

    Pr: float
    d: float
    R1: float
    R2: float
    alpha: float
    eps: float = 0.0
    J: int = 12
    K: int = 12

    def __post_init__(self):
        if not (self.Pr > 0 and self.d > 0 and self.alpha > 0):
            raise ValueError("Pr, d, alpha must be strictly positive")
        if self.R1 < 0 or self.R2 < 0:
            raise ValueError("R1, R2 must be nonnegative")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.J < 1 or self.K < 1:
            raise ValueError("J, K must be >= 1")

    @property
    def paper_regime(self) -> bool:
        """Advisory predicate: Pr > 1 and 0 < d < 1 (never enforced)."""
        return self.Pr > 1.0 and 0.0 < self.d < 1.0

    @property
    def incompressible(self) -> bool:
        return self.eps == 0.0

    def with_(self, **kw) -> "Params":
        return replace(self, **kw)

    def same_truncation(self, other: "Params") -> bool:
        return self.J == other.J and self.K == other.K and self.alpha == other.alpha


@lru_cache(maxsize=None)
def admissible_masks(J: int, K: int) -> dict:
    """Boolean arrays of shape (J+1, K+1) marking admissible (j, k) per variable."""
    full = np.ones((J + 1, K + 1), dtype=bool)
    phi = full.copy()
    phi[0, 0] = False
    w1 = full.copy()
    w1[0, :] = False
    cs = full.copy()
    cs[:, 0] = False
    return {"phi": phi, "w1": w1, "w2": cs, "theta": cs.copy(), "psi": cs.copy()}


def mode_table(J: int, K: int) -> list[tuple[str, ModeIndex]]:
    """Deterministic flattening order: variable-major, then j, then k."""
    if J < 1 or K < 1:
        raise ValueError("J, K must be >= 1")
    masks = admissible_masks(J, K)
    table = []
    for var in VARIABLES:
        m = masks[var]
        for j in range(J + 1):
            for k in range(K + 1):
                if m[j, k]:
                    table.append((var, ModeIndex(j, k)))
    return table


@lru_cache(maxsize=None)
def _jk_grids(J: int, K: int):
    j = np.arange(J + 1, dtype=float)[:, None]
    k = np.arange(K + 1, dtype=float)[None, :]
    return j, k


@lru_cache(maxsize=None)
def measure_weights(J: int, K: int, alpha: float) -> dict:
    """Exact L2 measure factors int(basis^2) per variable, shape (J+1, K+1)."""
    j, k = _jk_grids(J, K)
    L = 2.0 * np.pi / alpha
    ix_cos = np.where(j == 0, L, L / 2.0)
    ix_sin = np.full_like(j, L / 2.0)
    iy_cos = np.where(k == 0, 1.0, 0.5)
    iy_sin = np.full((1, K + 1), 0.5)
    masks = admissible_masks(J, K)
    w = {
        "phi": ix_cos * iy_cos,
        "w1": ix_sin * iy_cos,
        "w2": ix_cos * iy_sin,
        "theta": ix_cos * iy_sin,
        "psi": ix_cos * iy_sin,
    }
    return {v: np.where(masks[v], w[v], 0.0) for v in VARIABLES}


@lru_cache(maxsize=None)
def laplace_symbol(J: int, K: int, alpha: float) -> np.ndarray:
    """q^2 = (alpha*j)^2 + (k*pi)^2 on the (J+1, K+1) grid."""
    j, k = _jk_grids(J, K)
    return (alpha * j) ** 2 + (np.pi * k) ** 2


class SpectralField:
    """Coefficients of (phi, w1, w2, theta, psi) on a common truncation.

    Arrays have shape (J+1, K+1); entries outside the admissible index set are
    kept identically zero. Coefficients may be real or complex.
    """

    __slots__ = ("params", "phi", "w1", "w2", "theta", "psi")

    def __init__(self, params: Params, phi=None, w1=None, w2=None, theta=None,
                 psi=None, dtype=float, enforce: bool = True):
        self.params = params
        shape = (params.J + 1, params.K + 1)
        for name, arr in zip(VARIABLES, (phi, w1, w2, theta, psi)):
            if arr is None:
                arr = np.zeros(shape, dtype=dtype)
            else:
                arr = np.asarray(arr)
                if arr.shape != shape:
                    raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
                if enforce:
                    mask = admissible_masks(params.J, params.K)[name]
                    arr = np.where(mask, arr, 0.0)
            object.__setattr__(self, name, arr)

    def __setattr__(self, name, value):
        object.__setattr__(self, name, value)

    @classmethod
    def zeros(cls, params: Params, dtype=float) -> "SpectralField":
        return cls(params, dtype=dtype)

    @classmethod
    def single_mode(cls, params: Params, var: str, j: int, k: int,
                    value=1.0) -> "SpectralField":
        f = cls.zeros(params, dtype=complex if np.iscomplexobj(np.asarray(value)) else float)
        if not admissible_masks(params.J, params.K)[var][j, k]:
            raise ValueError(f"mode ({j},{k}) not admissible for {var}")
        getattr(f, var)[j, k] = value
        return f

    def arrays(self):
        return {v: getattr(self, v) for v in VARIABLES}

    def copy(self) -> "SpectralField":
        return SpectralField(self.params, *(getattr(self, v).copy() for v in VARIABLES),
                             enforce=False)

    def conj(self) -> "SpectralField":
        return SpectralField(self.params, *(np.conj(getattr(self, v)) for v in VARIABLES),
                             enforce=False)

    @property
    def real(self) -> "SpectralField":
        return SpectralField(self.params, *(getattr(self, v).real.copy() for v in VARIABLES),
                             enforce=False)

    def _binary(self, other, op):
        if other.params is not self.params and not (
                self.params.same_truncation(other.params)):
            raise ValueError("mismatched truncations")
        return SpectralField(self.params,
                             *(op(getattr(self, v), getattr(other, v)) for v in VARIABLES),
                             enforce=False)

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        return SpectralField(self.params, *(getattr(self, v) * scalar for v in VARIABLES),
                             enforce=False)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)


def _check_pair(u: SpectralField, v: SpectralField):
    if not u.params.same_truncation(v.params):
        raise ValueError("mismatched truncations")


def component_inner(u: SpectralField, v: SpectralField, var: str):
    """L2 pairing of one component, conjugate-linear in v."""
    w = measure_weights(u.params.J, u.params.K, u.params.alpha)[var]
    return np.sum(w * getattr(u, var) * np.conj(getattr(v, var)))


def bu_inner(u: SpectralField, v: SpectralField):
    """(bu_1, bu_2) = Pr^-1 (w, w')_L2 + (theta, theta') + (psi, psi')."""
    _check_pair(u, v)
    Pr = u.params.Pr
    return (component_inner(u, v, "w1") / Pr + component_inner(u, v, "w2") / Pr
            + component_inner(u, v, "theta") + component_inner(u, v, "psi"))


def inner_eps(u: SpectralField, v: SpectralField, eps: float | None = None):
    """eps-weighted pairing: eps^2 (phi, phi') + (bu, bu')."""
    _check_pair(u, v)
    if eps is None:
        eps = u.params.eps
    return eps ** 2 * component_inner(u, v, "phi") + bu_inner(u, v)


def norm_eps(u: SpectralField, eps: float | None = None) -> float:
    return float(np.sqrt(max(inner_eps(u, u, eps).real, 0.0)))


@dataclass(frozen=True)
class NormReport:
    l2_eps: float
    x1_eps: float
    x1star: float
    x1: float


def _grad_quadratic(u: SpectralField, eps: float) -> float:
    """|||dx u|||_eps^2 (all first derivatives, eps-weighted)."""
    p = u.params
    q2 = laplace_symbol(p.J, p.K, p.alpha)
    w = measure_weights(p.J, p.K, p.alpha)
    pref = {"phi": eps ** 2, "w1": 1.0 / p.Pr, "w2": 1.0 / p.Pr, "theta": 1.0, "psi": 1.0}
    total = 0.0
    for v in VARIABLES:
        c = getattr(u, v)
        total += pref[v] * np.sum(w[v] * q2 * np.abs(c) ** 2)
    return float(total)


def norms(u: SpectralField, eps: float | None = None) -> NormReport:
    """All scalar norms used by the toolkit.

    x1star is the dual norm of the velocity/temperature/solute part: the
    measure-weighted q^-2 coefficient sum, which makes the duality inequality
    |(u1, u2)| <= ||u1||_X1 ||u2||_(X1)* exact in raw-coefficient arithmetic.
    """
    p = u.params
    if eps is None:
        eps = p.eps
    q2 = laplace_symbol(p.J, p.K, p.alpha)
    w = measure_weights(p.J, p.K, p.alpha)
    safe_q2 = np.where(q2 > 0, q2, 1.0)

    l2_sq = inner_eps(u, u, eps).real
    x1_eps = np.sqrt(max(l2_sq, 0.0) + eps ** 2 * _grad_quadratic(u, eps))

    bu_vars = ("w1", "w2", "theta", "psi")
    pref = {"w1": 1.0 / p.Pr, "w2": 1.0 / p.Pr, "theta": 1.0, "psi": 1.0}
    star_sq = 0.0
    grad_sq = 0.0
    for v in bu_vars:
        c = np.abs(getattr(u, v)) ** 2
        star_sq += pref[v] * np.sum(w[v] * c / safe_q2)
        grad_sq += pref[v] * np.sum(w[v] * c * q2)
    return NormReport(
        l2_eps=float(np.sqrt(max(l2_sq, 0.0))),
        x1_eps=float(x1_eps),
        x1star=float(np.sqrt(star_sq)),
        x1=float(np.sqrt(grad_sq)),
    )


def divergence(u: SpectralField) -> np.ndarray:
    """div w in the cos*cos basis: (div)_jk = alpha*j*w1_jk + k*pi*w2_jk."""
    p = u.params
    j, k = _jk_grids(p.J, p.K)
    return p.alpha * j * u.w1 + np.pi * k * u.w2


def gradient_of_scalar(params: Params, phi: np.ndarray):
    """Coefficients of grad(phi) for phi in the cos*cos basis.

    Returns (g1, g2) in the (w1, w2) bases: g1_jk = -alpha*j*phi_jk,
    g2_jk = -k*pi*phi_jk.
    """
    j, k = _jk_grids(params.J, params.K)
    return -params.alpha * j * phi, -np.pi * k * phi


def helmholtz_project(u: SpectralField) -> SpectralField:
    """Leray projection of the velocity part; phi, theta, psi untouched.

    Per mode this is the Euclidean projection of (w1, w2) onto the line
    alpha*j*x + k*pi*y = 0 (the two basis functions carry equal measure at
    interior modes); (j,0) and (0,k) velocity modes are pure gradients and
    are annihilated.
    """
    p = u.params
    j, k = _jk_grids(p.J, p.K)
    q2 = laplace_symbol(p.J, p.K, p.alpha)
    safe_q2 = np.where(q2 > 0, q2, 1.0)
    g = divergence(u) / safe_q2
    out = u.copy()
    out.w1 = u.w1 - g * (p.alpha * j)
    out.w2 = u.w2 - g * (np.pi * k)
    masks = admissible_masks(p.J, p.K)
    out.w1 = np.where(masks["w1"], out.w1, 0.0)
    out.w2 = np.where(masks["w2"], out.w2, 0.0)
    return out


SERIAL_TINY = 1e-300


def field_to_json(u: SpectralField) -> dict:
    """Flat JSON form {params, variable -> [[j, k, value], ...]}.

    Complex coefficients serialize as [re, im] pairs; entries with magnitude
    below 1e-300 are omitted.
    """
    p = u.params
    out = {"params": {"Pr": p.Pr, "d": p.d, "R1": p.R1, "R2": p.R2,
                      "alpha": p.alpha, "eps": p.eps, "J": p.J, "K": p.K}}
    for v in VARIABLES:
        arr = getattr(u, v)
        entries = []
        for (j, k) in zip(*np.nonzero(np.abs(arr) >= SERIAL_TINY)):
            val = arr[j, k]
            if np.iscomplexobj(arr):
                entries.append([int(j), int(k), [float(val.real), float(val.imag)]])
            else:
                entries.append([int(j), int(k), float(val)])
        out[v] = entries
    return out


def field_from_json(d: dict) -> SpectralField:
    p = Params(**d["params"])
    iscomplex = any(isinstance(e[2], list) for v in VARIABLES for e in d.get(v, []))
    f = SpectralField.zeros(p, dtype=complex if iscomplex else float)
    for v in VARIABLES:
        arr = getattr(f, v)
        for e in d.get(v, []):
            j, k, val = e
            arr[j, k] = complex(val[0], val[1]) if isinstance(val, list) else val
    return f
