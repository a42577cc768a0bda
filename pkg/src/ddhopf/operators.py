"""Assembly of the linearized operators and nonlinearity evaluation.

Conventions: the evolution problems read  d/dt u + L u + N(u) = 0, so
"stability" means the spectrum of -L lies in the left half plane. All
operators are block diagonal over spatial modes (j, k); assembled matrices
use the `mode_table` ordering. The incompressible operator acts on reduced
coordinates (one solenoidal velocity amplitude per interior mode, plus
theta/psi), obtained by eliminating the divergence constraint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .basis import (Params, ModeIndex, SpectralField, VARIABLES,
                    admissible_masks, mode_table, measure_weights,
                    laplace_symbol, divergence, _jk_grids)
from .transforms import nonlinear_N, bilinear_M  # re-exported

__all__ = [
    "LinearOperator", "assemble_L", "assemble_L_adjoint", "assemble_L_incomp",
    "apply_K", "nonlinear_N", "bilinear_M", "apply_L_direct",
    "field_to_vec", "vec_to_field", "FullIndex", "ReducedIndex",
    "weight_vector", "export_matrix_market",
]


# --------------------------------------------------------------------------
# Index maps

def _build_var_maps(table) -> dict:
    """var -> (vector positions, j indices, k indices) as integer arrays."""
    out = {}
    for var in dict.fromkeys(v for v, _ in table):
        entries = [(i, mi.j, mi.k) for i, (v, mi) in enumerate(table) if v == var]
        pos, js, ks = (np.array(x, dtype=np.intp) for x in zip(*entries))
        out[var] = (pos, js, ks)
    return out


class FullIndex:
    """mode_table ordering of the full (phi, w1, w2, theta, psi) state."""

    def __init__(self, J: int, K: int):
        self.J, self.K = J, K
        self.table = mode_table(J, K)
        self.dim = len(self.table)
        self._pos = {entry: i for i, entry in enumerate(self.table)}
        # modes owning at least one variable (phi admits all but (0,0))
        self.modes = sorted({mi for _, mi in self.table})
        self.var_maps = _build_var_maps(self.table)

    def pos(self, var: str, j: int, k: int) -> int:
        return self._pos[(var, ModeIndex(j, k))]

    def has(self, var: str, j: int, k: int) -> bool:
        return (var, ModeIndex(j, k)) in self._pos

    def mode_positions(self, mode: ModeIndex) -> list[int]:
        """Global indices of every variable living on one (j, k) mode."""
        return [self._pos[(v, mode)] for v in VARIABLES if (v, mode) in self._pos]


class ReducedIndex:
    """Solenoidal-reduced ordering: v at interior modes, then theta, psi.

    v(j, k) is the w2 coefficient of the divergence-free velocity mode
    (w1 = -k*pi/(alpha*j) * v). Modes (j, 0) and (0, k) carry no solenoidal
    velocity; theta/psi exist for j >= 0, k >= 1.
    """

    def __init__(self, J: int, K: int):
        self.J, self.K = J, K
        self.table: list[tuple[str, ModeIndex]] = []
        for j in range(1, J + 1):
            for k in range(1, K + 1):
                self.table.append(("v", ModeIndex(j, k)))
        for var in ("theta", "psi"):
            for j in range(J + 1):
                for k in range(1, K + 1):
                    self.table.append((var, ModeIndex(j, k)))
        self.dim = len(self.table)
        self._pos = {entry: i for i, entry in enumerate(self.table)}
        self.modes = sorted({mi for _, mi in self.table})
        self.var_maps = _build_var_maps(self.table)

    def pos(self, var: str, j: int, k: int) -> int:
        return self._pos[(var, ModeIndex(j, k))]

    def has(self, var: str, j: int, k: int) -> bool:
        return (var, ModeIndex(j, k)) in self._pos

    def mode_positions(self, mode: ModeIndex) -> list[int]:
        out = []
        for v in ("v", "theta", "psi"):
            if (v, mode) in self._pos:
                out.append(self._pos[(v, mode)])
        return out


@lru_cache(maxsize=None)
def _full_index(J: int, K: int) -> FullIndex:
    return FullIndex(J, K)


@lru_cache(maxsize=None)
def _reduced_index(J: int, K: int) -> ReducedIndex:
    return ReducedIndex(J, K)


def full_index(params: Params) -> FullIndex:
    return _full_index(params.J, params.K)


def reduced_index(params: Params) -> ReducedIndex:
    return _reduced_index(params.J, params.K)


def field_to_vec(u: SpectralField, idx: FullIndex | None = None) -> np.ndarray:
    idx = idx or full_index(u.params)
    out = np.empty(idx.dim, dtype=np.result_type(*(getattr(u, v).dtype for v in VARIABLES)))
    for i, (var, (j, k)) in enumerate(idx.table):
        out[i] = getattr(u, var)[j, k]
    return out


def vec_to_field(vec: np.ndarray, params: Params, idx: FullIndex | None = None) -> SpectralField:
    idx = idx or full_index(params)
    f = SpectralField.zeros(params, dtype=vec.dtype)
    for i, (var, (j, k)) in enumerate(idx.table):
        getattr(f, var)[j, k] = vec[i]
    return f


# --------------------------------------------------------------------------
# Linear operators

@dataclass(frozen=True)
class LinearOperator:
    """Dense matrix over a mode-table ordering, plus its per-mode blocks."""

    matrix: np.ndarray
    params: Params
    eps: float
    kind: str
    index: object = field(repr=False)
    blocks: dict = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def mode_block(self, mode: ModeIndex) -> np.ndarray:
        rows = self.index.mode_positions(mode)
        return self.matrix[np.ix_(rows, rows)]


def _full_block(params: Params, j: int, k: int, adjoint: bool) -> tuple[list, np.ndarray]:
    """Variables and L-block on one mode of the compressible operator."""
    Pr, d, R1, R2, eps = params.Pr, params.d, params.R1, params.R2, params.eps
    aj, kp = params.alpha * j, np.pi * k
    q2 = aj ** 2 + kp ** 2
    masks = admissible_masks(params.J, params.K)
    vs = [v for v in VARIABLES if masks[v][j, k]]
    n = len(vs)
    B = np.zeros((n, n))
    at = {v: i for i, v in enumerate(vs)}
    sg = -1.0 if adjoint else 1.0          # div/grad rows flip sign in L*
    if "phi" in at:
        if "w1" in at:
            B[at["phi"], at["w1"]] = sg * aj / eps ** 2
            B[at["w1"], at["phi"]] = -sg * Pr * aj
        if "w2" in at:
            B[at["phi"], at["w2"]] = sg * kp / eps ** 2
            B[at["w2"], at["phi"]] = -sg * Pr * kp
    if "w1" in at:
        B[at["w1"], at["w1"]] = Pr * q2
    if "w2" in at:
        B[at["w2"], at["w2"]] = Pr * q2
        B[at["w2"], at["theta"]] = -Pr * R1
        B[at["w2"], at["psi"]] = (-1.0 if adjoint else 1.0) * Pr * R2
        B[at["theta"], at["w2"]] = -R1
        B[at["psi"], at["w2"]] = (1.0 if adjoint else -1.0) * R2
    if "theta" in at:
        B[at["theta"], at["theta"]] = q2
        B[at["psi"], at["psi"]] = d * q2
    return vs, B


def _assemble_full(params: Params, adjoint: bool) -> LinearOperator:
    if params.eps <= 0:
        raise ValueError("eps must be positive; use assemble_L_incomp for eps = 0")
    idx = full_index(params)
    A = np.zeros((idx.dim, idx.dim))
    blocks = {}
    for mode in idx.modes:
        vs, B = _full_block(params, mode.j, mode.k, adjoint)
        rows = [idx.pos(v, mode.j, mode.k) for v in vs]
        A[np.ix_(rows, rows)] = B
        blocks[mode] = (np.array(rows), B)
    kind = "L_eps_adjoint" if adjoint else "L_eps"
    return LinearOperator(A, params, params.eps, kind, idx, blocks)


def assemble_L(params: Params) -> LinearOperator:
    """Linearized operator L^eps of the artificial compressible system."""
    return _assemble_full(params, adjoint=False)


def assemble_L_adjoint(params: Params) -> LinearOperator:
    """Adjoint of L^eps in the eps-weighted inner product."""
    return _assemble_full(params, adjoint=True)


def _reduced_block(params: Params, j: int, k: int, adjoint: bool) -> tuple[list, np.ndarray]:
    Pr, d, R1, R2 = params.Pr, params.d, params.R1, params.R2
    q2 = (params.alpha * j) ** 2 + (np.pi * k) ** 2
    s = (params.alpha * j) ** 2 / q2
    if j >= 1 and k >= 1:
        vs = ["v", "theta", "psi"]
        B = np.array([
            [Pr * q2, -Pr * R1 * s, (-1.0 if adjoint else 1.0) * Pr * R2 * s],
            [-R1, q2, 0.0],
            [(1.0 if adjoint else -1.0) * R2, 0.0, d * q2]])
    else:  # j = 0: no solenoidal velocity, buoyancy projection factor s = 0
        vs = ["theta", "psi"]
        B = np.diag([q2, d * q2])
    return vs, B


def _assemble_reduced(params: Params, adjoint: bool) -> LinearOperator:
    idx = reduced_index(params)
    A = np.zeros((idx.dim, idx.dim))
    blocks = {}
    for mode in idx.modes:
        vs, B = _reduced_block(params, mode.j, mode.k, adjoint)
        rows = [idx.pos(v, mode.j, mode.k) for v in vs]
        A[np.ix_(rows, rows)] = B
        blocks[mode] = (np.array(rows), B)
    kind = "L_incompressible_adjoint" if adjoint else "L_incompressible"
    return LinearOperator(A, params, 0.0, kind, idx, blocks)


def assemble_L_incomp(params: Params, adjoint: bool = False) -> LinearOperator:
    """Incompressible operator on solenoidal-reduced coordinates."""
    return _assemble_reduced(params, adjoint)


# --------------------------------------------------------------------------
# Weighted inner products on coefficient vectors

def weight_vector(params: Params, idx, eps: float | None = None) -> np.ndarray:
    """Diagonal of the (eps-weighted) inner product in vector coordinates."""
    if eps is None:
        eps = params.eps
    w = measure_weights(params.J, params.K, params.alpha)
    q2 = laplace_symbol(params.J, params.K, params.alpha)
    Pr = params.Pr
    out = np.empty(idx.dim)
    for i, (var, (j, k)) in enumerate(idx.table):
        if var == "phi":
            out[i] = eps ** 2 * w["phi"][j, k]
        elif var in ("w1", "w2"):
            out[i] = w[var][j, k] / Pr
        elif var == "v":
            s = (params.alpha * j) ** 2 / q2[j, k]
            out[i] = w["w2"][j, k] / (Pr * s)
        else:
            out[i] = w[var][j, k]
    return out


def vec_inner(x: np.ndarray, y: np.ndarray, W: np.ndarray):
    """Weighted pairing, conjugate-linear in y."""
    return np.sum(W * x * np.conj(y))


# --------------------------------------------------------------------------
# Coupling operator K and the reduced embedding

def apply_K(u: SpectralField) -> SpectralField:
    """K u: output w2 = -Pr * theta, output theta = -w2, all else zero."""
    p = u.params
    out = SpectralField.zeros(p, dtype=np.result_type(u.w2, u.theta))
    masks = admissible_masks(p.J, p.K)
    out.w2 = np.where(masks["w2"], -p.Pr * u.theta, 0.0)
    out.theta = np.where(masks["theta"], -u.w2, 0.0)
    return out


def K_matrix(params: Params, idx) -> np.ndarray:
    """Matrix of K in full coordinates, or of the projected K in reduced ones."""
    A = np.zeros((idx.dim, idx.dim))
    q2 = laplace_symbol(params.J, params.K, params.alpha)
    for i, (var, (j, k)) in enumerate(idx.table):
        if var == "w2":
            A[i, idx.pos("theta", j, k)] = -params.Pr
        elif var == "v":
            s = (params.alpha * j) ** 2 / q2[j, k]
            A[i, idx.pos("theta", j, k)] = -params.Pr * s
        elif var == "theta":
            if idx.has("w2", j, k):
                A[i, idx.pos("w2", j, k)] = -1.0
            elif idx.has("v", j, k):
                A[i, idx.pos("v", j, k)] = -1.0
    return A


def reduced_to_field(vec: np.ndarray, params: Params) -> SpectralField:
    """Embed reduced coordinates as a solenoidal SpectralField (phi = 0)."""
    idx = reduced_index(params)
    f = SpectralField.zeros(params, dtype=vec.dtype)
    for i, (var, (j, k)) in enumerate(idx.table):
        if var == "v":
            f.w2[j, k] = vec[i]
            f.w1[j, k] = -np.pi * k / (params.alpha * j) * vec[i]
        else:
            getattr(f, var)[j, k] = vec[i]
    return f


def field_to_reduced(u: SpectralField) -> np.ndarray:
    """L2 projection onto the solenoidal class, in reduced coordinates."""
    p = u.params
    idx = reduced_index(p)
    j, k = _jk_grids(p.J, p.K)
    q2 = laplace_symbol(p.J, p.K, p.alpha)
    safe = np.where(q2 > 0, q2, 1.0)
    g = divergence(u) / safe
    w2_sol = u.w2 - g * (np.pi * k)
    out = np.empty(idx.dim, dtype=np.result_type(u.w2, u.theta))
    for i, (var, (jj, kk)) in enumerate(idx.table):
        out[i] = w2_sol[jj, kk] if var == "v" else getattr(u, var)[jj, kk]
    return out


# --------------------------------------------------------------------------
# Batched coordinate mapping and nonlinearity

class CoordSpace:
    """Vectorized mapping between coefficient vectors and variable arrays.

    Vectors live in the full mode-table ordering (reduced=False) or the
    solenoidal-reduced one (reduced=True). All methods accept leading batch
    dimensions; N_batch evaluates the dealiased advection nonlinearity in
    these coordinates (with the Leray projection applied on the way back in
    the reduced case).
    """

    def __init__(self, params: Params, reduced: bool):
        from .transforms import advect  # local import to avoid cycles
        self._advect = advect
        self.params = params
        self.reduced = reduced
        self.idx = reduced_index(params) if reduced else full_index(params)
        self.dim = self.idx.dim
        self._masks = admissible_masks(params.J, params.K)
        jg, kg = _jk_grids(params.J, params.K)
        self._aj = params.alpha * jg
        self._kp = np.pi * kg
        q2 = laplace_symbol(params.J, params.K, params.alpha)
        self._safe_q2 = np.where(q2 > 0, q2, 1.0)

    def vecs_to_arrays(self, V: np.ndarray) -> dict:
        p = self.params
        lead = V.shape[:-1]
        shape = lead + (p.J + 1, p.K + 1)
        names = ("w1", "w2", "theta", "psi") if self.reduced else VARIABLES
        arrs = {v: np.zeros(shape, dtype=V.dtype) for v in names}
        for var, (pos, js, ks) in self.idx.var_maps.items():
            if var == "v":
                vv = V[..., pos]
                arrs["w2"][..., js, ks] = vv
                arrs["w1"][..., js, ks] = -(np.pi * ks) / (p.alpha * js) * vv
            else:
                arrs[var][..., js, ks] = V[..., pos]
        return arrs

    def arrays_to_vecs(self, arrs: dict, lead_shape, dtype) -> np.ndarray:
        out = np.zeros(lead_shape + (self.dim,), dtype=dtype)
        if self.reduced:
            div = self._aj * arrs["w1"] + self._kp * arrs["w2"]
            w2_sol = arrs["w2"] - (div / self._safe_q2) * self._kp
        for var, (pos, js, ks) in self.idx.var_maps.items():
            if var == "v":
                out[..., pos] = w2_sol[..., js, ks]
            elif var in arrs:
                out[..., pos] = arrs[var][..., js, ks]
        return out

    def N_batch(self, V1: np.ndarray, V2: np.ndarray) -> np.ndarray:
        """Dealiased advection N(v1, v2) on batched coefficient vectors."""
        a1 = self.vecs_to_arrays(V1)
        a2 = self.vecs_to_arrays(V2)
        nw1, nw2, nth, nps = self._advect(
            self.params, a1["w1"], a1["w2"],
            [(a2["w1"], "sc"), (a2["w2"], "cs"),
             (a2["theta"], "cs"), (a2["psi"], "cs")])
        masks = self._masks
        arrs = {
            "w1": np.where(masks["w1"], nw1, 0.0),
            "w2": np.where(masks["w2"], nw2, 0.0),
            "theta": np.where(masks["theta"], nth, 0.0),
            "psi": np.where(masks["psi"], nps, 0.0),
        }
        return self.arrays_to_vecs(arrs, V1.shape[:-1], np.result_type(V1, V2))

    def vec_to_field(self, vec: np.ndarray) -> SpectralField:
        if self.reduced:
            return reduced_to_field(vec, self.params)
        return vec_to_field(vec, self.params, self.idx)

    def field_to_vec(self, f: SpectralField) -> np.ndarray:
        if self.reduced:
            return field_to_reduced(f)
        return field_to_vec(f, self.idx)


@lru_cache(maxsize=8)
def coord_space(params: Params, reduced: bool) -> CoordSpace:
    return CoordSpace(params, reduced)


# --------------------------------------------------------------------------
# Independent analytic action (test oracle; no matrix assembly)

def apply_L_direct(params: Params, u: SpectralField) -> SpectralField:
    """L^eps applied by per-term coefficient rules; independent of assemble_L."""
    p = params
    if p.eps <= 0:
        raise ValueError("eps must be positive")
    j, k = _jk_grids(p.J, p.K)
    q2 = laplace_symbol(p.J, p.K, p.alpha)
    masks = admissible_masks(p.J, p.K)
    out = SpectralField.zeros(p, dtype=np.result_type(*(getattr(u, v) for v in VARIABLES)))
    out.phi = np.where(masks["phi"], divergence(u) / p.eps ** 2, 0.0)
    g1 = -p.alpha * j * u.phi
    g2 = -np.pi * k * u.phi
    out.w1 = np.where(masks["w1"], p.Pr * g1 + p.Pr * q2 * u.w1, 0.0)
    out.w2 = np.where(masks["w2"],
                      p.Pr * g2 + p.Pr * q2 * u.w2 - p.Pr * p.R1 * u.theta
                      + p.Pr * p.R2 * u.psi, 0.0)
    out.theta = np.where(masks["theta"], -p.R1 * u.w2 + q2 * u.theta, 0.0)
    out.psi = np.where(masks["psi"], -p.R2 * u.w2 + p.d * q2 * u.psi, 0.0)
    return out


def export_matrix_market(op: LinearOperator, path: str) -> None:
    """Dump the operator in Matrix Market coordinate format."""
    from scipy.io import mmwrite
    from scipy.sparse import coo_matrix
    mmwrite(path, coo_matrix(op.matrix), comment=f"ddhopf {op.kind}")
