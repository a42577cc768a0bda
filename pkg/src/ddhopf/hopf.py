"""Harmonic-balance machinery for the bifurcating time-periodic branch.

Time-periodic fields are truncated Fourier stacks u(t) = sum_m u_m e^{i m a t}
over |m| <= M. The kernel splitting of the period map, the first-order
coefficients, and the Picard continuation all operate on coefficient vectors
in "system coordinates": the full mode-table ordering for eps > 0, the
solenoidal-reduced ordering for the incompressible formulation. Per-harmonic
linear solves are block diagonal over spatial modes; the resonant harmonics
m = +-1 use a bordered system that pins the eigenfunction pairing to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import (Params, SpectralField, admissible_masks, laplace_symbol,
                    measure_weights, _jk_grids)
from . import operators as ops
from .transforms import advect
from .spectrum import EigenData


class ResonanceError(Exception):
    """A nonresonant harmonic block is numerically singular."""


class DegenerateTransversality(Exception):
    """Re [K z0]_+ vanishes; the bifurcation equations are unsolvable."""


class NoContraction(Exception):
    """Picard difference ratios stayed above 0.9 (delta too large)."""


class MaxIterError(Exception):
    """Picard failed to reach tolerance in the allowed iterations."""


# --------------------------------------------------------------------------
# Time-periodic coefficient stacks

class TimePeriodicField:
    """Harmonics m in [-M, M] of a time-periodic coefficient vector.

    ``arr`` has shape (2M+1, dim), row M+m holding the coefficient of
    e^{i m a t}. Real-valued fields satisfy arr[M-m] = conj(arr[M+m]).
    """

    __slots__ = ("arr", "M", "a_base")

    def __init__(self, arr: np.ndarray, a_base: float):
        arr = np.asarray(arr, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] % 2 != 1:
            raise ValueError("arr must have shape (2M+1, dim)")
        self.arr = arr
        self.M = arr.shape[0] // 2
        self.a_base = a_base

    @classmethod
    def zeros(cls, dim: int, M: int, a_base: float) -> "TimePeriodicField":
        return cls(np.zeros((2 * M + 1, dim), dtype=complex), a_base)

    @property
    def dim(self) -> int:
        return self.arr.shape[1]

    def h(self, m: int) -> np.ndarray:
        if abs(m) > self.M:
            return np.zeros(self.dim, dtype=complex)
        return self.arr[self.M + m]

    def set_h(self, m: int, vec) -> None:
        self.arr[self.M + m] = vec

    def copy(self) -> "TimePeriodicField":
        return TimePeriodicField(self.arr.copy(), self.a_base)

    def deriv(self) -> "TimePeriodicField":
        m = np.arange(-self.M, self.M + 1)[:, None]
        return TimePeriodicField(1j * m * self.a_base * self.arr, self.a_base)

    def shift(self, tau: float) -> "TimePeriodicField":
        """Time translation u(. + tau)."""
        m = np.arange(-self.M, self.M + 1)[:, None]
        return TimePeriodicField(np.exp(1j * m * self.a_base * tau) * self.arr,
                                 self.a_base)

    def at_phase(self, t: float) -> np.ndarray:
        m = np.arange(-self.M, self.M + 1)
        return np.exp(1j * m * self.a_base * t) @ self.arr

    def reality_defect(self) -> float:
        return float(np.abs(self.arr[::-1] - np.conj(self.arr)).max())

    def _match(self, other):
        if self.M != other.M or self.dim != other.dim:
            raise ValueError("mismatched harmonic stacks")

    def __add__(self, other):
        self._match(other)
        return TimePeriodicField(self.arr + other.arr, self.a_base)

    def __sub__(self, other):
        self._match(other)
        return TimePeriodicField(self.arr - other.arr, self.a_base)

    def __mul__(self, scalar):
        return TimePeriodicField(self.arr * scalar, self.a_base)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)


def tp_inner(u: TimePeriodicField, v: TimePeriodicField, W: np.ndarray) -> complex:
    """Time-averaged weighted pairing: sum_m (u_m, v_m)_W (conjugate on v)."""
    u._match(v)
    return complex(np.einsum("md,d,md->", u.arr, W, np.conj(v.arr)))


def tp_norm(u: TimePeriodicField, W: np.ndarray) -> float:
    return float(np.sqrt(max(tp_inner(u, u, W).real, 0.0)))


# --------------------------------------------------------------------------
# System coordinates: shared machinery for eps > 0 and eps = 0

class HopfSystem:
    """Operators, weights, and eigendata in one formulation's coordinates."""

    def __init__(self, ed: EigenData, M: int = 8):
        self.ed = ed
        self.params = ed.params
        self.eps = ed.eps
        self.reduced = ed.system_kind == "reduced"
        self.M = M
        p = self.params
        if self.reduced:
            self.idx = ops.reduced_index(p)
            Lop = ops.assemble_L_incomp(p)
        else:
            self.idx = ops.full_index(p)
            Lop = ops.assemble_L(p)
        self.dim = self.idx.dim
        self.L = Lop.matrix
        self.blocks = [Lop.blocks[mode] for mode in sorted(Lop.blocks)]
        self.W = ops.weight_vector(p, self.idx)
        self.K = ops.K_matrix(p, self.idx)
        self.a_block = ed.a                  # Hopf frequency of this system
        self.a_base = ed.a                   # frequency of the time circle
        self.u_plus = ed.vec_plus
        self.u_star = ed.vec_plus_adj
        crit_rows = self.idx.mode_positions(ed.critical_mode)
        self.crit_rows = np.array(crit_rows, dtype=np.intp)
        self.coords = ops.coord_space(p, self.reduced)

    # -- brackets and projections ------------------------------------------

    def bracket(self, vec: np.ndarray) -> complex:
        """(vec, u_plus_adj)_W: the harmonic-1 pairing behind [.]_{+,eps}."""
        return complex(np.sum(self.W * vec * np.conj(self.u_star)))

    def bracket_plus(self, u: TimePeriodicField) -> complex:
        """[u]_+ = <u, e^{iat} u_plus_adj> = (u_1, u_plus_adj)_W."""
        return self.bracket(u.h(1))

    def project_Q(self, u: TimePeriodicField) -> TimePeriodicField:
        """Remove the kernel components [u]_+ z_+ and [u]_- z_-."""
        out = u.copy()
        c1 = self.bracket(u.h(1))
        out.set_h(1, u.h(1) - c1 * self.u_plus)
        cm = np.sum(self.W * u.h(-1) * self.u_star)   # (u_-1, conj(u_star))_W
        out.set_h(-1, u.h(-1) - cm * np.conj(self.u_plus))
        return out

    def z0(self) -> TimePeriodicField:
        z = TimePeriodicField.zeros(self.dim, self.M, self.a_base)
        z.set_h(1, self.u_plus)
        z.set_h(-1, np.conj(self.u_plus))
        return z

    # -- linear maps ---------------------------------------------------------

    def apply_L_tp(self, u: TimePeriodicField) -> TimePeriodicField:
        return TimePeriodicField(u.arr @ self.L.T, self.a_base)

    def apply_K_tp(self, u: TimePeriodicField) -> TimePeriodicField:
        return TimePeriodicField(u.arr @ self.K.T, self.a_base)

    def solve_harmonic(self, m: int, omega: float, rhs: np.ndarray) -> np.ndarray:
        """Solve (i m a_block (1+omega) + L) x = rhs, block by block.

        The resonant harmonics m = +-1 use the bordered system pinning
        (x, u_plus_adj)_W = 0 (resp. the conjugate pairing at m = -1).
        """
        nu = 1j * m * self.a_block * (1.0 + omega)
        x = np.empty_like(rhs, dtype=complex)
        bordered = abs(m) == 1
        for rows, B in self.blocks:
            A = B.astype(complex).copy()
            A[np.diag_indices_from(A)] += nu
            b = rhs[rows]
            if bordered and rows[0] == self.crit_rows[0]:
                n = len(rows)
                u_loc = self.u_plus[self.crit_rows]
                s_loc = self.u_star[self.crit_rows]
                W_loc = self.W[self.crit_rows]
                if m == -1:
                    u_loc = np.conj(u_loc)
                    row = W_loc * s_loc
                else:
                    row = W_loc * np.conj(s_loc)
                Ab = np.zeros((n + 1, n + 1), dtype=complex)
                Ab[:n, :n] = A
                Ab[:n, n] = u_loc
                Ab[n, :n] = row
                bb = np.concatenate([b, [0.0]])
                sol = np.linalg.solve(Ab, bb)
                x[rows] = sol[:n]
            else:
                try:
                    sol = np.linalg.solve(A, b)
                except np.linalg.LinAlgError as exc:
                    raise ResonanceError(
                        f"singular harmonic block m={m} rows[0]={rows[0]}") from exc
                nb = np.linalg.norm(b)
                if nb > 0 and np.linalg.norm(A @ sol - b) > 1e-8 * nb:
                    raise ResonanceError(
                        f"ill-conditioned harmonic block m={m} (near multiple "
                        f"of the Hopf frequency)")
                x[rows] = sol
        return x

    # -- nonlinearity ---------------------------------------------------------

    def N_batch(self, V1: np.ndarray, V2: np.ndarray) -> np.ndarray:
        return self.coords.N_batch(V1, V2)

    def tp_N(self, u: TimePeriodicField, v: TimePeriodicField) -> TimePeriodicField:
        """Quadratic convolution in time by exact collocation (Nt = 3M+1)."""
        M = self.M
        Nt = 3 * M + 1
        m = np.arange(-M, M + 1)
        i = np.arange(Nt)
        F = np.exp(2j * np.pi * np.outer(i, m) / Nt)
        ut = F @ u.arr
        vt = F @ v.arr
        nt = self.N_batch(ut, vt)
        G = (np.conj(F).T @ nt) / Nt
        return TimePeriodicField(G, self.a_base)

    def tp_M(self, u: TimePeriodicField, v: TimePeriodicField) -> TimePeriodicField:
        return self.tp_N(u, v) + self.tp_N(v, u)

    # -- field embedding ------------------------------------------------------

    def vec_to_field(self, vec: np.ndarray) -> SpectralField:
        return self.coords.vec_to_field(vec)

    def field_to_vec(self, f: SpectralField) -> np.ndarray:
        return self.coords.field_to_vec(f)

    def tp_norm_eps(self, u: TimePeriodicField) -> float:
        return tp_norm(u, self.W)


def make_system(ed: EigenData, M: int = 8) -> HopfSystem:
    return HopfSystem(ed, M=M)


# --------------------------------------------------------------------------
# B(omega) solves and the first-order coefficients

def solve_B_omega(F: TimePeriodicField, omega: float, system: HopfSystem,
                  project: bool = True) -> TimePeriodicField:
    """Unique solution U in Q Y_a of B(omega) U = Q F.

    Per harmonic m: (i m a_block (1+omega) + L) u_m = F_m; the resonant
    harmonics are pinned by the bordered kernel splitting so [U]_+ = 0
    exactly up to linear-solve roundoff.
    """
    if abs(omega) > 0.25:
        raise ValueError("|omega| must be <= 1/4")
    G = system.project_Q(F) if project else F
    out = TimePeriodicField.zeros(system.dim, system.M, system.a_base)
    for m in range(-system.M, system.M + 1):
        out.set_h(m, system.solve_harmonic(m, omega, G.h(m)))
    return out


def apply_B_omega(u: TimePeriodicField, omega: float, system: HopfSystem) -> TimePeriodicField:
    m = np.arange(-system.M, system.M + 1)[:, None]
    arr = (1j * m * system.a_block * (1.0 + omega)) * u.arr + u.arr @ system.L.T
    return TimePeriodicField(arr, system.a_base)


@dataclass
class HopfCoefficients:
    """First-order Lyapunov-Schmidt data: eta ~ eta0 delta^2 etc."""

    eta0: float
    omega0: float
    U0: TimePeriodicField
    eps: float
    bracket_Kz0: complex
    bracket_Mz0U0: complex


def hopf_first_order(system: HopfSystem) -> HopfCoefficients:
    """Solve the order-delta^2 system: B U0 + N(z0) = 0 plus the 2x2
    lower-triangular bracket equations for (eta0, omega0)."""
    z0 = system.z0()
    Nz0 = system.tp_N(z0, z0)
    U0 = solve_B_omega(-1.0 * Nz0, 0.0, system)
    Kz0_b = system.bracket(system.K @ system.u_plus)
    if abs(Kz0_b.real) < 1e-12 * max(1.0, abs(Kz0_b)):
        raise DegenerateTransversality(f"Re [K z0]_+ = {Kz0_b.real:.3e}")
    MzU_b = system.bracket_plus(system.tp_M(z0, U0))
    eta0 = -MzU_b.real / Kz0_b.real
    omega0 = -(eta0 * Kz0_b.imag + MzU_b.imag) / system.a_block
    return HopfCoefficients(eta0=float(eta0), omega0=float(omega0), U0=U0,
                            eps=system.eps, bracket_Kz0=Kz0_b,
                            bracket_Mz0U0=MzU_b)


# --------------------------------------------------------------------------
# Picard continuation of the branch

@dataclass
class HopfBranchPoint:
    delta: float
    eta: float
    omega: float
    eta_tilde: float
    omega_tilde: float
    orbit_U: TimePeriodicField
    residual: float
    iterations: int
    eps: float
    contraction: list = field(default_factory=list)
    harmonic_energies: np.ndarray | None = None
    bracket_defect: float = 0.0


def orbit_residual(system: HopfSystem, eta: float, omega: float,
                   u: TimePeriodicField) -> float:
    """|||B u + (a_eps/a) omega dt u + eta K u + N(u)|||_eps on an arbitrary
    time-periodic field; forward evaluation only."""
    res = apply_B_omega(u, omega, system) + eta * system.apply_K_tp(u) \
        + system.tp_N(u, u)
    return system.tp_norm_eps(res)


def branch_residual(system: HopfSystem, delta: float, eta_t: float,
                    omega_t: float, U: TimePeriodicField) -> float:
    """Residual of the assembled orbit u = delta (z0 + delta U); at delta = 0
    the first-order system's residual is reported instead."""
    if delta == 0.0:
        z0 = system.z0()
        res = apply_B_omega(U, 0.0, system) + system.tp_N(z0, z0)
        r3 = system.tp_norm_eps(res)
        Kz0_b = system.bracket(system.K @ system.u_plus)
        MzU_b = system.bracket_plus(system.tp_M(z0, U))
        r1 = eta_t * Kz0_b.real + MzU_b.real
        r2 = system.a_block * omega_t + eta_t * Kz0_b.imag + MzU_b.imag
        return float(np.sqrt(r1 ** 2 + r2 ** 2 + r3 ** 2))
    u = delta * (system.z0() + delta * U)
    return orbit_residual(system, delta ** 2 * eta_t, delta ** 2 * omega_t, u)


def picard_branch(delta: float, system: HopfSystem,
                  first_order: HopfCoefficients | None = None,
                  tol: float = 1e-12, max_iter: int = 60,
                  delta_max: float = 0.5) -> HopfBranchPoint:
    """Iterate the Lyapunov-Schmidt fixed-point map at amplitude delta.

    Seeded by the first-order solution; each sweep solves the Q-part with
    the frozen omega and then updates (eta, omega) from the bracket
    equations. Raises NoContraction when difference ratios exceed 0.9 three
    times in a row, MaxIterError on exhaustion.
    """
    if abs(delta) > delta_max:
        raise ValueError(f"|delta| > delta_max = {delta_max}")
    fo = first_order or hopf_first_order(system)
    z0 = system.z0()
    Kz0_b = fo.bracket_Kz0
    eta_t, omega_t, U = fo.eta0, fo.omega0, fo.U0

    if delta == 0.0:
        res = branch_residual(system, 0.0, eta_t, omega_t, U)
        return HopfBranchPoint(
            delta=0.0, eta=0.0, omega=0.0, eta_tilde=eta_t, omega_tilde=omega_t,
            orbit_U=U, residual=res, iterations=0, eps=system.eps,
            harmonic_energies=harmonic_energies(system, 0.0, U),
            bracket_defect=abs(system.bracket_plus(U)))

    contraction = []
    prev_diff = None
    high_ratio_streak = 0
    for it in range(1, max_iter + 1):
        z = z0 + delta * U
        KZ = system.apply_K_tp(z)
        NZ = system.tp_N(z, z)
        NU = system.tp_N(U, U)
        KU_b = system.bracket(system.K @ U.h(1))
        NU_b = system.bracket_plus(NU)
        r1 = delta * eta_t * KU_b.real + delta * NU_b.real
        r2 = delta * eta_t * KU_b.imag + delta * NU_b.imag
        rhs3 = -1.0 * (delta * eta_t * KZ + NZ)
        if abs(delta ** 2 * omega_t) > 0.25:
            raise NoContraction(
                f"delta={delta}: |omega| = {abs(delta**2 * omega_t):.3f} left "
                f"the solvable region (iterate diverging)")
        U_new = solve_B_omega(rhs3, delta ** 2 * omega_t, system)
        MzU_b = system.bracket_plus(system.tp_M(z0, U_new))
        eta_new = (-r1 - MzU_b.real) / Kz0_b.real
        omega_new = (-r2 - eta_new * Kz0_b.imag - MzU_b.imag) / system.a_block

        diff = (abs(eta_new - eta_t) + abs(omega_new - omega_t)
                + system.tp_norm_eps(U_new - U))
        eta_t, omega_t, U = eta_new, omega_new, U_new
        if prev_diff is not None and prev_diff > 0:
            ratio = diff / prev_diff
            contraction.append(ratio)
            if ratio > 0.9:
                high_ratio_streak += 1
                if high_ratio_streak >= 3:
                    raise NoContraction(
                        f"delta={delta}: ratio {ratio:.3f} for 3 consecutive sweeps")
            else:
                high_ratio_streak = 0
        prev_diff = diff
        if diff <= tol:
            break
    else:
        raise MaxIterError(f"delta={delta}: no convergence in {max_iter} sweeps")

    res = branch_residual(system, delta, eta_t, omega_t, U)
    return HopfBranchPoint(
        delta=delta, eta=delta ** 2 * eta_t, omega=delta ** 2 * omega_t,
        eta_tilde=eta_t, omega_tilde=omega_t, orbit_U=U, residual=res,
        iterations=it, eps=system.eps, contraction=contraction,
        harmonic_energies=harmonic_energies(system, delta, U),
        bracket_defect=abs(system.bracket_plus(U)))


def harmonic_energies(system: HopfSystem, delta: float,
                      U: TimePeriodicField) -> np.ndarray:
    """eps-weighted energy per harmonic of the assembled orbit."""
    u = system.z0() + delta * U if delta != 0.0 else system.z0() + U * 0.0
    e = np.einsum("md,d,md->m", u.arr, system.W, np.conj(u.arr)).real
    return e


# --------------------------------------------------------------------------
# Full-coordinate orbits and the associated pressure

def orbit_full_fields(point: HopfBranchPoint, system: HopfSystem) -> dict:
    """Harmonic map m -> full-coordinate SpectralField of u = delta(z0+delta U).

    For the incompressible system the pressure component is recovered from
    the gradient part of the momentum residual (recover_pressure).
    """
    u = point.delta * (system.z0() + point.delta * point.orbit_U)
    fields = {m: system.vec_to_field(u.h(m)) for m in range(-system.M, system.M + 1)}
    if system.reduced:
        fields = recover_pressure(fields, system, point.eta, point.omega)
    return fields


def recover_pressure(fields: dict, system: HopfSystem, eta: float,
                     omega: float) -> dict:
    """Fill the phi component of a solenoidal time-periodic orbit.

    Per mode and harmonic, phi solves the gradient part of the momentum
    equation (1+omega) dt w + Pr grad(phi) - Pr lap(w) - Pr R1 theta e2
    + Pr R2 psi e2 + (w . grad w) = 0; zero mean by construction.
    """
    p = system.params
    M = system.M
    a = system.a_base
    jg, kg = _jk_grids(p.J, p.K)
    aj, kp = p.alpha * jg, np.pi * kg
    q2 = laplace_symbol(p.J, p.K, p.alpha)
    safe = np.where(q2 > 0, q2, 1.0)
    mask = admissible_masks(p.J, p.K)["phi"]
    R1 = p.R1 + eta

    # harmonics of the unprojected advection term on the full fields
    Nt = 3 * M + 1
    mgrid = np.arange(-M, M + 1)
    F = np.exp(2j * np.pi * np.outer(np.arange(Nt), mgrid) / Nt)
    stack = {v: np.stack([getattr(fields[m], v) for m in mgrid]) for v in
             ("w1", "w2", "theta", "psi")}
    vals = {v: np.einsum("tm,mjk->tjk", F, stack[v]) for v in stack}
    nw1, nw2, _, _ = advect(p, vals["w1"], vals["w2"],
                            [(vals["w1"], "sc"), (vals["w2"], "cs"),
                             (vals["theta"], "cs"), (vals["psi"], "cs")])
    Nh1 = np.einsum("tm,tjk->mjk", np.conj(F), nw1) / Nt
    Nh2 = np.einsum("tm,tjk->mjk", np.conj(F), nw2) / Nt

    out = {}
    for i, m in enumerate(mgrid):
        f = fields[m]
        G1 = (1 + omega) * 1j * m * a * f.w1 + p.Pr * q2 * f.w1 + Nh1[i]
        G2 = ((1 + omega) * 1j * m * a * f.w2 + p.Pr * q2 * f.w2
              - p.Pr * R1 * f.theta + p.Pr * p.R2 * f.psi + Nh2[i])
        phi = np.where(mask, (aj * G1 + kp * G2) / (p.Pr * safe), 0.0)
        g = f.copy()
        g.phi = phi
        out[int(m)] = g
    return out


# --------------------------------------------------------------------------
# Discrete Y-norm and the singular-limit study

def tp_y_norm(fields: dict, params: Params, eps: float, a_base: float,
              n_phase: int = 32) -> float:
    """Discrete eps-weighted Y_a norm: sup-in-time X1 part plus harmonic sums
    for the derivative integrals (integrals replaced by harmonic sums)."""
    from .basis import norms as field_norms
    M = max(fields)
    sup_sq = 0.0
    for i in range(n_phase):
        t = 2 * np.pi * i / (a_base * n_phase)
        acc = None
        for m in range(-M, M + 1):
            ph = np.exp(1j * m * a_base * t)
            acc = fields[m] * ph if acc is None else acc + fields[m] * ph
        r = field_norms(acc.real, eps)
        sup_sq = max(sup_sq, r.x1_eps ** 2)

    w = measure_weights(params.J, params.K, params.alpha)
    q2 = laplace_symbol(params.J, params.K, params.alpha)
    pref = {"w1": 1 / params.Pr, "w2": 1 / params.Pr, "theta": 1.0, "psi": 1.0}
    total = 0.0
    for m in range(-M, M + 1):
        f = fields[m]
        ma = m * a_base
        grad_eps = eps ** 2 * np.sum(w["phi"] * q2 * np.abs(f.phi) ** 2)
        l2_eps = eps ** 2 * np.sum(w["phi"] * np.abs(f.phi) ** 2)
        lap_bu = 0.0
        for v in ("w1", "w2", "theta", "psi"):
            c2 = np.abs(getattr(f, v)) ** 2
            grad_eps += pref[v] * np.sum(w[v] * q2 * c2)
            l2_eps += pref[v] * np.sum(w[v] * c2)
            lap_bu += np.sum(w[v] * q2 ** 2 * c2)
        total += (grad_eps + eps ** 2 * ma ** 2 * l2_eps + eps ** 2 * lap_bu
                  + eps ** 6 * ma ** 2 * np.sum(w["phi"] * q2 * np.abs(f.phi) ** 2))
    return float(np.sqrt(sup_sq + total))


def orbit_component_gaps(fa: dict, fb: dict, params: Params) -> dict:
    """L2-in-time gaps per component group between two full orbits."""
    w = measure_weights(params.J, params.K, params.alpha)
    M = max(fa)
    vel = th = ps = pr = 0.0
    for m in range(-M, M + 1):
        da = fa[m]
        db = fb[m]
        vel += np.sum(w["w1"] * np.abs(da.w1 - db.w1) ** 2)
        vel += np.sum(w["w2"] * np.abs(da.w2 - db.w2) ** 2)
        th += np.sum(w["theta"] * np.abs(da.theta - db.theta) ** 2)
        ps += np.sum(w["psi"] * np.abs(da.psi - db.psi) ** 2)
        pr += np.sum(w["phi"] * np.abs(da.phi - db.phi) ** 2)
    return {"velocity": float(np.sqrt(vel)), "theta": float(np.sqrt(th)),
            "psi": float(np.sqrt(ps)), "pressure": float(np.sqrt(pr))}


@dataclass
class EpsGapRow:
    eps: float
    eta_gap: float
    omega_gap: float
    velocity_gap: float
    theta_gap: float
    psi_gap: float
    pressure_gap: float
    y_gap: float
    error: str = ""


def eps_convergence_study(delta: float, eps_list, base_params: Params,
                          M: int = 8, tol: float = 1e-12) -> list[EpsGapRow]:
    """Branch-gap table between eps > 0 and the incompressible branch.

    Rows with failing solves carry the error message instead of aborting
    the table.
    """
    from .spectrum import critical_R1
    p0 = base_params.with_(eps=0.0)
    _, ed0 = critical_R1(p0)
    sys0 = make_system(ed0, M=M)
    pt0 = picard_branch(delta, sys0, tol=tol)
    f0 = orbit_full_fields(pt0, sys0)

    rows = []
    for eps in eps_list:
        try:
            _, ed = critical_R1(base_params.with_(eps=float(eps)))
            sys_e = make_system(ed, M=M)
            pt = picard_branch(delta, sys_e, tol=tol)
            fe = orbit_full_fields(pt, sys_e)
            gaps = orbit_component_gaps(fe, f0, ed.params)
            dfields = {m: fe[m] - f0[m] for m in fe}
            ygap = tp_y_norm(dfields, ed.params, eps, sys_e.a_base)
            rows.append(EpsGapRow(
                eps=float(eps), eta_gap=abs(pt.eta - pt0.eta),
                omega_gap=abs(pt.omega - pt0.omega),
                velocity_gap=gaps["velocity"], theta_gap=gaps["theta"],
                psi_gap=gaps["psi"], pressure_gap=gaps["pressure"], y_gap=ygap))
        except Exception as exc:  # per-row failure, table continues
            rows.append(EpsGapRow(eps=float(eps), eta_gap=np.nan, omega_gap=np.nan,
                                  velocity_gap=np.nan, theta_gap=np.nan,
                                  psi_gap=np.nan, pressure_gap=np.nan,
                                  y_gap=np.nan, error=str(exc)))
    return rows
