"""Orbital stability: monodromy of the linearized periodic problem and the
Hill-type reduction of the time-periodic linearization.

Two independent discretizations of the same Floquet spectrum are computed:
(i) the period map of the linearization around the orbit, integrated with an
IMEX scheme (linear operator implicit, time-periodic coupling explicit,
step-doubling Richardson control), and (ii) the dense eigenproblem of the
block-Toeplitz harmonic (Hill) matrix. The near-unit objects of both must
agree; the trivial multiplier is matched against the orbit derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .basis import Params
from . import operators as ops
from .hopf import HopfBranchPoint, HopfCoefficients, HopfSystem, TimePeriodicField
from .spectrum import EigenData, _generator_blocks


class HillWindowError(Exception):
    """More than two Hill eigenvalues inside the near-zero window."""


class StepCollapse(Exception):
    """Monodromy integration produced non-finite values."""


@dataclass
class FloquetResult:
    eps: float
    delta: float
    multipliers: np.ndarray            # sorted by descending modulus
    trivial_defect: float
    trivial_overlap: float
    lambda_monodromy: float
    lambda_hill: complex
    lambda_pred: float
    kappa1: float
    Lambda_rest: float                 # decay exponent bound of the bulk
    hill_window: float

    @property
    def stable(self) -> bool:
        return self.lambda_monodromy < 0 and self.Lambda_rest > 0


# --------------------------------------------------------------------------
# Time-periodic coupling

def coupling_matrices(point: HopfBranchPoint, system: HopfSystem) -> dict:
    """Harmonic matrices of v -> M(h_p, v) for h = z0 + delta*U.

    Returns {p: matrix}; the time-periodic coupling of the linearization is
    M(u_delta(t), .) = delta * sum_p e^{i p a t} M_p.
    """
    h = system.z0() + point.delta * point.orbit_U
    dim = system.dim
    eye = np.eye(dim)
    out = {}
    for p in range(-system.M, system.M + 1):
        hp = h.h(p)
        if np.abs(hp).max() < 1e-300:
            continue
        Hb = np.broadcast_to(hp, (dim, dim))
        Mp = system.N_batch(Hb, eye) + system.N_batch(eye, Hb)
        out[p] = Mp.T.copy()           # columns are images of basis vectors
    return out


def _coupling_at_time(Ms: dict, eta: float, K: np.ndarray, delta: float,
                      a_base: float, t: float) -> np.ndarray:
    """eta K + M(u_delta(t), .) as a real dense matrix."""
    C = eta * K.astype(complex)
    for p, Mp in Ms.items():
        C = C + delta * np.exp(1j * p * a_base * t) * Mp
    return np.ascontiguousarray(C.real)


def linearized_rhs(point: HopfBranchPoint, system: HopfSystem, t: float,
                   v: np.ndarray) -> np.ndarray:
    """Right-hand side of the linearized periodic problem at phase t:
    dv/dt = -(a/a_eps)(1+omega)^{-1} [L v + eta K v + M(u_delta(t), v)]."""
    gamma = (system.a_base / system.a_block) / (1.0 + point.omega)
    u_t = point.delta * (system.z0() + point.delta * point.orbit_U).at_phase(t)
    Mv = system.N_batch(u_t, v) + system.N_batch(v, u_t)
    return -gamma * (system.L @ v + point.eta * (system.K @ v) + Mv)


def monodromy(point: HopfBranchPoint, system: HopfSystem, nsteps: int = 8192,
              richardson: bool = True, t_frac: float = 1.0) -> np.ndarray:
    """Solution map U(t_frac * T_a, 0) of the linearization around the orbit.

    Crank-Nicolson on the stiff linear operator (factorization reused),
    Adams-Bashforth-2 on the time-periodic coupling; with ``richardson``
    the nsteps and 2*nsteps maps are extrapolated to cancel the leading
    dt^2 error (step-doubling control). The full-period map (t_frac = 1)
    is the monodromy operator.
    """
    if nsteps < 512:
        raise ValueError("nsteps must be >= 512")
    U1 = _integrate_monodromy(point, system, nsteps, t_frac)
    if not richardson:
        return U1
    U2 = _integrate_monodromy(point, system, 2 * nsteps, t_frac)
    return (4.0 * U2 - U1) / 3.0


def _integrate_monodromy(point: HopfBranchPoint, system: HopfSystem,
                         nsteps: int, t_frac: float = 1.0) -> np.ndarray:
    gamma = (system.a_base / system.a_block) / (1.0 + point.omega)
    T = t_frac * 2.0 * np.pi / system.a_base
    dt = T / nsteps
    dim = system.dim
    Ms = coupling_matrices(point, system)
    Km = system.K

    S = np.eye(dim) + 0.5 * dt * gamma * system.L
    A0 = np.eye(dim) - 0.5 * dt * gamma * system.L
    lu = scipy.linalg.lu_factor(S)
    P0 = scipy.linalg.lu_solve(lu, A0)

    V = np.eye(dim)
    E_prev = None
    for n in range(nsteps):
        t_n = n * dt
        C = _coupling_at_time(Ms, point.eta, Km, point.delta, system.a_base, t_n)
        E_n = -gamma * (C @ V)
        if E_prev is None:
            expl = dt * E_n
        else:
            expl = dt * (1.5 * E_n - 0.5 * E_prev)
        V = P0 @ V + scipy.linalg.lu_solve(lu, expl)
        E_prev = E_n
        if not np.all(np.isfinite(V)):
            raise StepCollapse(f"eps={system.eps}, dt={dt:g}: non-finite state "
                               f"at step {n}")
    return V


def floquet_multipliers(point: HopfBranchPoint, system: HopfSystem,
                        U: np.ndarray):
    """(multipliers sorted by |mu| desc, eigvecs, orbit-derivative vector)."""
    mu, V = np.linalg.eig(U)
    order = np.argsort(-np.abs(mu))
    mu = mu[order]
    V = V[:, order]
    dt_orbit = (point.delta * (system.z0() + point.delta * point.orbit_U)
                ).deriv().at_phase(0.0)
    return mu, V, dt_orbit


def match_trivial(mu: np.ndarray, V: np.ndarray, dt_orbit: np.ndarray,
                  W: np.ndarray, min_overlap: float = 0.9):
    """Locate the trivial multiplier: nearest to 1 with eigenvector overlap
    >= min_overlap against the orbit derivative; ties broken by overlap."""
    n_orbit = np.sqrt(np.sum(W * np.abs(dt_orbit) ** 2))
    overlaps = np.empty(len(mu))
    for i in range(len(mu)):
        v = V[:, i]
        nv = np.sqrt(np.sum(W * np.abs(v) ** 2))
        overlaps[i] = abs(np.sum(W * v * np.conj(dt_orbit))) / (nv * n_orbit)
    ok = overlaps >= min_overlap
    if not np.any(ok):
        i = int(np.argmax(overlaps))
        return i, float(abs(mu[i] - 1.0)), float(overlaps[i])
    cands = np.where(ok)[0]
    dist = np.abs(mu[cands] - 1.0)
    best = dist.min()
    tied = cands[dist <= best * (1 + 1e-12)]
    i = int(tied[np.argmax(overlaps[tied])])
    return i, float(abs(mu[i] - 1.0)), float(overlaps[i])


# --------------------------------------------------------------------------
# Hill reduction

def hill_matrix(point: HopfBranchPoint, system: HopfSystem,
                M_h: int | None = None) -> np.ndarray:
    """Block-Toeplitz matrix of B_delta over harmonics |m| <= M_h."""
    M_h = system.M if M_h is None else M_h
    dim = system.dim
    Ms = coupling_matrices(point, system)
    nb = 2 * M_h + 1
    H = np.zeros((nb * dim, nb * dim), dtype=complex)
    diag_extra = point.delta ** 2 * point.eta_tilde * system.K
    for mi in range(-M_h, M_h + 1):
        bi = (mi + M_h) * dim
        nu = 1j * mi * system.a_block * (1.0 + point.omega)
        H[bi:bi + dim, bi:bi + dim] = system.L + diag_extra
        H[bi:bi + dim, bi:bi + dim] += nu * np.eye(dim)
        for mj in range(-M_h, M_h + 1):
            p = mi - mj
            if p in Ms:
                bj = (mj + M_h) * dim
                H[bi:bi + dim, bj:bj + dim] += point.delta * Ms[p]
    return H


def hill_eigenvalues(point: HopfBranchPoint, system: HopfSystem,
                     window: float, M_h: int | None = None):
    """Eigenvalues of -B_delta with |lambda| <= window.

    Exactly two are expected ({0, lambda_delta}); more inside the window
    raises HillWindowError (truncation too low or delta too large).
    """
    H = hill_matrix(point, system, M_h)
    lam = np.linalg.eigvals(-H)
    inside = lam[np.abs(lam) <= window]
    inside = inside[np.argsort(np.abs(inside))]
    if len(inside) > 2:
        raise HillWindowError(
            f"{len(inside)} eigenvalues in |lambda| <= {window:g}: {inside}")
    return inside


# --------------------------------------------------------------------------
# kappa1 and the packaged analysis

def kappa1_estimate(params: Params, eps: float, ed: EigenData | None = None) -> float:
    """Decay rate of the semigroup restricted to the kernel complement.

    Computed from the exact semigroup spectrum: minus the largest real part
    of the generator eigenvalues, the critical pair excluded when eigendata
    is supplied, in the a/a_eps-scaled time of the periodic problem.
    """
    p = params.with_(eps=eps) if params.eps != eps else params
    worst = -np.inf
    for _, A in _generator_blocks(p):
        ev = np.linalg.eigvals(A)
        for lam in ev:
            if ed is not None and (abs(lam - ed.lambda_plus) < 1e-8
                                   or abs(lam - np.conj(ed.lambda_plus)) < 1e-8):
                continue
            worst = max(worst, lam.real)
    scale = 1.0 if ed is None else ed.a / ed.a  # scaled time: a_base = a_block
    return float(-worst * scale)


def floquet_analysis(point: HopfBranchPoint, system: HopfSystem,
                     fo: HopfCoefficients, nsteps: int = 8192,
                     M_h: int | None = None, richardson: bool = True) -> FloquetResult:
    """Full stability analysis of one branch point.

    Cross-checks the Hill eigenvalue against the monodromy multiplier and
    against the quadratic prediction 2 delta^2 eta0 Re[K z0]_+.
    """
    lam_pred = 2.0 * point.delta ** 2 * fo.eta0 * fo.bracket_Kz0.real
    kap1 = kappa1_estimate(system.params, system.eps, system.ed)
    window = min(max(4.0 * abs(lam_pred), 0.5 * kap1), 0.45 * system.a_block)

    U = monodromy(point, system, nsteps=nsteps, richardson=richardson)
    mu, V, dt_orbit = floquet_multipliers(point, system, U)
    i_triv, defect, overlap = match_trivial(mu, V, dt_orbit, system.W)

    rest = np.delete(mu, i_triv)
    i_non = int(np.argmax(np.abs(rest)))
    mu_non = rest[i_non]
    # exact discrete Floquet relation: mu = exp((a/a_eps) T_a lambda / (1+omega));
    # the (1+omega) factor matters below the O(delta^3) level
    lam_mono = float((1.0 + point.omega) * np.log(np.abs(mu_non))
                     * system.a_block / (2.0 * np.pi))

    bulk = np.delete(rest, i_non)
    T_a = 2.0 * np.pi / system.a_base
    Lambda_rest = float(-np.log(np.abs(bulk).max()) / T_a) if len(bulk) else np.inf

    lams = hill_eigenvalues(point, system, window, M_h)
    # of the (at most) two eigenvalues, the one away from zero is lambda_delta
    if len(lams) == 2:
        lam_hill = complex(lams[1])
    elif len(lams) == 1:
        lam_hill = complex(lams[0])
    else:
        lam_hill = complex(np.nan)

    return FloquetResult(
        eps=system.eps, delta=point.delta, multipliers=mu,
        trivial_defect=defect, trivial_overlap=overlap,
        lambda_monodromy=lam_mono, lambda_hill=lam_hill,
        lambda_pred=float(lam_pred), kappa1=kap1, Lambda_rest=Lambda_rest,
        hill_window=float(window))
