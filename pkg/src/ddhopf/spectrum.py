"""Eigenvalue analysis: per-mode oracles, critical values, eigenprojections.

Spectra follow the generator convention: we report eigenvalues of -L (or of
the reduced incompressible operator negated), so the basic state is stable
exactly when every real part is negative. Criticality in R1 is located by
bracketing and bisection on the maximal growth rate over per-mode blocks,
then polished on the crossing mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import (Params, ModeIndex, SpectralField, VARIABLES,
                    admissible_masks, laplace_symbol)
from . import operators as ops


class SteadyOnsetFirst(Exception):
    """A real eigenvalue crosses before the complex pair."""


class NoCrossing(Exception):
    """No instability inside the search bracket."""


# --------------------------------------------------------------------------
# Per-mode analytic blocks (generator convention)

def mode_matrix_incomp(params: Params, mode: ModeIndex) -> np.ndarray:
    """3x3 generator block of the incompressible operator at an interior mode.

    Acts on (velocity amplitude, theta, psi); the velocity amplitude is the
    w2 coefficient of the solenoidal mode, s = (alpha j)^2 / q^2 is the
    buoyancy projection factor.
    """
    j, k = mode
    if j < 1 or k < 1:
        raise ValueError("interior mode required (j >= 1 and k >= 1)")
    Pr, d, R1, R2 = params.Pr, params.d, params.R1, params.R2
    q2 = (params.alpha * j) ** 2 + (np.pi * k) ** 2
    s = (params.alpha * j) ** 2 / q2
    return np.array([
        [-Pr * q2, Pr * R1 * s, -Pr * R2 * s],
        [R1, -q2, 0.0],
        [R2, 0.0, -d * q2]])


def mode_matrix_ac(params: Params, mode: ModeIndex) -> np.ndarray:
    """Generator block of -L^eps on one mode.

    5x5 at interior modes (phi, w1, w2, theta, psi); 4x4 at j = 0 (no w1);
    2x2 at k = 0 (phi, w1 only).
    """
    if params.eps <= 0:
        raise ValueError("eps must be positive")
    j, k = mode
    if not admissible_masks(params.J, params.K)["phi"][j, k]:
        raise ValueError(f"mode {tuple(mode)} not admissible")
    _, B = ops._full_block(params, j, k, adjoint=False)
    return -B


def cubic_coefficients(params: Params, mode: ModeIndex) -> tuple[float, float, float]:
    """(c2, c1, c0) of det(lam - A) = lam^3 + c2 lam^2 + c1 lam + c0 for the
    3x3 incompressible mode block A."""
    j, k = mode
    Pr, d, R1, R2 = params.Pr, params.d, params.R1, params.R2
    q2 = (params.alpha * j) ** 2 + (np.pi * k) ** 2
    s = (params.alpha * j) ** 2 / q2
    c2 = (Pr + 1 + d) * q2
    c1 = (Pr + Pr * d + d) * q2 ** 2 - Pr * s * (R1 ** 2 - R2 ** 2)
    c0 = Pr * q2 * (d * q2 ** 2 - d * s * R1 ** 2 + s * R2 ** 2)
    return c2, c1, c0


def single_mode_hopf(params: Params, mode: ModeIndex) -> tuple[float, float]:
    """Closed-form Hopf point of one mode from c0 = c1 c2, a^2 = c1.

    Independent cross-check for the bisection path; raises if the crossing
    pair is not oscillatory (c1 <= 0 at the candidate point).
    """
    j, k = mode
    Pr, d, R2 = params.Pr, params.d, params.R2
    q2 = (params.alpha * j) ** 2 + (np.pi * k) ** 2
    s = (params.alpha * j) ** 2 / q2
    R1sq = (Pr + d) * (1 + d) * q2 ** 2 / (Pr * s) + (Pr + d) * R2 ** 2 / (Pr + 1)
    trial = params.with_(R1=float(np.sqrt(R1sq)))
    _, c1, _ = cubic_coefficients(trial, mode)
    if c1 <= 0:
        raise SteadyOnsetFirst(f"mode {tuple(mode)}: cubic Hopf condition has "
                               f"c1 = {c1:.3e} <= 0 (no oscillatory pair)")
    return float(np.sqrt(R1sq)), float(np.sqrt(c1))


def single_mode_steady(params: Params, mode: ModeIndex) -> float:
    """R1 of steady onset (c0 = 0) for one interior mode."""
    j, k = mode
    q2 = (params.alpha * j) ** 2 + (np.pi * k) ** 2
    s = (params.alpha * j) ** 2 / q2
    return float(np.sqrt(q2 ** 2 / s + params.R2 ** 2 / params.d))


# --------------------------------------------------------------------------
# Generator blocks used by the bisection

def _generator_blocks(params: Params, jcap: int | None = None, kcap: int | None = None):
    """Yield (mode, generator block) over the scanned modes."""
    J = params.J if jcap is None else min(params.J, jcap)
    K = params.K if kcap is None else min(params.K, kcap)
    if params.incompressible:
        for j in range(J + 1):
            for k in range(K + 1):
                if k < 1:
                    continue
                if j >= 1:
                    yield ModeIndex(j, k), mode_matrix_incomp(params, ModeIndex(j, k))
                else:
                    q2 = (np.pi * k) ** 2
                    yield ModeIndex(0, k), np.diag([-q2, -params.d * q2])
    else:
        for j in range(J + 1):
            for k in range(K + 1):
                if j == 0 and k == 0:
                    continue
                yield ModeIndex(j, k), mode_matrix_ac(params, ModeIndex(j, k))


def max_growth(params: Params, jcap: int | None = None, kcap: int | None = None):
    """(max Re over the spectrum, leading eigenvalue, its mode)."""
    best, lead, where = -np.inf, None, None
    for mode, A in _generator_blocks(params, jcap, kcap):
        ev = np.linalg.eigvals(A)
        i = int(np.argmax(ev.real))
        if ev[i].real > best:
            best, lead, where = float(ev[i].real), ev[i], mode
    return best, lead, where


# --------------------------------------------------------------------------
# Eigen data at criticality

@dataclass
class EigenData:
    """Critical eigenpair with eps-weighted biorthonormalization.

    vec_plus / vec_plus_adj are coefficient vectors in the system ordering
    (full mode_table for eps > 0, solenoidal-reduced for eps = 0);
    u_plus / u_plus_adj are the same objects as SpectralFields, with the
    associated pressures attached in the incompressible case.
    """

    lambda_plus: complex
    a: float
    u_plus: SpectralField
    u_plus_adj: SpectralField
    eps: float
    R1_crit: float
    transversality: float
    critical_mode: ModeIndex
    params: Params
    vec_plus: np.ndarray
    vec_plus_adj: np.ndarray
    system_kind: str


def _crossing_eigdata(params: Params, mode: ModeIndex) -> EigenData:
    """Assemble normalized EigenData from the crossing mode's block."""
    reduced = params.incompressible
    if reduced:
        A = mode_matrix_incomp(params, mode)
        Astar = -ops._reduced_block(params, mode.j, mode.k, adjoint=True)[1]
        vs = ["v", "theta", "psi"]
        idx = ops.reduced_index(params)
    else:
        A = mode_matrix_ac(params, mode)
        vs, Bstar = ops._full_block(params, mode.j, mode.k, adjoint=True)
        Astar = -Bstar
        idx = ops.full_index(params)

    ev, V = np.linalg.eig(A)
    i = int(np.argmax(ev.real))
    lam = ev[i]
    if lam.imag < 0:
        lam = np.conj(lam)
        i = int(np.argmin(np.abs(ev - lam)))
    u = V[:, i].astype(complex)

    # pin phase and scale: theta coefficient of the critical mode == 1, which
    # is in particular real and positive, and makes eigenfunctions comparable
    # across eps (the pairing normalization leaves a free complex factor)
    ith = vs.index("theta")
    z = u[ith]
    if abs(z) == 0:
        raise RuntimeError("degenerate eigenvector: zero theta component")
    u = u / z

    evs, Vs = np.linalg.eig(Astar)
    istar = int(np.argmin(np.abs(evs - np.conj(lam))))
    if abs(evs[istar] - np.conj(lam)) > 1e-6 * max(1.0, abs(lam)):
        raise RuntimeError("adjoint eigenvalue match failed")
    ustar = Vs[:, istar].astype(complex)

    rows = [idx.pos(v, mode.j, mode.k) for v in vs]
    W = ops.weight_vector(params, idx)[rows]
    c = np.sum(W * u * np.conj(ustar))
    if abs(c) < 1e-13:
        raise RuntimeError("defective pairing (u_plus, u_plus_adj) ~ 0")
    ustar = ustar / np.conj(c)

    vec_plus = np.zeros(idx.dim, dtype=complex)
    vec_plus_adj = np.zeros(idx.dim, dtype=complex)
    vec_plus[rows] = u
    vec_plus_adj[rows] = ustar

    if reduced:
        f_plus = ops.reduced_to_field(vec_plus, params)
        f_adj = ops.reduced_to_field(vec_plus_adj, params)
        f_plus.phi = associated_pressure(params, f_plus, lam, adjoint=False)
        f_adj.phi = associated_pressure(params, f_adj, lam, adjoint=True)
    else:
        f_plus = ops.vec_to_field(vec_plus, params)
        f_adj = ops.vec_to_field(vec_plus_adj, params)

    Kmat_rows = ops.K_matrix(params, idx)[np.ix_(rows, rows)]
    trans = -float(np.real(np.sum(W * (Kmat_rows @ u) * np.conj(ustar))))

    return EigenData(
        lambda_plus=complex(lam), a=float(lam.imag),
        u_plus=f_plus, u_plus_adj=f_adj, eps=params.eps,
        R1_crit=params.R1, transversality=trans, critical_mode=mode,
        params=params, vec_plus=vec_plus, vec_plus_adj=vec_plus_adj,
        system_kind="reduced" if reduced else "full")


def associated_pressure(params: Params, f: SpectralField, lam: complex,
                        adjoint: bool = False) -> np.ndarray:
    """Pressure making (phi, bu) solve the linear eigenproblem at eigenvalue lam.

    For the direct problem lam*(0, bu) = -(L u); the gradient part of the
    momentum residual determines phi uniquely (zero mean). The adjoint flag
    switches to the adjoint operator's sign conventions.
    """
    p = params
    jj, kk = np.arange(p.J + 1)[:, None], np.arange(p.K + 1)[None, :]
    aj = p.alpha * jj
    kp = np.pi * kk
    q2 = laplace_symbol(p.J, p.K, p.alpha)
    sgn_b = -1.0 if adjoint else 1.0
    lam_eff = np.conj(lam) if adjoint else lam
    # w-rows of the eigenrelation without the pressure-gradient term
    G1 = lam_eff * f.w1 + p.Pr * q2 * f.w1
    G2 = (lam_eff * f.w2 + p.Pr * q2 * f.w2
          - p.Pr * p.R1 * f.theta + sgn_b * p.Pr * p.R2 * f.psi)
    safe = np.where(q2 > 0, q2, 1.0)
    phi = (aj * G1 + kp * G2) / (p.Pr * safe)
    if adjoint:
        phi = -phi
    mask = admissible_masks(p.J, p.K)["phi"]
    return np.where(mask, phi, 0.0)


def critical_R1(params: Params, scan_cap: int = 8, rel_tol: float = 1e-12,
                bracket_hi: float | None = None) -> tuple[float, EigenData]:
    """Smallest R1 at which the maximal growth rate crosses zero.

    Bisection on the per-mode spectra, followed by a secant polish of the
    crossing mode's leading real part. Raises SteadyOnsetFirst when the
    crossing eigenvalue is real, NoCrossing when the bracket never
    destabilizes.
    """
    jcap = min(params.J, scan_cap)
    kcap = min(params.K, scan_cap)

    if bracket_hi is None:
        steady = min(single_mode_steady(params, ModeIndex(j, k))
                     for j in range(1, jcap + 1) for k in range(1, kcap + 1))
        bracket_hi = 4.0 * steady

    def growth(R1):
        return max_growth(params.with_(R1=float(R1)), jcap, kcap)

    lo, hi = 0.0, bracket_hi
    g_lo = growth(lo)[0]
    g_hi = growth(hi)[0]
    if g_lo >= 0:
        raise NoCrossing("basic state already unstable at R1 = 0")
    if g_hi <= 0:
        raise NoCrossing(f"no instability up to R1 = {bracket_hi:g}")
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if growth(mid)[0] < 0:
            lo = mid
        else:
            hi = mid
    R1c = 0.5 * (lo + hi)
    _, lead, mode = growth(R1c)

    # polish the crossing mode's leading real part to machine precision
    def lead_re(R1):
        A = (mode_matrix_incomp if params.incompressible else mode_matrix_ac)(
            params.with_(R1=float(R1)), mode)
        ev = np.linalg.eigvals(A)
        return float(ev[np.argmin(np.abs(ev - lead))].real)

    x0, x1 = R1c, R1c * (1 + 1e-8)
    f0, f1 = lead_re(x0), lead_re(x1)
    for _ in range(60):
        if f1 == f0:
            break
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        x0, f0, x1 = x1, f1, x2
        f1 = lead_re(x1)
        if abs(f1) < 1e-14 * max(1.0, abs(lead.imag)):
            break
    R1c = x1

    at_crit = params.with_(R1=float(R1c))
    _, lead, mode = max_growth(at_crit, jcap, kcap)
    if abs(lead.imag) <= 1e-8 * max(1.0, abs(lead.real), 1.0):
        raise SteadyOnsetFirst(
            f"real eigenvalue crosses first at R1 = {R1c:.6g} (mode {tuple(mode)})")
    return float(R1c), _crossing_eigdata(at_crit, mode)


# --------------------------------------------------------------------------
# Checks and projections

def eig_leading(op: ops.LinearOperator, count: int):
    """Leading eigenpairs of the generator -op, sorted by descending real
    part (ties by descending imaginary part)."""
    if count > op.dim:
        raise ValueError("count exceeds operator dimension")
    try:
        ev, V = np.linalg.eig(-op.matrix)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise RuntimeError(f"dense eigensolver failed: {exc}") from exc
    order = np.lexsort((-ev.imag, -ev.real))
    return [(complex(ev[i]), V[:, i].copy()) for i in order[:count]]


def transversality_check(ed: EigenData, params: Params | None = None,
                         rel_step: float = 1e-5) -> tuple[float, float]:
    """(finite-difference, formula) values of d Re(lambda_+)/d eta at 0.

    The formula value is -Re(K u_plus, u_plus_adj)_eps; the finite difference
    tracks the critical mode's eigenvalue across R1_crit +- h.
    """
    params = params or ed.params
    h = rel_step * ed.R1_crit
    mode = ed.critical_mode

    def lam_at(R1):
        trial = params.with_(R1=float(R1))
        A = (mode_matrix_incomp if trial.incompressible else mode_matrix_ac)(trial, mode)
        ev = np.linalg.eigvals(A)
        i = int(np.argmin(np.abs(ev - ed.lambda_plus)))
        if abs(ev[i] - ed.lambda_plus) > 0.5 * max(1.0, abs(ed.lambda_plus)):
            raise RuntimeError("eigenpair tracking failed across the stencil")
        return ev[i]

    fd = (lam_at(ed.R1_crit + h).real - lam_at(ed.R1_crit - h).real) / (2 * h)
    return float(fd), float(ed.transversality)


def project_P_eps(u: SpectralField, ed: EigenData):
    """Eigenprojection P_+ u = (u, u_plus_adj)_eps u_plus.

    Returns (coefficient, image field). Operates in system coordinates, so
    the input is reduced (via the Leray projection) when eps = 0.
    """
    params = ed.params
    if ed.system_kind == "reduced":
        vec = ops.field_to_reduced(u)
        idx = ops.reduced_index(params)
    else:
        vec = ops.field_to_vec(u, ops.full_index(params))
        idx = ops.full_index(params)
    W = ops.weight_vector(params, idx)
    coeff = complex(np.sum(W * vec * np.conj(ed.vec_plus_adj)))
    image_vec = coeff * ed.vec_plus
    if ed.system_kind == "reduced":
        image = ops.reduced_to_field(image_vec, params)
    else:
        image = ops.vec_to_field(image_vec, params)
    return coeff, image


def spectral_gap(ed: EigenData, window_factor: float = 2.0) -> float:
    """Measured gap: -max Re over the spectrum at criticality, excluding the
    critical pair, within the window |Im lambda| <= window_factor * a."""
    params = ed.params
    worst = -np.inf
    for mode, A in _generator_blocks(params):
        ev = np.linalg.eigvals(A)
        for lam in ev:
            if abs(lam - ed.lambda_plus) < 1e-8 or abs(lam - np.conj(ed.lambda_plus)) < 1e-8:
                continue
            if abs(lam.imag) <= window_factor * ed.a:
                worst = max(worst, lam.real)
    return float(-worst)
