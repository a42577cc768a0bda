"""Nonlinear initial-value integration of the convection system.

Second-order IMEX stepping: Crank-Nicolson on the linear operator (the
acoustic stiffness at small eps sits in the implicit block), explicit
Adams-Bashforth-2 on the advection. The eps = 0 path integrates the
solenoidal-reduced coordinates, so the divergence constraint is exact by
construction. Used to cross-validate spectra, branch amplitudes, and
stability verdicts.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .basis import Params, SpectralField, inner_eps, laplace_symbol, measure_weights
from . import operators as ops


class BlowUp(Exception):
    """State norm exceeded the guard threshold."""


@dataclass
class Diagnostics:
    t: float
    energy: float
    dissipation: float
    production: float
    div_norm: float
    bracket_re: float = np.nan
    bracket_im: float = np.nan


@dataclass
class SimState:
    """Integration state; ``vec`` is the coefficient vector in the scheme's
    coordinates, ``prev_N`` the lagged nonlinearity for AB2."""

    params: Params
    t: float
    dt: float
    vec: np.ndarray
    prev_N: np.ndarray | None = None
    diagnostics: list = field(default_factory=list)

    @property
    def field(self) -> SpectralField:
        return _integrator(self.params, self.dt).coords.vec_to_field(self.vec)


def default_dt(params: Params) -> float:
    """Accuracy-motivated cap: resolve the fastest acoustic phase at eps > 0."""
    if params.eps == 0.0:
        return 1e-3
    q2max = laplace_symbol(params.J, params.K, params.alpha).max()
    return min(1e-3, params.eps / (4.0 * np.sqrt(params.Pr * q2max)))


class _Integrator:
    """Cached dense propagator pieces for one (params, dt)."""

    def __init__(self, params: Params, dt: float):
        self.params = params
        self.dt = dt
        self.reduced = params.eps == 0.0
        self.coords = ops.coord_space(params, self.reduced)
        L = (ops.assemble_L_incomp(params) if self.reduced
             else ops.assemble_L(params)).matrix
        dim = L.shape[0]
        S = np.eye(dim) + 0.5 * dt * L
        try:
            self.lu = scipy.linalg.lu_factor(S)
        except scipy.linalg.LinAlgError as exc:  # pragma: no cover
            raise RuntimeError(f"implicit factorization failed: {exc}") from exc
        self.P0 = scipy.linalg.lu_solve(self.lu, np.eye(dim) - 0.5 * dt * L)
        self.S_inv = scipy.linalg.lu_solve(self.lu, np.eye(dim))
        self.W = ops.weight_vector(params, self.coords.idx)
        # exact quadratic-form tables for the energy budget
        q2 = laplace_symbol(params.J, params.K, params.alpha)
        w = measure_weights(params.J, params.K, params.alpha)
        self._diss_w = {v: w[v] * q2 for v in ("w1", "w2", "theta", "psi")}
        self._prod_w = w["theta"]

    def n_of(self, vec: np.ndarray) -> np.ndarray:
        return self.coords.N_batch(vec, vec)

    def energy_budget(self, vec: np.ndarray) -> tuple[float, float, float, float]:
        """(E_eps, dissipation D, production P, ||div w||_2)."""
        p = self.params
        arrs = self.coords.vecs_to_arrays(vec)
        E = 0.5 * float(np.sum(self.W * vec * np.conj(vec)).real)
        if not self.reduced:
            from .basis import _jk_grids
            jg, kg = _jk_grids(p.J, p.K)
            div = p.alpha * jg * arrs["w1"] + np.pi * kg * arrs["w2"]
            w = measure_weights(p.J, p.K, p.alpha)
            div_norm = float(np.sqrt(np.sum(w["phi"] * np.abs(div) ** 2)))
        else:
            div_norm = 0.0
        D = float(np.sum(self._diss_w["w1"] * np.abs(arrs["w1"]) ** 2)
                  + np.sum(self._diss_w["w2"] * np.abs(arrs["w2"]) ** 2)
                  + np.sum(self._diss_w["theta"] * np.abs(arrs["theta"]) ** 2)
                  + p.d * np.sum(self._diss_w["psi"] * np.abs(arrs["psi"]) ** 2))
        P = float(2.0 * p.R1 * np.sum(self._prod_w * arrs["theta"] * arrs["w2"]))
        return E, D, P, div_norm


_INTEGRATORS: dict = {}


def _integrator(params: Params, dt: float) -> _Integrator:
    key = (params, dt)
    if key not in _INTEGRATORS:
        if len(_INTEGRATORS) > 16:
            _INTEGRATORS.clear()
        _INTEGRATORS[key] = _Integrator(params, dt)
    return _INTEGRATORS[key]


def init_state(params: Params, u0: SpectralField, dt: float | None = None) -> SimState:
    dt = dt or default_dt(params)
    integ = _integrator(params, dt)
    return SimState(params=params, t=0.0, dt=dt,
                    vec=integ.coords.field_to_vec(u0).astype(float))


def step(state: SimState) -> SimState:
    """One IMEX step; symmetry classes are preserved exactly by construction."""
    if state.dt <= 0:
        raise ValueError("dt must be positive")
    integ = _integrator(state.params, state.dt)
    Nn = integ.n_of(state.vec)
    if state.prev_N is None:
        expl = -state.dt * Nn
    else:
        expl = -state.dt * (1.5 * Nn - 0.5 * state.prev_N)
    vec = integ.P0 @ state.vec + integ.S_inv @ expl
    E = float(np.sum(integ.W * vec * vec))
    if not np.isfinite(E) or np.sqrt(E) > 1e6:
        raise BlowUp(f"|||u|||_eps = {np.sqrt(max(E, 0)):.3e} at t = {state.t:.4f}")
    return replace(state, t=state.t + state.dt, vec=vec, prev_N=Nn)


def run(state: SimState, nsteps: int, record_every: int = 0,
        observer=None, observe_every: int = 1,
        bracket_with: np.ndarray | None = None) -> SimState:
    """Advance nsteps; optionally record diagnostics / call an observer.

    ``bracket_with`` (a weighted adjoint vector W * conj(u_plus_adj)) adds
    the instantaneous eigenpairing to each diagnostics record.
    """
    integ = _integrator(state.params, state.dt)
    P0, S_inv = integ.P0, integ.S_inv
    n_of = integ.n_of
    vec = state.vec
    prev_N = state.prev_N
    t = state.t
    dt = state.dt
    diags = state.diagnostics
    for n in range(nsteps):
        Nn = n_of(vec)
        if prev_N is None:
            expl = -dt * Nn
        else:
            expl = -dt * (1.5 * Nn - 0.5 * prev_N)
        vec = P0 @ vec + S_inv @ expl
        prev_N = Nn
        t += dt
        if record_every and (n + 1) % record_every == 0:
            E, D, P, dv = integ.energy_budget(vec)
            if not np.isfinite(E) or np.sqrt(2 * E) > 1e6:
                raise BlowUp(f"|||u|||_eps blow-up at t = {t:.4f}")
            rec = Diagnostics(t=t, energy=E, dissipation=D,
                              production=P, div_norm=dv)
            if bracket_with is not None:
                c = complex(np.sum(vec * bracket_with))
                rec.bracket_re, rec.bracket_im = c.real, c.imag
            diags.append(rec)
        if observer is not None and (n + 1) % observe_every == 0:
            observer(t, vec)
    return replace(state, t=t, vec=vec, prev_N=prev_N, diagnostics=diags)


# --------------------------------------------------------------------------
# Orbit cross-validation

@dataclass
class OrbitComparison:
    converged: bool
    period: float
    amplitude: float
    period_pred: float
    amplitude_pred: float
    delta_matched: float
    eta: float
    n_crossings: int
    drift: float

    @property
    def period_error(self) -> float:
        return abs(self.period - self.period_pred) / self.period_pred

    @property
    def amplitude_error(self) -> float:
        return abs(self.amplitude - self.amplitude_pred) / self.amplitude_pred


def _section_amplitude(c_values: np.ndarray, times: np.ndarray):
    """Poincare section Im c = 0 (ascending), Re c > 0: crossing times and
    interpolated |c| there."""
    im = c_values.imag
    re = c_values.real
    idx = np.where((im[:-1] < 0) & (im[1:] >= 0) & (re[1:] > 0))[0]
    t_cross, amps = [], []
    for i in idx:
        f = -im[i] / (im[i + 1] - im[i])
        t_cross.append(times[i] + f * (times[i + 1] - times[i]))
        amps.append(abs((1 - f) * c_values[i] + f * c_values[i + 1]))
    return np.array(t_cross), np.array(amps)


def orbit_section_amplitude(point, system) -> float:
    """|c| of the branch orbit at its own section crossing (same observable
    as the simulation measurement)."""
    u = point.delta * (system.z0() + point.delta * point.orbit_U)
    ts = np.linspace(0.0, 2 * np.pi / system.a_base, 4097)
    m = np.arange(-system.M, system.M + 1)
    phases = np.exp(1j * np.outer(ts * system.a_base, m))
    cs = (phases @ u.arr) @ (system.W * np.conj(system.u_star))
    t_cross, amps = _section_amplitude(cs, ts)
    if len(amps) == 0:
        raise RuntimeError("branch orbit produced no section crossing")
    return float(amps[0])


def simulate_to_orbit(params: Params, ed, system, point,
                      T_max: float = 400.0, seed_amp_factor: float = 0.7,
                      dt: float | None = None, rtol: float = 5e-3,
                      noise: float = 0.0, rng=None):
    """Integrate from a conductive state perturbed along u_plus until the
    Poincare return map settles; compare to the branch prediction.

    ``params`` carries R1 = R1_crit + eta with eta = point.eta (the branch
    point to validate). The predicted period in original time is
    T_a * a / (a_eps (1 + omega)).
    """
    dt = dt or default_dt(params)
    integ = _integrator(params, dt)
    # seed along the real part of the critical eigenfunction
    seed_vec = (seed_amp_factor * point.delta
                * 2.0 * np.real(ed.vec_plus)).astype(float)
    if noise > 0.0 and rng is not None:
        seed_vec = seed_vec + noise * point.delta * rng.standard_normal(len(seed_vec))
    state = SimState(params=params, t=0.0, dt=dt, vec=seed_vec)

    wstar = system.W * np.conj(system.u_star)
    times, cs = [], []

    def observer(t, vec):
        times.append(t)
        cs.append(np.sum(vec * wstar))

    nsteps = int(np.ceil(T_max / dt))
    chunk = max(1, nsteps // 64)
    observe_every = max(1, int(0.01 / dt))   # ~100 samples per time unit
    done = 0
    converged = False
    period = amp = drift = np.nan
    n_cross = 0
    while done < nsteps and not converged:
        state = run(state, min(chunk, nsteps - done), observer=observer,
                    observe_every=observe_every)
        done += min(chunk, nsteps - done)
        t_cross, amps = _section_amplitude(np.array(cs), np.array(times))
        n_cross = len(t_cross)
        if n_cross >= 6:
            periods = np.diff(t_cross)[-4:]
            amps4 = amps[-4:]
            drift = max(np.ptp(periods) / periods.mean(),
                        np.ptp(amps4) / amps4.mean())
            if drift < rtol:
                converged = True
                period = float(periods.mean())
                amp = float(amps4.mean())

    a_eps = system.a_block
    period_pred = (2 * np.pi / system.a_base) * (system.a_base / a_eps) / (1 + point.omega)
    amp_pred = orbit_section_amplitude(point, system)
    return OrbitComparison(
        converged=converged, period=period, amplitude=amp,
        period_pred=float(period_pred), amplitude_pred=amp_pred,
        delta_matched=point.delta, eta=point.eta, n_crossings=n_cross,
        drift=float(drift)), state


def decay_rate(params: Params, ed, T: float, dt: float | None = None,
               seed_amp: float = 1e-4) -> float:
    """Asymptotic energy decay rate 2 Re(lambda) of a subcritical
    linear-regime run.

    Fitted on log |(u(t), u_plus_adj)_eps|, which decays as e^{Re(lambda) t}
    without the 2a-frequency oscillation that contaminates E(t) itself; the
    returned value is twice the fitted slope.
    """
    dt = dt or default_dt(params)
    state = SimState(params=params, t=0.0, dt=dt,
                     vec=(seed_amp * 2.0 * np.real(ed.vec_plus)).astype(float))
    from . import operators as ops
    idx = (ops.reduced_index if params.eps == 0.0 else ops.full_index)(params)
    wstar = ops.weight_vector(params, idx) * np.conj(ed.vec_plus_adj)
    times, cs = [], []

    def observer(t, vec):
        times.append(t)
        cs.append(abs(np.sum(vec * wstar)))

    nsteps = int(np.ceil(T / dt))
    state = run(state, nsteps, observer=observer,
                observe_every=max(1, nsteps // 800))
    ts = np.array(times)
    amp = np.array(cs)
    half = len(ts) // 2
    ts, amp = ts[half:], amp[half:]
    if np.any(amp <= 0):
        raise RuntimeError("pairing hit zero; seed too small")
    return float(2.0 * np.polyfit(ts, np.log(amp), 1)[0])
