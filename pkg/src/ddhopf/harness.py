"""Experiment orchestration: configs, sweeps, fits, and result persistence.

Config files are flat key = value text with one section per command plus a
[common] section (INI syntax). Every output artifact carries a reproducibility
header with the toolkit version and the SHA-256 of the canonicalized config.
Runs are deterministic: fixed seeds, fixed eigenvector pinning, rows sorted
before writing.
"""

from __future__ import annotations

import concurrent.futures
import configparser
import hashlib
import io
import json
import os
from dataclasses import dataclass

import numpy as np

from . import __version__
from .basis import Params, field_to_json
from .spectrum import critical_R1, transversality_check, SteadyOnsetFirst, NoCrossing
from .hopf import (make_system, hopf_first_order, picard_branch,
                   eps_convergence_study, orbit_full_fields)
from .floquet import floquet_analysis
from . import timestepper as ts


DEFAULT_COMMON = {
    "Pr": "7.0",
    "d": "0.1",
    "R2": "3.2",
    "alpha": repr(float(np.pi / np.sqrt(2.0))),
    "J": "12",
    "K": "12",
    "M": "8",
}


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration plus its canonical hash."""

    raw: dict                    # section -> {key: value} (strings)
    sha256: str
    seed: int = 0

    def section(self, name: str) -> dict:
        merged = dict(self.raw.get("common", {}))
        merged.update(self.raw.get(name, {}))
        return merged

    def params(self, name: str, **overrides) -> Params:
        sec = self.section(name)
        kw = dict(
            Pr=float(sec["Pr"]), d=float(sec["d"]), R1=float(sec.get("R1", "1.0")),
            R2=float(sec["R2"]), alpha=float(sec["alpha"]),
            eps=float(sec.get("eps", "0.0")),
            J=int(sec["J"]), K=int(sec["K"]))
        kw.update(overrides)
        return Params(**kw)


def _canonical_text(raw: dict) -> str:
    lines = []
    for section in sorted(raw):
        lines.append(f"[{section}]")
        for key in sorted(raw[section]):
            lines.append(f"{key} = {raw[section][key]}")
    return "\n".join(lines) + "\n"


def load_config(path: str | None, seed: int = 0) -> RunConfig:
    cp = configparser.ConfigParser()
    cp["common"] = dict(DEFAULT_COMMON)
    if path is not None:
        with open(path) as fh:
            cp.read_file(fh)
    raw = {s: dict(cp[s]) for s in cp.sections()}
    raw.setdefault("common", {})
    for k, v in DEFAULT_COMMON.items():
        raw["common"].setdefault(k, v)
    sha = hashlib.sha256(_canonical_text(raw).encode()).hexdigest()
    return RunConfig(raw=raw, sha256=sha, seed=seed)


def _parse_list(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


# --------------------------------------------------------------------------
# Output writers

def header_line(cfg: RunConfig) -> str:
    return f"# ddhopf {__version__} config_sha256={cfg.sha256}"


def write_csv(path: str, cfg: RunConfig, columns: list[str], rows: list[tuple]) -> None:
    buf = io.StringIO()
    buf.write(header_line(cfg) + "\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(x) for x in row) + "\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, (np.floating,)):
        return repr(float(x))
    return str(x)


def write_json(path: str, cfg: RunConfig, payload: dict) -> None:
    doc = {"meta": {"version": __version__, "config_sha256": cfg.sha256}}
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# Scaling fits

@dataclass
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    points: list

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared, "points": self.points}


def loglog_fit(x, y) -> FitResult:
    """Least-squares power-law fit; requires >= 3 positive points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    if len(x) < 3:
        raise ValueError("need at least 3 points for a slope fit")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    fit = slope * lx + intercept
    ss_res = float(np.sum((ly - fit) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return FitResult(slope=float(slope), intercept=float(intercept),
                     r_squared=float(min(max(r2, 0.0), 1.0)),
                     points=[[float(a), float(b)] for a, b in zip(x, y)])


def _pool_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(it) for it in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# Commands; each returns (exit_code, summary dict)

def cmd_critical(cfg: RunConfig, out: str, threads: int = 1) -> int:
    sec = cfg.section("critical")
    eps_list = _parse_list(sec.get("eps_list", "0, 0.1, 0.05, 0.025, 0.0125"))
    scan_cap = int(sec.get("scan_cap", "8"))

    def one(eps):
        try:
            p = cfg.params("critical", eps=float(eps))
            R1c, ed = critical_R1(p, scan_cap=scan_cap)
            fd, formula = transversality_check(ed)
            return dict(eps=float(eps), R1_crit=R1c, a=ed.a,
                        transversality_fd=fd, transversality_formula=formula,
                        critical_mode=f"({ed.critical_mode.j} {ed.critical_mode.k})",
                        status="ok")
        except (SteadyOnsetFirst, NoCrossing) as exc:
            return dict(eps=float(eps), R1_crit=np.nan, a=np.nan,
                        transversality_fd=np.nan, transversality_formula=np.nan,
                        critical_mode="-", status=type(exc).__name__)

    rows = sorted(_pool_map(one, eps_list, threads), key=lambda r: r["eps"])
    cols = ["eps", "R1_crit", "a", "transversality_fd", "transversality_formula",
            "critical_mode", "status"]
    write_csv(os.path.join(out, "critical.csv"), cfg, cols,
              [tuple(r[c] for c in cols) for r in rows])

    fits = {}
    base = next((r for r in rows if r["eps"] == 0.0 and r["status"] == "ok"), None)
    good = [r for r in rows if r["eps"] > 0 and r["status"] == "ok"]
    if base is not None and len(good) >= 3:
        try:
            fits["R1_drift"] = loglog_fit(
                [r["eps"] for r in good],
                [abs(r["R1_crit"] - base["R1_crit"]) for r in good]).as_dict()
            fits["a_drift"] = loglog_fit(
                [r["eps"] for r in good],
                [abs(r["a"] - base["a"]) for r in good]).as_dict()
        except ValueError:
            pass
    write_json(os.path.join(out, "critical.json"), cfg,
               {"rows": rows, "fits": fits})
    return 0 if all(r["status"] == "ok" for r in rows) else 2


def cmd_sweep_eps(cfg: RunConfig, out: str, threads: int = 1) -> int:
    """(eps, R2) grid of critical values; the R2 scan locates the window."""
    sec = cfg.section("sweep-eps")
    eps_list = _parse_list(sec.get("eps_list", "0, 0.05"))
    R2_list = _parse_list(sec.get("r2_list", sec.get("R2_list", "2.5, 3.2, 4.0")))

    def one(item):
        eps, R2 = item
        try:
            p = cfg.params("sweep-eps", eps=float(eps), R2=float(R2))
            R1c, ed = critical_R1(p)
            fd, formula = transversality_check(ed)
            return (float(eps), float(R2), R1c, ed.a, fd, formula, "ok")
        except (SteadyOnsetFirst, NoCrossing) as exc:
            return (float(eps), float(R2), np.nan, np.nan, np.nan, np.nan,
                    type(exc).__name__)

    items = [(e, r2) for e in eps_list for r2 in R2_list]
    rows = sorted(_pool_map(one, items, threads))
    write_csv(os.path.join(out, "sweep.csv"), cfg,
              ["eps", "R2", "R1_crit", "a", "transversality_fd",
               "transversality_formula", "status"], rows)
    return 0 if all(r[-1] == "ok" for r in rows) else 2


def cmd_branch(cfg: RunConfig, out: str, threads: int = 1) -> int:
    sec = cfg.section("branch")
    eps_list = _parse_list(sec.get("eps_list", "0, 0.1, 0.05, 0.025"))
    delta_list = _parse_list(sec.get("delta_list", "0.025, 0.05, 0.1, 0.2"))
    tol = float(sec.get("tol", "1e-12"))
    max_iter = int(sec.get("max_iter", "80"))
    M = int(sec["M"])
    dump = sec.get("dump_orbits", "last")
    gap_delta = float(sec.get("gap_delta", repr(delta_list[-2] if len(delta_list) > 1
                                                else delta_list[-1])))

    partial = False
    summary = {}
    for eps in eps_list:
        p = cfg.params("branch", eps=float(eps))
        try:
            _, ed = critical_R1(p)
            system = make_system(ed, M=M)
            fo = hopf_first_order(system)
        except Exception as exc:
            summary[repr(float(eps))] = {"error": str(exc)}
            partial = True
            continue
        points = []
        for delta in delta_list:
            try:
                pt = picard_branch(float(delta), system, first_order=fo,
                                   tol=tol, max_iter=max_iter)
                points.append({
                    "delta": pt.delta, "eta": pt.eta, "omega": pt.omega,
                    "eta_tilde": pt.eta_tilde, "omega_tilde": pt.omega_tilde,
                    "residual": pt.residual, "iterations": pt.iterations,
                    "harmonic_energies": [float(e) for e in pt.harmonic_energies],
                })
                if dump == "all" or (dump == "last" and delta == delta_list[-1]):
                    fields = orbit_full_fields(pt, system)
                    stack = {str(m): field_to_json(fields[m]) for m in fields}
                    write_json(os.path.join(
                        out, f"orbit_eps{eps:g}_delta{delta:g}.json"), cfg,
                        {"harmonics": stack, "a_base": system.a_base,
                         "delta": pt.delta, "eta": pt.eta, "omega": pt.omega})
            except Exception as exc:
                points.append({"delta": float(delta), "error": str(exc)})
                partial = True
        fit = None
        ok_pts = [q for q in points if "error" not in q]
        if len(ok_pts) >= 3:
            try:
                fit = loglog_fit([q["delta"] for q in ok_pts],
                                 [abs(q["eta_tilde"] - fo.eta0) for q in ok_pts]
                                 ).as_dict()
            except ValueError:
                fit = None
        write_json(os.path.join(out, f"branch_eps{eps:g}.json"), cfg,
                   {"eps": float(eps), "R1_crit": ed.R1_crit, "a": ed.a,
                    "eta0": fo.eta0, "omega0": fo.omega0,
                    "points": points, "eta_tilde_error_fit": fit})
        summary[repr(float(eps))] = {"eta0": fo.eta0, "n_points": len(ok_pts)}

    # singular-limit gap table
    pos_eps = [e for e in eps_list if e > 0]
    if 0.0 in eps_list and len(pos_eps) >= 2:
        rows = eps_convergence_study(gap_delta, pos_eps, cfg.params("branch", eps=0.0),
                                     M=M, tol=tol)
        cols = ["eps", "eta_gap", "omega_gap", "velocity_gap", "theta_gap",
                "psi_gap", "pressure_gap", "y_gap", "error"]
        write_csv(os.path.join(out, "branch_gaps.csv"), cfg, cols,
                  [(r.eps, r.eta_gap, r.omega_gap, r.velocity_gap, r.theta_gap,
                    r.psi_gap, r.pressure_gap, r.y_gap, r.error) for r in rows])
        good = [r for r in rows if r.error == ""]
        fits = {}
        if len(good) >= 3:
            for name in ("eta_gap", "omega_gap", "velocity_gap", "pressure_gap"):
                try:
                    fits[name] = loglog_fit([r.eps for r in good],
                                            [getattr(r, name) for r in good]).as_dict()
                except ValueError:
                    pass
        write_json(os.path.join(out, "branch_gaps.json"), cfg,
                   {"delta": gap_delta, "fits": fits})
        partial = partial or any(r.error != "" for r in rows)

    write_json(os.path.join(out, "branch_summary.json"), cfg, {"systems": summary})
    return 2 if partial else 0


def cmd_floquet(cfg: RunConfig, out: str, threads: int = 1) -> int:
    sec = cfg.section("floquet")
    eps = float(sec.get("eps", "0.1"))
    delta_list = _parse_list(sec.get("delta_list", "0.06, 0.09, 0.135, 0.2"))
    nsteps = int(sec.get("nsteps", "8192"))
    M = int(sec["M"])
    M_h = int(sec.get("hill_m", sec.get("hill_M", str(min(M, 6)))))
    tol = float(sec.get("tol", "1e-13"))

    p = cfg.params("floquet", eps=eps)
    _, ed = critical_R1(p)
    system = make_system(ed, M=M)
    fo = hopf_first_order(system)

    rows = []
    partial = False
    for delta in delta_list:
        try:
            pt = picard_branch(float(delta), system, first_order=fo, tol=tol)
            fr = floquet_analysis(pt, system, fo, nsteps=nsteps, M_h=M_h)
            rows.append((fr.eps, fr.delta, fr.lambda_hill.real, fr.lambda_hill.imag,
                         fr.lambda_monodromy, fr.lambda_pred, fr.trivial_defect,
                         fr.kappa1, fr.Lambda_rest, fr.trivial_overlap,
                         "yes" if fr.stable else "no", "ok"))
        except Exception as exc:
            rows.append((eps, float(delta), np.nan, np.nan, np.nan, np.nan,
                         np.nan, np.nan, np.nan, np.nan, "-", str(exc)))
            partial = True

    cols = ["eps", "delta", "lambda_hill_re", "lambda_hill_im", "lambda_monodromy",
            "lambda_pred", "trivial_defect", "kappa1", "Lambda_rest",
            "trivial_overlap", "stable", "status"]
    write_csv(os.path.join(out, "floquet.csv"), cfg, cols, rows)

    good = [r for r in rows if r[-1] == "ok"]
    fits = {}
    if len(good) >= 3:
        try:
            fits["lambda_gap"] = loglog_fit(
                [r[1] for r in good],
                [abs(r[2] - r[5]) for r in good]).as_dict()
        except ValueError:
            pass
    write_json(os.path.join(out, "floquet.json"), cfg,
               {"eps": eps, "eta0": fo.eta0, "fits": fits})
    return 2 if partial else 0


def cmd_simulate(cfg: RunConfig, out: str, threads: int = 1) -> int:
    sec = cfg.section("simulate")
    eps = float(sec.get("eps", "0.1"))
    delta = float(sec.get("delta", "0.3"))
    mode = sec.get("mode", "super")
    T_max = float(sec.get("t_max", sec.get("T_max", "400")))
    M = int(sec["M"])
    seed_amp = float(sec.get("seed_amp", "0.7"))
    noise = float(sec.get("noise", "0.0"))
    record_every = int(sec.get("record_every", "64"))

    p = cfg.params("simulate", eps=eps)
    _, ed = critical_R1(p)
    system = make_system(ed, M=M)
    fo = hopf_first_order(system)
    rng = np.random.default_rng(cfg.seed)

    summary: dict = {"mode": mode, "eps": eps}
    if mode == "super":
        pt = picard_branch(delta, system, first_order=fo)
        p_sim = ed.params.with_(R1=ed.R1_crit + pt.eta)
        comp, _ = ts.simulate_to_orbit(p_sim, ed, system, pt, T_max=T_max,
                                       seed_amp_factor=seed_amp,
                                       noise=noise, rng=rng)
        summary.update(converged=comp.converged, period=comp.period,
                       period_pred=comp.period_pred, amplitude=comp.amplitude,
                       amplitude_pred=comp.amplitude_pred,
                       period_error=comp.period_error,
                       amplitude_error=comp.amplitude_error,
                       eta=comp.eta, delta=comp.delta_matched)
        code = 0 if comp.converged else 2
    else:
        eta_sub = -abs(float(sec.get("eta_sub", "0.02")))
        p_sim = ed.params.with_(R1=ed.R1_crit + eta_sub)
        rate = ts.decay_rate(p_sim, ed, T=T_max)
        expect = 2.0 * ed.transversality * eta_sub
        summary.update(decay_rate=rate, decay_expected=expect,
                       ratio=rate / expect, eta=eta_sub)
        code = 0

    # diagnostics trace: deterministic short run from the eigenfunction seed
    st = ts.init_state(p_sim, system.vec_to_field(
        (0.1 * delta * 2 * np.real(ed.vec_plus)).astype(float)))
    wstar = system.W * np.conj(system.u_star)
    n = int(sec.get("diag_steps", "4000"))
    st = ts.run(st, n, record_every=record_every, bracket_with=wstar)
    rows = [(d.t, d.energy, d.dissipation, d.production, d.div_norm,
             d.bracket_re, d.bracket_im) for d in st.diagnostics]
    write_csv(os.path.join(out, "simulate.csv"), cfg,
              ["t", "E_eps", "D", "P", "div_norm", "bracket_plus_re",
               "bracket_plus_im"], rows)
    write_json(os.path.join(out, "simulate.json"), cfg, {"summary": summary})
    write_json(os.path.join(out, "restart.json"), cfg,
               {"field": field_to_json(st.field), "t": st.t})
    return code
