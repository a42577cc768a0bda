"""Figure rendering for the result directory.

Reads the delimited outputs written by the CLI commands and renders
matplotlib figures to PNG files alongside them. Each figure reads only the
emitted CSV/JSON artifacts; missing inputs are reported by name.
"""

from __future__ import annotations

import json
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


class MissingInputs(Exception):
    def __init__(self, missing: list[str]):
        super().__init__("missing inputs: " + ", ".join(missing))
        self.missing = missing


def _read_csv(path: str):
    """(columns, rows of strings); comment lines are skipped."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    cols = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:] if ln]
    return cols, rows


def _col(cols, rows, name, cast=float):
    i = cols.index(name)
    out = []
    for r in rows:
        try:
            out.append(cast(r[i]))
        except ValueError:
            out.append(np.nan)
    return np.array(out)


def plot_critical_drift(out_dir: str) -> str:
    path = os.path.join(out_dir, "critical.csv")
    cols, rows = _read_csv(path)
    eps = _col(cols, rows, "eps")
    R1 = _col(cols, rows, "R1_crit")
    a = _col(cols, rows, "a")
    base = np.where(eps == 0.0)[0]
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    if len(base):
        b = base[0]
        pos = (eps > 0) & np.isfinite(R1)
        ax.loglog(eps[pos], np.abs(R1[pos] - R1[b]), "o-", label=r"$|R_{1,c}^\epsilon - R_{1,c}|$")
        ax.loglog(eps[pos], np.abs(a[pos] - a[b]), "s-", label=r"$|a^\epsilon - a|$")
        if pos.sum() >= 2:
            e = np.sort(eps[pos])
            ref = np.abs(R1[pos] - R1[b]).max() * (e / e.max()) ** 2
            ax.loglog(e, ref, "k--", lw=0.8, label=r"$\epsilon^2$")
    ax.set_xlabel(r"$\epsilon$")
    ax.set_ylabel("critical-value drift")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = os.path.join(out_dir, "critical_drift.png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def plot_branch(out_dir: str) -> str:
    import glob
    paths = sorted(glob.glob(os.path.join(out_dir, "branch_eps*.json")))
    if not paths:
        raise MissingInputs(["branch_eps*.json"])
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for path in paths:
        with open(path) as fh:
            doc = json.load(fh)
        pts = [q for q in doc["points"] if "error" not in q]
        if not pts:
            continue
        d2 = np.array([q["delta"] ** 2 for q in pts])
        eta = np.array([q["eta"] for q in pts])
        ax.plot(d2, eta, "o-", label=rf"$\epsilon$ = {doc['eps']:g}")
        ax.plot(d2, doc["eta0"] * d2, "k--", lw=0.7)
    ax.set_xlabel(r"$\delta^2$")
    ax.set_ylabel(r"$\eta(\delta)$")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = os.path.join(out_dir, "branch_eta.png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def plot_floquet(out_dir: str) -> str:
    path = os.path.join(out_dir, "floquet.csv")
    cols, rows = _read_csv(path)
    delta = _col(cols, rows, "delta")
    lam_h = _col(cols, rows, "lambda_hill_re")
    lam_m = _col(cols, rows, "lambda_monodromy")
    lam_p = _col(cols, rows, "lambda_pred")
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    d2 = delta ** 2
    ax.plot(d2, lam_h, "o", label=r"$\lambda_\delta$ (Hill)")
    ax.plot(d2, lam_m, "x", ms=9, label=r"$\lambda_\delta$ (monodromy)")
    ax.plot(d2, lam_p, "k--", lw=0.8, label=r"$2\delta^2\tilde\eta_0\,\mathrm{Re}[Kz_0]_+$")
    ax.set_xlabel(r"$\delta^2$")
    ax.set_ylabel(r"Floquet exponent")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = os.path.join(out_dir, "floquet_lambda.png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def plot_energy(out_dir: str) -> str:
    path = os.path.join(out_dir, "simulate.csv")
    cols, rows = _read_csv(path)
    t = _col(cols, rows, "t")
    E = _col(cols, rows, "E_eps")
    D = _col(cols, rows, "D")
    P = _col(cols, rows, "P")
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.2))
    axes[0].semilogy(t, np.maximum(E, 1e-300), lw=0.9)
    axes[0].set_xlabel("t")
    axes[0].set_ylabel(r"$E_\epsilon$")
    axes[1].plot(t, D, lw=0.9, label="D")
    axes[1].plot(t, P, lw=0.9, label="P")
    axes[1].set_xlabel("t")
    axes[1].legend(fontsize=8)
    fig.tight_layout()
    out = os.path.join(out_dir, "energy_trace.png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


PLOTTERS = {
    "critical_drift": (plot_critical_drift, ["critical.csv"]),
    "branch_eta": (plot_branch, ["branch_eps*.json"]),
    "floquet_lambda": (plot_floquet, ["floquet.csv"]),
    "energy_trace": (plot_energy, ["simulate.csv"]),
}


def render_all(out_dir: str) -> list[str]:
    """Render every figure whose inputs exist; error if nothing is renderable,
    naming the missing files."""
    import glob
    made, missing = [], []
    for name, (fn, needs) in sorted(PLOTTERS.items()):
        have = all(glob.glob(os.path.join(out_dir, pat)) for pat in needs)
        if not have:
            missing.extend(needs)
            continue
        made.append(fn(out_dir))
    if not made:
        raise MissingInputs(sorted(set(missing)))
    return made
