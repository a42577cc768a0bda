"""Collocation transforms for dealiased quadratic products.

Products are evaluated pointwise on a grid large enough (2/3 rule) that the
retained modes |j| <= J, |k| <= K of a quadratic product are alias-free:
Nx >= 3J+1 equispaced points on the horizontal period, Ny > 3K/2 midpoints
on (0, 1). Synthesis/analysis are small dense matrix contractions; all
routines accept leading batch dimensions.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .basis import Params, SpectralField, admissible_masks, _jk_grids


class Transform:
    """Cached synthesis/analysis matrices for one (J, K, alpha)."""

    def __init__(self, J: int, K: int, alpha: float):
        self.J, self.K, self.alpha = J, K, alpha
        self.Nx = 3 * J + 1
        self.Ny = (3 * K) // 2 + 2
        L = 2.0 * np.pi / alpha
        x = np.arange(self.Nx) * (L / self.Nx)
        y = (np.arange(self.Ny) + 0.5) / self.Ny
        jj = np.arange(J + 1)
        kk = np.arange(K + 1)

        self.Sx_cos = np.cos(np.outer(x, alpha * jj))          # (Nx, J+1)
        self.Sx_sin = np.sin(np.outer(x, alpha * jj))
        self.Sy_cos = np.cos(np.outer(y, np.pi * kk))          # (Ny, K+1)
        self.Sy_sin = np.sin(np.outer(y, np.pi * kk))

        cx = np.where(jj == 0, 1.0, 2.0) / self.Nx
        cy = np.where(kk == 0, 1.0, 2.0) / self.Ny
        self.Ax_cos = (self.Sx_cos * cx).T                     # (J+1, Nx)
        self.Ax_sin = (self.Sx_sin * (2.0 / self.Nx)).T
        self.Ay_cos = (self.Sy_cos * cy).T                     # (K+1, Ny)
        self.Ay_sin = (self.Sy_sin * (2.0 / self.Ny)).T

        self.cell = (L / self.Nx) * (1.0 / self.Ny)            # quadrature weight

    def _x_mat(self, parity, analysis=False):
        if analysis:
            return self.Ax_cos if parity == "c" else self.Ax_sin
        return self.Sx_cos if parity == "c" else self.Sx_sin

    def _y_mat(self, parity, analysis=False):
        if analysis:
            return self.Ay_cos if parity == "c" else self.Ay_sin
        return self.Sy_cos if parity == "c" else self.Sy_sin

    def synthesize(self, coeff, parity: str):
        """coeff (..., J+1, K+1) -> values (..., Nx, Ny); parity like 'sc'."""
        X = self._x_mat(parity[0])
        Y = self._y_mat(parity[1])
        return np.matmul(np.matmul(X, coeff), Y.T)

    def analyze(self, values, parity: str):
        """values (..., Nx, Ny) -> coeff (..., J+1, K+1); exact on products."""
        X = self._x_mat(parity[0], analysis=True)
        Y = self._y_mat(parity[1], analysis=True)
        return np.matmul(np.matmul(X, values), Y.T)

    def integrate(self, values):
        """Exact integral over the domain of a gridded product."""
        return self.cell * values.sum(axis=(-2, -1))


@lru_cache(maxsize=None)
def get_transform(J: int, K: int, alpha: float) -> Transform:
    return Transform(J, K, alpha)


def _derivative_coeffs(params: Params, c, parity):
    """Return ((d1 coeffs, d1 parity), (d2 coeffs, d2 parity)) for one field."""
    j, k = _jk_grids(params.J, params.K)
    aj = params.alpha * j
    kp = np.pi * k
    px, py = parity
    # d/dx1: sin -> +cos scaled, cos -> -sin scaled
    if px == "s":
        d1 = (aj * c, "c" + py)
    else:
        d1 = (-aj * c, "s" + py)
    # d/dx2: cos -> -sin scaled, sin -> +cos scaled
    if py == "c":
        d2 = (-kp * c, px + "s")
    else:
        d2 = (kp * c, px + "c")
    return d1, d2


def advect(params: Params, w1_coeff, w2_coeff, scalars: list):
    """Dealiased w . grad(f) for a batch of advected fields.

    ``scalars`` is a list of (coeff_array, parity) pairs, each array allowing
    leading batch dims matching w1/w2 (or none). Returns the list of advected
    coefficient arrays, each in the parity class of the input field.
    """
    tr = get_transform(params.J, params.K, params.alpha)
    W1 = tr.synthesize(w1_coeff, "sc")
    W2 = tr.synthesize(w2_coeff, "cs")
    out = []
    for c, parity in scalars:
        (c1, p1), (c2, p2) = _derivative_coeffs(params, c, parity)
        V = W1 * tr.synthesize(c1, p1) + W2 * tr.synthesize(c2, p2)
        out.append(tr.analyze(V, parity))
    return out


def nonlinear_N(u1: SpectralField, u2: SpectralField) -> SpectralField:
    """N(u1, u2) = t(0, w1.grad w2, w1.grad theta2, w1.grad psi2).

    Quadratic convolution via the dealiased collocation grid; the output is
    truncated to (J, K) and lands exactly in the symmetry classes.
    """
    p = u1.params
    if not p.same_truncation(u2.params):
        raise ValueError("mismatched truncations")
    nw1, nw2, nth, nps = advect(
        p, u1.w1, u1.w2,
        [(u2.w1, "sc"), (u2.w2, "cs"), (u2.theta, "cs"), (u2.psi, "cs")])
    masks = admissible_masks(p.J, p.K)
    out = SpectralField.zeros(p, dtype=np.result_type(nw1))
    out.w1 = np.where(masks["w1"], nw1, 0.0)
    out.w2 = np.where(masks["w2"], nw2, 0.0)
    out.theta = np.where(masks["theta"], nth, 0.0)
    out.psi = np.where(masks["psi"], nps, 0.0)
    return out


def bilinear_M(u1: SpectralField, u2: SpectralField) -> SpectralField:
    """Symmetrized advection M(u1, u2) = N(u1, u2) + N(u2, u1)."""
    return nonlinear_N(u1, u2) + nonlinear_N(u2, u1)


def grid_values(u: SpectralField) -> dict:
    """Physical-space samples of every component on the collocation grid."""
    p = u.params
    tr = get_transform(p.J, p.K, p.alpha)
    return {
        "phi": tr.synthesize(u.phi, "cc"),
        "w1": tr.synthesize(u.w1, "sc"),
        "w2": tr.synthesize(u.w2, "cs"),
        "theta": tr.synthesize(u.theta, "cs"),
        "psi": tr.synthesize(u.psi, "cs"),
    }
