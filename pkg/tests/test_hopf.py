import numpy as np
import pytest

from ddhopf.basis import Params, inner_eps
from ddhopf.operators import apply_L_direct, coord_space
from ddhopf.spectrum import critical_R1
from ddhopf.hopf import (TimePeriodicField, tp_inner, tp_norm, make_system,
                         solve_B_omega, apply_B_omega, hopf_first_order,
                         picard_branch, branch_residual, orbit_full_fields,
                         recover_pressure, eps_convergence_study,
                         harmonic_energies, NoContraction)

from conftest import strong_params, random_field


@pytest.fixture(scope="module")
def sys1(strong_systems):
    return strong_systems[1][0]


@pytest.fixture(scope="module")
def fo1(strong_systems):
    return strong_systems[1][1]


@pytest.fixture(scope="module")
def sys0(strong_systems):
    return strong_systems[0][0]


@pytest.fixture(scope="module")
def fo0(strong_systems):
    return strong_systems[0][1]


def random_tp(system, rng, real=True):
    u = TimePeriodicField.zeros(system.dim, system.M, system.a_base)
    for m in range(0, system.M + 1):
        v = rng.standard_normal(system.dim) + 1j * rng.standard_normal(system.dim)
        u.set_h(m, v)
        if m > 0:
            u.set_h(-m, np.conj(v) if real else
                    rng.standard_normal(system.dim) + 0j)
    if real:
        u.set_h(0, np.real(u.h(0)) + 0j)
    return u


class TestTpInner:
    def test_z_pairings(self, sys1):
        """<z+, z+*> = 1 and <z-, z+*> = 0 by harmonic orthogonality."""
        zp = TimePeriodicField.zeros(sys1.dim, sys1.M, sys1.a_base)
        zp.set_h(1, sys1.u_plus)
        zm = TimePeriodicField.zeros(sys1.dim, sys1.M, sys1.a_base)
        zm.set_h(-1, np.conj(sys1.u_plus))
        zps = TimePeriodicField.zeros(sys1.dim, sys1.M, sys1.a_base)
        zps.set_h(1, sys1.u_star)
        assert tp_inner(zp, zps, sys1.W) == pytest.approx(1.0, abs=1e-12)
        assert abs(tp_inner(zm, zps, sys1.W)) <= 1e-14

    def test_positive(self, sys1, rng):
        u = random_tp(sys1, rng)
        val = tp_inner(u, u, sys1.W)
        assert abs(val.imag) <= 1e-12 * val.real
        assert val.real >= 0

    def test_mismatch(self, sys1):
        u = TimePeriodicField.zeros(sys1.dim, sys1.M, sys1.a_base)
        v = TimePeriodicField.zeros(sys1.dim, sys1.M + 1, sys1.a_base)
        with pytest.raises(ValueError):
            tp_inner(u, v, sys1.W)


class TestBrackets:
    def test_lemma61_identities(self, sys1):
        z0 = sys1.z0()
        assert sys1.bracket_plus(z0) == pytest.approx(1.0, abs=1e-12)
        assert sys1.bracket_plus(z0.deriv()) == pytest.approx(
            1j * sys1.a_base, abs=1e-10)

    def test_Nz0_bracket_vanishes(self, sys1):
        z0 = sys1.z0()
        Nz0 = sys1.tp_N(z0, z0)
        assert abs(sys1.bracket_plus(Nz0)) <= 1e-12
        support = [m for m in range(-sys1.M, sys1.M + 1)
                   if np.abs(Nz0.h(m)).max() > 1e-13]
        assert set(support) <= {-2, 0, 2}

    def test_commutation(self, sys1, rng):
        """[dt u]_+ = i a [u]_+ exactly in harmonic arithmetic."""
        u = random_tp(sys1, rng)
        lhs = sys1.bracket_plus(u.deriv())
        rhs = 1j * sys1.a_base * sys1.bracket_plus(u)
        assert lhs == pytest.approx(rhs, rel=1e-13)

    def test_conjugate_pair_for_real_fields(self, sys1, rng):
        u = random_tp(sys1, rng)
        plus = sys1.bracket_plus(u)
        minus = np.sum(sys1.W * u.h(-1) * np.conj(np.conj(sys1.u_star)))
        assert minus == pytest.approx(np.conj(plus), rel=1e-12)


class TestProjectionAlgebra:
    def test_PQ_identities(self, sys1, rng):
        u = random_tp(sys1, rng)
        Qu = sys1.project_Q(u)
        QQu = sys1.project_Q(Qu)
        assert np.abs(QQu.arr - Qu.arr).max() <= 1e-10 * max(1.0, np.abs(Qu.arr).max())
        assert abs(sys1.bracket_plus(Qu)) <= 1e-10
        # P = I - Q is rank-two on harmonics +-1
        Pu = u - Qu
        for m in range(-sys1.M, sys1.M + 1):
            if abs(m) != 1:
                assert np.abs(Pu.h(m)).max() == 0.0


class TestKernelAndSolve:
    def test_kernel_identity(self, sys1):
        z0 = sys1.z0()
        Bz = apply_B_omega(z0, 0.0, sys1)
        assert sys1.tp_norm_eps(Bz) <= 1e-9 * sys1.tp_norm_eps(z0)

    def test_zero_rhs(self, sys1):
        F = TimePeriodicField.zeros(sys1.dim, sys1.M, sys1.a_base)
        U = solve_B_omega(F, 0.1, sys1)
        assert np.abs(U.arr).max() == 0.0

    def test_quadratic_rhs_support(self, sys1):
        """F = M(z0, dt z0) lands on harmonics {0, +-2}; so does the solution."""
        z0 = sys1.z0()
        F = sys1.tp_M(z0, z0.deriv())
        U = solve_B_omega(F, 0.0, sys1)
        for m in range(-sys1.M, sys1.M + 1):
            if m not in (-2, 0, 2):
                assert np.abs(U.h(m)).max() <= 1e-12

    @pytest.mark.parametrize("omega", [0.0, 0.05, -0.08])
    def test_residual_and_constraint(self, sys1, rng, omega):
        F = random_tp(sys1, rng)
        U = solve_B_omega(F, omega, sys1)
        QF = sys1.project_Q(F)
        res = apply_B_omega(U, omega, sys1) - QF
        assert sys1.tp_norm_eps(res) <= 1e-10 * sys1.tp_norm_eps(F)
        assert abs(sys1.bracket_plus(U)) <= 1e-10

    def test_omega_bound(self, sys1, rng):
        F = random_tp(sys1, rng)
        with pytest.raises(ValueError):
            solve_B_omega(F, 0.3, sys1)


class TestFirstOrder:
    def test_range_condition_and_signs(self, sys1, fo1):
        assert abs(sys1.bracket_plus(fo1.U0)) <= 1e-10
        # Re[K z0]_+ < 0 at a Hopf point (equals minus the transversality)
        assert fo1.bracket_Kz0.real < 0
        assert fo1.bracket_Kz0.real == pytest.approx(-sys1.ed.transversality,
                                                     rel=1e-12)
        assert fo1.eta0 > 0

    def test_622_residual(self, sys1, fo1):
        z0 = sys1.z0()
        res = apply_B_omega(fo1.U0, 0.0, sys1) + sys1.tp_N(z0, z0)
        assert sys1.tp_norm_eps(res) <= 1e-12

    def test_incompressible_counterpart(self, sys0, fo0):
        assert fo0.eta0 > 0
        assert abs(sys0.bracket_plus(fo0.U0)) <= 1e-10

    def test_eta0_eps_convergence(self, strong_systems):
        """eta0^eps -> eta0 as eps -> 0; the gap obeys the O(eps) bound
        (the measured decay is quadratic: the truncated system is even in
        eps, so the paper's linear bound is satisfied a fortiori)."""
        from ddhopf.hopf import make_system, hopf_first_order
        (sys0, fo0), _ = strong_systems
        eps_list = [0.1, 0.05, 0.025]
        gaps = []
        for eps in eps_list:
            _, ed = critical_R1(strong_params(eps=eps))
            fo = hopf_first_order(make_system(ed, M=6))
            gaps.append(abs(fo.eta0 - fo0.eta0))
        slope = np.polyfit(np.log(eps_list), np.log(gaps), 1)[0]
        assert slope >= 0.85      # at least the paper's O(eps)
        assert gaps[-1] < gaps[0]


class TestPicard:
    def test_delta0_fixed_point(self, sys1, fo1):
        pt = picard_branch(0.0, sys1, first_order=fo1)
        assert pt.iterations == 0
        assert pt.eta_tilde == fo1.eta0
        assert pt.residual <= 1e-10

    def test_convergence_and_residual(self, sys1, fo1):
        pt = picard_branch(0.1, sys1, first_order=fo1, tol=1e-13)
        assert pt.residual <= 1e-10
        assert pt.bracket_defect <= 1e-10
        assert pt.eta > 0

    def test_contraction_scales_with_delta(self, sys1, fo1):
        r_small = max(picard_branch(0.05, sys1, first_order=fo1).contraction)
        r_big = max(picard_branch(0.1, sys1, first_order=fo1).contraction)
        assert r_big > r_small
        assert r_big / r_small == pytest.approx(2.0, abs=0.8)

    def test_eta_even_in_delta(self, sys1, fo1):
        """Half-period shift symmetry: the branch data are even in delta."""
        pp = picard_branch(0.09, sys1, first_order=fo1, tol=1e-13)
        pm = picard_branch(-0.09, sys1, first_order=fo1, tol=1e-13)
        assert pm.eta_tilde == pytest.approx(pp.eta_tilde, rel=1e-12)
        assert pm.omega_tilde == pytest.approx(pp.omega_tilde, rel=1e-12)

    def test_eta_tilde_limit(self, sys1, fo1):
        """eta(delta)/delta^2 -> eta0 with a clean power-law error."""
        deltas = np.array([0.04, 0.06, 0.09, 0.135])
        gaps = [abs(picard_branch(float(d), sys1, first_order=fo1,
                                  tol=1e-13).eta_tilde - fo1.eta0)
                for d in deltas]
        c = np.polyfit(np.log(deltas), np.log(gaps), 1)
        slope = c[0]
        fit = np.polyval(c, np.log(deltas))
        r2 = 1 - np.sum((np.log(gaps) - fit) ** 2) / np.sum(
            (np.log(gaps) - np.mean(np.log(gaps))) ** 2)
        assert r2 >= 0.98
        assert slope >= 0.9       # error vanishes at least linearly
        assert slope == pytest.approx(2.0, abs=0.25)  # measured: even in delta

    def test_time_shift_family(self, sys1, fo1):
        """Shifted orbits solve the same equation (residual stays small)."""
        from ddhopf.hopf import orbit_residual
        pt = picard_branch(0.1, sys1, first_order=fo1, tol=1e-13)
        u = pt.delta * (sys1.z0() + pt.delta * pt.orbit_U)
        for tau in (0.3, 1.1):
            res = orbit_residual(sys1, pt.eta, pt.omega, u.shift(tau))
            assert res <= 1e-10

    def test_no_contraction_error(self, sys1, fo1):
        with pytest.raises(NoContraction):
            picard_branch(0.45, sys1, first_order=fo1, max_iter=200)

    def test_delta_max_guard(self, sys1, fo1):
        with pytest.raises(ValueError):
            picard_branch(0.6, sys1, first_order=fo1)

    def test_last_harmonic_share(self, sys1, fo1):
        pt = picard_branch(0.1, sys1, first_order=fo1)
        e = pt.harmonic_energies
        assert (e[0] + e[-1]) / e.sum() < 1e-8


class TestPressureRecovery:
    def test_zero_orbit(self, sys0):
        fields = {m: sys0.vec_to_field(np.zeros(sys0.dim, dtype=complex))
                  for m in range(-sys0.M, sys0.M + 1)}
        out = recover_pressure(fields, sys0, 0.0, 0.0)
        for m, f in out.items():
            assert np.abs(f.phi).max() == 0.0

    def test_momentum_residual_gradient_free(self, sys0, fo0):
        """After recovery the full momentum residual vanishes: both the
        solenoidal part (orbit equation) and the gradient part (pressure)."""
        pt = picard_branch(0.1, sys0, first_order=fo0, tol=1e-13)
        fields = orbit_full_fields(pt, sys0)
        p = sys0.params
        from ddhopf.basis import laplace_symbol, _jk_grids
        from ddhopf.transforms import nonlinear_N
        import itertools
        q2 = laplace_symbol(p.J, p.K, p.alpha)
        jg, kg = _jk_grids(p.J, p.K)
        a = sys0.a_base
        # harmonics of N on the full fields via collocation in time
        M = sys0.M
        Nt = 3 * M + 1
        mg = np.arange(-M, M + 1)
        F = np.exp(2j * np.pi * np.outer(np.arange(Nt), mg) / Nt)
        scale = 0.0
        resid = 0.0
        n_harm = {}
        # assemble N harmonics by pairwise convolution (independent path)
        for mi in mg:
            acc1 = np.zeros_like(fields[0].w1)
            acc2 = np.zeros_like(fields[0].w1)
            for p1 in mg:
                p2 = mi - p1
                if abs(p2) > M:
                    continue
                nf = nonlinear_N(fields[int(p1)], fields[int(p2)])
                acc1 = acc1 + nf.w1
                acc2 = acc2 + nf.w2
            n_harm[int(mi)] = (acc1, acc2)
        R1 = p.R1 + pt.eta
        for m in mg:
            f = fields[int(m)]
            n1, n2 = n_harm[int(m)]
            g1, g2 = -p.alpha * jg * f.phi, -np.pi * kg * f.phi
            r1 = ((1 + pt.omega) * 1j * m * a * f.w1 + p.Pr * g1
                  + p.Pr * q2 * f.w1 + n1)
            r2 = ((1 + pt.omega) * 1j * m * a * f.w2 + p.Pr * g2
                  + p.Pr * q2 * f.w2 - p.Pr * R1 * f.theta
                  + p.Pr * p.R2 * f.psi + n2)
            resid = max(resid, np.abs(r1).max(), np.abs(r2).max())
            scale = max(scale, np.abs(f.w1).max(), np.abs(f.w2).max())
        assert resid <= 1e-9 * max(1.0, scale)

    def test_linear_pressure_limit(self, sys0, fo0):
        """phi_delta / delta -> p0 = pressure of the critical eigenfunction."""
        p0_field = sys0.ed.u_plus.phi            # associated pressure of u_+
        gaps = []
        deltas = [0.05, 0.025, 0.0125]
        for d in deltas:
            pt = picard_branch(d, sys0, first_order=fo0, tol=1e-13)
            fields = orbit_full_fields(pt, sys0)
            # harmonic 1 of phi_delta / delta should approach phi_+
            gaps.append(np.abs(fields[1].phi / d - p0_field).max())
        assert gaps[-1] < gaps[0]
        slope = np.polyfit(np.log(deltas), np.log(gaps), 1)[0]
        assert slope >= 1.5      # quadratic in delta by the shift symmetry


class TestEpsStudy:
    def test_gap_table_and_paper_bounds(self):
        p = strong_params()
        rows = eps_convergence_study(0.08, [0.1, 0.05, 0.025], p, M=6)
        assert all(r.error == "" for r in rows)
        eps = np.array([r.eps for r in rows])

        def slope(vals):
            return np.polyfit(np.log(eps), np.log(vals), 1)[0]

        # gaps vanish at least linearly in eps (paper: <= C eps delta^2 etc.)
        assert slope([r.eta_gap for r in rows]) >= 0.85
        assert slope([r.omega_gap for r in rows]) >= 0.85
        assert slope([r.velocity_gap for r in rows]) >= 0.85
        # pressure gap is bounded (no decay required)
        assert max(r.pressure_gap for r in rows) < 1.0

    def test_row_failure_recorded_not_fatal(self):
        # an invalid eps fails its own row; the good row still computes
        p = strong_params()
        rows = eps_convergence_study(0.08, [-0.5, 0.1], p, M=6)
        assert rows[0].error != ""
        assert rows[1].error == "" and np.isfinite(rows[1].eta_gap)
