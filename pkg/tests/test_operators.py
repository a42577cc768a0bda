import numpy as np
import pytest

from ddhopf.basis import (SpectralField, ModeIndex, admissible_masks,
                          inner_eps, bu_inner, divergence, laplace_symbol,
                          helmholtz_project)
from ddhopf.operators import (assemble_L, assemble_L_adjoint, assemble_L_incomp,
                              apply_K, apply_L_direct, field_to_vec, vec_to_field,
                              full_index, reduced_index, weight_vector, vec_inner,
                              K_matrix, reduced_to_field, field_to_reduced,
                              export_matrix_market)
from ddhopf.transforms import nonlinear_N, bilinear_M, get_transform, grid_values
from ddhopf.spectrum import mode_matrix_incomp, mode_matrix_ac

from conftest import make_params, random_field


class TestAssembleL:
    def test_requires_positive_eps(self):
        with pytest.raises(ValueError):
            assemble_L(make_params(eps=0.0))

    def test_theta_block_decouples_without_rayleigh(self):
        p = make_params(eps=0.1, R1=0.0, R2=0.0, J=3, K=3)
        L = assemble_L(p)
        idx = full_index(p)
        q2 = laplace_symbol(p.J, p.K, p.alpha)
        for i, (var, (j, k)) in enumerate(idx.table):
            if var == "theta":
                row = L.matrix[i].copy()
                assert row[i] == pytest.approx(q2[j, k], rel=1e-14)
                row[i] = 0.0
                assert np.all(row == 0.0)

    def test_mode_block_matches_analytic(self):
        p = make_params(eps=0.07, R1=25.0)
        L = assemble_L(p)
        B = L.mode_block(ModeIndex(1, 1))
        A = mode_matrix_ac(p, ModeIndex(1, 1))
        assert np.abs(B + A).max() < 1e-14 * max(1.0, np.abs(A).max())

    def test_matvec_matches_direct_action(self, rng):
        p = make_params(eps=0.05, R1=25.0, J=5, K=4)
        L = assemble_L(p)
        idx = full_index(p)
        for _ in range(5):
            u = random_field(p, rng)
            x = field_to_vec(u, idx)
            via_matrix = vec_to_field(L.matvec(x), p, idx)
            direct = apply_L_direct(p, u)
            for v in ("phi", "w1", "w2", "theta", "psi"):
                a, b = getattr(via_matrix, v), getattr(direct, v)
                scale = max(1.0, np.abs(b).max())
                assert np.abs(a - b).max() <= 1e-13 * scale


class TestAdjoint:
    @pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
    def test_adjoint_identity(self, rng, eps):
        p = make_params(eps=eps, R1=25.0, J=4, K=4)
        L = assemble_L(p)
        Ls = assemble_L_adjoint(p)
        idx = full_index(p)
        W = weight_vector(p, idx)
        for _ in range(100):
            u = random_field(p, rng, dtype=complex)
            v = random_field(p, rng, dtype=complex)
            x, y = field_to_vec(u, idx), field_to_vec(v, idx)
            lhs = vec_inner(L.matvec(x), y, W)
            rhs = vec_inner(x, Ls.matvec(y), W)
            nu = np.sqrt(vec_inner(x, x, W).real)
            nv = np.sqrt(vec_inner(y, y, W).real)
            assert abs(lhs - rhs) <= 1e-12 * nu * nv

    def test_R2_sign_flip(self):
        p = make_params(eps=0.1, R1=25.0, J=3, K=3)
        L = assemble_L(p)
        Ls = assemble_L_adjoint(p)
        idx = full_index(p)
        ipsi = idx.pos("psi", 1, 1)
        iw2 = idx.pos("w2", 1, 1)
        assert L.matrix[ipsi, iw2] == pytest.approx(-p.R2)
        assert Ls.matrix[ipsi, iw2] == pytest.approx(+p.R2)

    def test_symmetric_diffusion_at_zero_rayleigh(self):
        """With R1 = R2 = 0, L* equals L with the div/grad blocks negated."""
        p = make_params(eps=0.1, R1=0.0, R2=0.0, J=3, K=3)
        L = assemble_L(p).matrix
        Ls = assemble_L_adjoint(p).matrix
        idx = full_index(p)
        flipped = L.copy()
        for i, (vi, _) in enumerate(idx.table):
            for jdx, (vj, _) in enumerate(idx.table):
                if (vi == "phi") != (vj == "phi"):
                    flipped[i, jdx] = -flipped[i, jdx]
        assert np.abs(flipped - Ls).max() == 0.0

    def test_energy_quadratic_form(self, rng):
        """(L u, u)_eps = |grad w|^2 + |grad theta|^2 + d |grad psi|^2
        - 2 R1 (theta, w2): pressure and R2 terms cancel."""
        p = make_params(eps=0.2, R1=25.0, J=4, K=4)
        L = assemble_L(p)
        idx = full_index(p)
        W = weight_vector(p, idx)
        q2 = laplace_symbol(p.J, p.K, p.alpha)
        from ddhopf.basis import measure_weights, component_inner
        mw = measure_weights(p.J, p.K, p.alpha)
        for _ in range(100):
            u = random_field(p, rng)
            x = field_to_vec(u, idx)
            lhs = vec_inner(L.matvec(x), x, W).real
            grad_w = np.sum(mw["w1"] * q2 * u.w1 ** 2) + np.sum(mw["w2"] * q2 * u.w2 ** 2)
            grad_th = np.sum(mw["theta"] * q2 * u.theta ** 2)
            grad_ps = np.sum(mw["psi"] * q2 * u.psi ** 2)
            prod = np.sum(mw["theta"] * u.theta * u.w2)
            rhs = grad_w + grad_th + p.d * grad_ps - 2 * p.R1 * prod
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


class TestIncompressible:
    def test_mode_block_matches_analytic(self):
        p = make_params(R1=25.0)
        Li = assemble_L_incomp(p)
        B = Li.mode_block(ModeIndex(1, 1))
        A = mode_matrix_incomp(p, ModeIndex(1, 1))
        assert np.abs(B + A).max() < 1e-14 * np.abs(A).max()

    def test_diffusion_spectrum_at_zero_rayleigh(self):
        p = make_params(R1=0.0, R2=0.0, J=3, K=3)
        Li = assemble_L_incomp(p)
        for mode in [ModeIndex(1, 1), ModeIndex(2, 3)]:
            q2 = (p.alpha * mode.j) ** 2 + (np.pi * mode.k) ** 2
            ev = np.sort(np.linalg.eigvals(Li.mode_block(mode)).real)
            expect = np.sort([p.Pr * q2, q2, p.d * q2])
            assert np.allclose(ev, expect, rtol=1e-13)

    def test_buoyancy_projection_factor(self):
        p = make_params(R1=25.0, J=4, K=4)
        Li = assemble_L_incomp(p)
        idx = reduced_index(p)
        for (j, k) in [(1, 1), (2, 1), (1, 3)]:
            q2 = (p.alpha * j) ** 2 + (np.pi * k) ** 2
            s = (p.alpha * j) ** 2 / q2
            iv = idx.pos("v", j, k)
            it = idx.pos("theta", j, k)
            assert Li.matrix[iv, it] == pytest.approx(-p.Pr * p.R1 * s, rel=1e-14)

    def test_projected_full_operator_consistency(self, rng):
        """P L P restricted to solenoidal fields equals the reduced operator."""
        p = make_params(eps=0.1, R1=25.0, J=4, K=4)
        Li = assemble_L_incomp(p)
        for _ in range(5):
            vec = rng.standard_normal(reduced_index(p).dim)
            f = reduced_to_field(vec, p)
            # full action without the pressure row, then Leray projection
            Lf = apply_L_direct(p, f)
            Lf.phi[:] = 0.0
            proj = helmholtz_project(Lf)
            back = field_to_reduced(proj)
            expect = Li.matrix @ vec
            assert np.abs(back - expect).max() <= 1e-13 * max(1.0, np.abs(expect).max())

    def test_reduced_adjoint_identity(self, rng):
        p = make_params(R1=25.0, J=4, K=4)
        Li = assemble_L_incomp(p)
        Lis = assemble_L_incomp(p, adjoint=True)
        idx = reduced_index(p)
        W = weight_vector(p, idx)
        for _ in range(50):
            x = rng.standard_normal(idx.dim) + 1j * rng.standard_normal(idx.dim)
            y = rng.standard_normal(idx.dim) + 1j * rng.standard_normal(idx.dim)
            lhs = vec_inner(Li.matvec(x), y, W)
            rhs = vec_inner(x, Lis.matvec(y), W)
            assert abs(lhs - rhs) <= 1e-12 * np.linalg.norm(x) * np.linalg.norm(y)

    def test_embedding_roundtrip(self, rng):
        p = make_params(J=4, K=4)
        vec = rng.standard_normal(reduced_index(p).dim)
        f = reduced_to_field(vec, p)
        assert np.abs(divergence(f)).max() <= 1e-12
        back = field_to_reduced(f)
        assert np.allclose(back, vec, atol=1e-13)


class TestK:
    def test_psi_only_killed(self):
        p = make_params()
        u = SpectralField.single_mode(p, "psi", 1, 1, 3.0)
        ku = apply_K(u)
        for v in ("phi", "w1", "w2", "theta", "psi"):
            assert np.all(getattr(ku, v) == 0.0)

    def test_theta_to_w2(self):
        p = make_params()
        u = SpectralField.single_mode(p, "theta", 1, 1, 1.0)
        ku = apply_K(u)
        assert ku.w2[1, 1] == -p.Pr
        ku.w2[1, 1] = 0.0
        for v in ("phi", "w1", "w2", "theta", "psi"):
            assert np.all(getattr(ku, v) == 0.0)

    def test_K_squared(self):
        p = make_params()
        u = SpectralField.single_mode(p, "theta", 2, 1, 1.0)
        kku = apply_K(apply_K(u))
        assert kku.theta[2, 1] == pytest.approx(p.Pr)

    def test_matrix_matches_field_action(self, rng):
        p = make_params(J=4, K=4)
        idx = full_index(p)
        Km = K_matrix(p, idx)
        u = random_field(p, rng)
        direct = field_to_vec(apply_K(u), idx)
        assert np.allclose(Km @ field_to_vec(u, idx), direct, atol=1e-14)

    def test_eta_shift_identity(self):
        """L at R1 + eta equals L at R1 plus eta K (exact in the R1 slots)."""
        p = make_params(eps=0.1, R1=20.0, J=3, K=3)
        eta = 0.7
        idx = full_index(p)
        L0 = assemble_L(p).matrix
        L1 = assemble_L(p.with_(R1=p.R1 + eta)).matrix
        Km = K_matrix(p, idx)
        assert np.abs(L1 - (L0 + eta * Km)).max() < 1e-12


class TestNonlinearity:
    def test_bilinearity_zero(self, rng):
        p = make_params()
        u = random_field(p, rng)
        z = SpectralField.zeros(p)
        for out in (nonlinear_N(u, z), nonlinear_N(z, u)):
            for v in ("phi", "w1", "w2", "theta", "psi"):
                assert np.all(getattr(out, v) == 0.0)

    def test_phi_component_zero(self, rng):
        p = make_params()
        out = nonlinear_N(random_field(p, rng), random_field(p, rng))
        assert np.all(out.phi == 0.0)

    def test_advection_skew_symmetry(self, rng):
        """(w.grad theta, theta) = 0 for solenoidal w."""
        p = make_params()
        for _ in range(10):
            u = helmholtz_project(random_field(p, rng))
            n = nonlinear_N(u, u)
            from ddhopf.basis import component_inner
            skew = component_inner(n, u, "theta").real
            assert abs(skew) <= 1e-11 * max(1.0, bu_inner(u, u).real)

    def test_single_mode_self_advection_support(self):
        p = make_params()
        u = SpectralField.zeros(p)
        # solenoidal velocity at (1,1) plus theta at (1,1)
        u.w1[1, 1] = np.pi
        u.w2[1, 1] = -p.alpha
        u.theta[1, 1] = 1.0
        out = nonlinear_N(u, u)
        allowed = {(0, 2), (2, 0), (2, 2)}
        for v in ("w1", "w2", "theta", "psi"):
            arr = getattr(out, v)
            nz = {(int(j), int(k)) for j, k in zip(*np.nonzero(np.abs(arr) > 1e-13))}
            assert nz <= allowed, f"{v}: {nz}"

    def test_dealiasing_matches_padded_grid(self, rng):
        """The default grid gives the same truncated product as a huge grid."""
        p = make_params(J=4, K=4)
        u1, u2 = random_field(p, rng), random_field(p, rng)
        out = nonlinear_N(u1, u2)
        # re-evaluate with a much larger truncation embedding
        big = make_params(J=13, K=13)
        def embed(f):
            g = SpectralField.zeros(big)
            for v in ("phi", "w1", "w2", "theta", "psi"):
                getattr(g, v)[:p.J + 1, :p.K + 1] = getattr(f, v)
            return g
        ref = nonlinear_N(embed(u1), embed(u2))
        for v in ("w1", "w2", "theta", "psi"):
            a = getattr(out, v)
            b = getattr(ref, v)[:p.J + 1, :p.K + 1]
            assert np.abs(a - b).max() <= 1e-12 * max(1.0, np.abs(b).max())

    def test_M_symmetric(self, rng):
        p = make_params()
        u, v = random_field(p, rng), random_field(p, rng)
        m1, m2 = bilinear_M(u, v), bilinear_M(v, u)
        z = SpectralField.zeros(p)
        mz = bilinear_M(u, z)
        for name in ("w1", "w2", "theta", "psi"):
            assert np.abs(getattr(m1, name) - getattr(m2, name)).max() <= 1e-13 * (
                1 + np.abs(getattr(m1, name)).max())
            assert np.all(getattr(mz, name) == 0.0)

    def test_M_uu_equals_2N(self, rng):
        p = make_params()
        u = random_field(p, rng)
        m = bilinear_M(u, u)
        n = nonlinear_N(u, u)
        for name in ("w1", "w2", "theta", "psi"):
            assert np.allclose(getattr(m, name), 2 * getattr(n, name), atol=1e-14)


def test_matrix_market_export(tmp_path):
    p = make_params(eps=0.1, R1=10.0, J=2, K=2)
    L = assemble_L(p)
    path = tmp_path / "L.mtx"
    export_matrix_market(L, str(path))
    import scipy.io
    M = scipy.io.mmread(str(path))
    assert np.abs(M.toarray() - L.matrix).max() == 0.0
