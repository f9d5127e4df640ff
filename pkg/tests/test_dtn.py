import numpy as np
import pytest

from stratsweep.assembly import assemble_tensor_system
from stratsweep.dtn import (DtnResonanceError, build_modal_dtn,
                            exact_schur_dtn, exterior_space, guided_threshold,
                            modal_relative_error, modal_table_rows,
                            mode_dtn_number, mode_dtn_pointwise,
                            moving_pml_dtn, tensor_dtn_operator,
                            transverse_eigenbasis)
from stratsweep.fem import Mesh1D, Space1D, assemble_weighted_matrix
from stratsweep.media import (PMLSpec, SeparableCoefficients,
                              make_disk_coefficients, make_sh_coefficients,
                              perturbed_profile, pml_scale, prem_like_profile)
from stratsweep.sweep import decompose

ONES = lambda x: np.ones_like(np.real(np.asarray(x)))
SIN3 = lambda t: np.sin(t) ** 3


def unit_coeffs(omega, r_interval, outer="dirichlet"):
    return SeparableCoefficients(
        c0=lambda r: omega ** 2 * ONES(r), c1=ONES, c2=ONES,
        w0=ONES, w1=ONES, omega=omega, r_interval=r_interval,
        theta_interval=(0.0, np.pi), theta_bc="dirichlet",
        r_bc_outer=outer)


# ---------------------------------------------------------------- eigenbasis

def test_periodic_eigenbasis_constant_kernel():
    st = Space1D(Mesh1D.uniform(0.0, 2 * np.pi, 8), 3, "periodic")
    basis = transverse_eigenbasis(st, ONES, ONES)
    assert 0.0 <= basis.lam[0] <= 1e-12
    psi0 = basis.psi[:, 0]
    assert np.allclose(psi0, psi0[0], atol=1e-10 * abs(psi0[0]))


def test_eigenbasis_residual_and_orthonormality_sin3():
    st = Space1D(Mesh1D.uniform(0.0, np.pi, 48), 4, "both")
    basis = transverse_eigenbasis(st, SIN3, SIN3)
    K, M = basis.K.toarray(), basis.M.toarray()
    G = basis.psi.T @ M @ basis.psi
    assert np.abs(G - np.eye(basis.count)).max() <= 1e-9
    for ell in range(0, basis.count, 7):
        res = K @ basis.psi[:, ell] - basis.lam[ell] * (M @ basis.psi[:, ell])
        bound = 1e-9 * (abs(basis.lam[ell]) + 1.0) * np.linalg.norm(basis.psi[:, ell])
        assert np.linalg.norm(res) <= bound
    assert np.all(basis.lam >= 0)
    assert np.all(np.diff(basis.lam) >= -1e-9)


def test_eigenbasis_smallest_physical_eigenvalue_vs_refined_oracle():
    # the degenerate sin^3 weight admits one near-zero boundary-layer mode;
    # the first physical mode sits on the Gegenbauer branch l(l+3)
    st = Space1D(Mesh1D.uniform(0.0, np.pi, 48), 4, "both")
    lam = transverse_eigenbasis(st, SIN3, SIN3).lam
    st_fine = Space1D(Mesh1D.uniform(0.0, np.pi, 120), 6, "both")
    lam_ref = transverse_eigenbasis(st_fine, SIN3, SIN3).lam
    first = lam[lam > 1.0][0]
    first_ref = lam_ref[lam_ref > 1.0][0]
    assert abs(first - first_ref) <= 1e-4 * first_ref
    assert abs(first - 4.0) <= 1e-3  # l = 1 -> l (l + 3) = 4


def test_eigenbasis_completeness_reproduces_pencil_action():
    st = Space1D(Mesh1D.uniform(0.0, np.pi, 24), 4, "both")
    basis = transverse_eigenbasis(st, SIN3, SIN3)
    rng = np.random.default_rng(3)
    from scipy.sparse.linalg import spsolve
    for _ in range(3):
        v = rng.normal(size=basis.count)
        lhs = basis.psi @ (basis.lam * (basis.psi.T @ (basis.M @ v)))
        rhs = spsolve(basis.M.tocsc(), basis.K @ v)
        assert np.linalg.norm(lhs - rhs) <= 1e-8 * max(1.0, np.linalg.norm(rhs))


def test_eigenbasis_indefinite_mass_rejected():
    st = Space1D(Mesh1D.uniform(0.0, np.pi, 8), 2, "both")
    with pytest.raises(ValueError):
        transverse_eigenbasis(st, lambda t: np.cos(t), ONES)


# ------------------------------------------------------------- mode numbers

def test_mode_dtn_matches_cot():
    # unit coefficients, lambda = 0, Dirichlet outer end: dtn -> w cot(w a)
    omega, a = 1.0, 1.0
    co = unit_coeffs(omega, (0.0, a), outer="dirichlet")
    es = Space1D(Mesh1D.uniform(0.0, a, 64), 4, "none")
    d = mode_dtn_number(co, es, 0.0)
    assert abs(d - omega / np.tan(omega * a)) <= 1e-6


def test_mode_dtn_pml_outer_matches_minus_i_omega():
    omega = 16.0
    W = 2 * np.pi / omega
    base = unit_coeffs(omega, (0.0, 1.0 + W), outer="neumann")
    co = pml_scale(PMLSpec.tuned(1.0, W, strength=10.0), base)
    es = Space1D(Mesh1D.uniform(0.0, 1.0 + W, 128), 4, "none")
    d = mode_dtn_number(co, es, 0.0)
    assert abs(d - (-1j * omega)) <= 1e-6 * omega


def test_mode_dtn_evanescent_vs_refined_oracle():
    omega = 4.0
    lam = 25.0 * omega ** 2
    co = unit_coeffs(omega, (0.0, 1.0), outer="dirichlet")
    es = Space1D(Mesh1D.uniform(0.0, 1.0, 64), 4, "none")
    d = mode_dtn_number(co, es, lam)
    es_fine = Space1D(Mesh1D.uniform(0.0, 1.0, 192), 6, "none")
    d_ref = mode_dtn_number(co, es_fine, lam)
    assert d.imag == pytest.approx(0.0, abs=1e-10)
    assert d.real > 0
    assert abs(d - d_ref) <= 1e-6 * abs(d_ref)


def test_mode_dtn_pointwise_diagnostic():
    # pointwise flux differs from the variational number by a
    # superconvergence-order term: nonzero on a coarse mesh, both converge
    omega, a = 1.0, 1.0
    co = unit_coeffs(omega, (0.0, a), outer="dirichlet")
    exact = omega / np.tan(omega * a)
    es = Space1D(Mesh1D.uniform(0.0, a, 4), 2, "none")
    d_var = mode_dtn_number(co, es, 0.0)
    d_pt = mode_dtn_pointwise(co, es, 0.0)
    assert abs(d_var - d_pt) > 1e-12
    assert abs(d_var - exact) < 1e-3
    assert abs(d_pt - exact) < 1e-2


def test_mode_dtn_resonance_error(monkeypatch):
    # SuperLU raises only on exact zero pivots; drive the failure path and
    # check the error carries lambda
    import stratsweep.dtn as dtn_mod

    def failing_splu(A):
        raise RuntimeError("Factor is exactly singular")

    monkeypatch.setattr(dtn_mod, "splu", failing_splu)
    co = unit_coeffs(1.0, (0.0, 1.0), outer="dirichlet")
    es = Space1D(Mesh1D.uniform(0.0, 1.0, 8), 2, "none")
    with pytest.raises(DtnResonanceError) as err:
        mode_dtn_number(co, es, 3.5)
    assert err.value.lam == 3.5


# ------------------------------------------------------- interface operators

def test_tensor_dtn_rank_one_for_single_mode():
    prof = prem_like_profile()
    coeffs = make_sh_coefficients(prof, 4.0)
    sr = Space1D(Mesh1D.uniform(prof.r_inner, prof.r_outer, 4), 2, "none")
    st = Space1D(Mesh1D.uniform(0.0, np.pi, 1), 2, "both")  # single theta DOF
    dec = decompose(sr, 2, st)
    basis = transverse_eigenbasis(st, coeffs.w0, coeffs.w1)
    assert basis.count == 1
    op = tensor_dtn_operator(coeffs, dec, 2, basis)
    w = basis.M @ basis.psi[:, 0]
    node = dec.interface_node(2)
    ext = exterior_space(sr, node)
    d1 = mode_dtn_number(coeffs, ext, basis.lam[0])
    assert np.allclose(op.P, d1 * np.outer(w, w), rtol=1e-12)


@pytest.mark.parametrize("problem", ["sh", "disk"])
def test_tensor_equals_exact_schur(problem):
    J, p = 3, 4
    if problem == "sh":
        prof = prem_like_profile()
        coeffs = make_sh_coefficients(prof, 16.0)
        r0, r1, t1, tbc = prof.r_inner, prof.r_outer, np.pi, "both"
    else:
        base = make_disk_coefficients(0.5, 8.0, J)
        coeffs = pml_scale(PMLSpec.tuned(1 - 1 / J, 1 / J, strength=8.0), base)
        r0, r1, t1, tbc = 0.0, 1.0, 2 * np.pi, "periodic"
    sr = Space1D(Mesh1D.uniform(r0, r1, 2 * J), p, "none")
    st = Space1D(Mesh1D.uniform(0.0, t1, 2 * J), p, tbc)
    sys_ = assemble_tensor_system(coeffs, sr, st)
    dec = decompose(sr, J, st)
    basis = transverse_eigenbasis(st, coeffs.w0, coeffs.w1)
    for j in dec.interfaces():
        Pe = exact_schur_dtn(sys_, dec, j).P
        Pt = tensor_dtn_operator(coeffs, dec, j, basis).P
        assert np.abs(Pt - Pe).max() <= 1e-9 * np.abs(Pe).max()
        assert np.abs(Pt - Pt.T).max() == 0.0
        assert np.abs(Pe - Pe.T).max() == 0.0


def test_nonrestricted_ode_space_breaks_schur_identity():
    prof = prem_like_profile()
    coeffs = make_sh_coefficients(prof, 16.0)
    J, p = 3, 3
    sr = Space1D(Mesh1D.uniform(prof.r_inner, prof.r_outer, 2 * J), p, "none")
    st = Space1D(Mesh1D.uniform(0.0, np.pi, 2 * J), p, "both")
    sys_ = assemble_tensor_system(coeffs, sr, st)
    dec = decompose(sr, J, st)
    basis = transverse_eigenbasis(st, coeffs.w0, coeffs.w1)
    j = 2
    node = dec.interface_node(j)
    # refined exterior discretization: NOT the restriction of the 2D one
    fine = Space1D(Mesh1D.uniform(sr.node_coords[node], prof.r_outer,
                                  4 * (sr.mesh.n - node // p)), p, "none")
    numbers = np.array([mode_dtn_number(coeffs, fine, lam) for lam in basis.lam])
    W = basis.M @ basis.psi
    P_fine = (W * numbers[None, :]) @ W.T
    Pe = exact_schur_dtn(sys_, dec, j).P
    mismatch = np.abs(P_fine - Pe).max() / np.abs(Pe).max()
    assert mismatch > 1e-6  # the identity requires the restricted space


def test_exact_schur_hand_elimination_oracle():
    # 1D chain (single theta DOF), exterior = one layer with Dirichlet far
    # end: the Schur complement matches dense elimination by hand
    omega = 2.0
    co = unit_coeffs(omega, (0.0, 1.0), outer="dirichlet")
    sr = Space1D(Mesh1D.uniform(0.0, 1.0, 4), 1, "none")
    st = Space1D(Mesh1D.uniform(0.0, np.pi, 1), 2, "both")
    sys_ = assemble_tensor_system(co, sr, st)
    dec = decompose(sr, 2, st)
    P = exact_schur_dtn(sys_, dec, 2).P
    # hand elimination on the scalar radial chain
    Mt = assemble_weighted_matrix(st, co.w0, 0, 0).toarray()[0, 0]
    Kt = assemble_weighted_matrix(st, co.w1, 1, 1).toarray()[0, 0]
    from stratsweep.assembly import radial_factors
    M0, K1, M2 = (X.toarray() for X in radial_factors(co, sr, elements=[2, 3]))
    B = -M0 * Mt + K1 * Mt + M2 * Kt
    idx = [2, 3]  # interior nodes of the exterior region (4 eliminated)
    g = 2
    schur = B[g, g] - B[np.ix_([g], [3])] @ np.linalg.solve(
        B[np.ix_([3], [3])], B[np.ix_([3], [g])])
    assert np.allclose(P[0, 0], schur[0, 0], rtol=1e-12)


def test_moving_pml_off_equals_dirichlet_schur():
    import dataclasses
    J = 3
    base = make_disk_coefficients(0.0, 8.0, J)
    sr = Space1D(Mesh1D.uniform(0.0, 1.0, 2 * J), 4, "none")
    st = Space1D(Mesh1D.uniform(0.0, 2 * np.pi, 2 * J), 4, "periodic")
    dec = decompose(sr, J, st)
    off = moving_pml_dtn(base, PMLSpec(0.0, 1.0, 0.0), dec, 2)
    closed = dataclasses.replace(base, r_bc_outer="dirichlet")
    sys_d = assemble_tensor_system(closed, sr, st)
    Pe = exact_schur_dtn(sys_d, dec, 2).P
    assert np.abs(off.P - Pe).max() <= 1e-12 * np.abs(Pe).max()
    assert np.abs(off.P - off.P.T).max() == 0.0


def test_moving_pml_halfspace_impedance():
    # constant-coefficient strip: on the lambda = 0 mode the operator acts
    # like the half-space impedance -i w (times the boundary mass)
    omega = 16.0
    J = 8
    height = 2.0
    co = SeparableCoefficients(
        c0=lambda r: omega ** 2 * ONES(r), c1=ONES, c2=ONES, w0=ONES, w1=ONES,
        omega=omega, r_interval=(0.0, height), theta_interval=(0.0, 2 * np.pi),
        theta_bc="periodic")
    sr = Space1D(Mesh1D.uniform(0.0, height, 2 * J), 4, "none")
    st = Space1D(Mesh1D.uniform(0.0, 2 * np.pi, 4), 4, "periodic")
    dec = decompose(sr, J, st)
    # neighbor layer is one wavelength deep: height/J = 2/8 = lambda/ ...
    spec = PMLSpec.tuned(0.0, 1.0, strength=8.0)
    op = moving_pml_dtn(co, spec, dec, 2)
    basis = transverse_eigenbasis(st, co.w0, co.w1)
    psi0 = basis.psi[:, 0]
    lhs = op.P @ psi0
    rhs = -1j * omega * (basis.M @ psi0)
    assert np.linalg.norm(lhs - rhs) <= 0.05 * np.linalg.norm(rhs)


def test_moving_pml_damped_variant():
    J = 3
    base = make_disk_coefficients(0.5, 8.0, J)
    sr = Space1D(Mesh1D.uniform(0.0, 1.0, 2 * J), 3, "none")
    st = Space1D(Mesh1D.uniform(0.0, 2 * np.pi, 2 * J), 3, "periodic")
    dec = decompose(sr, J, st)
    spec = PMLSpec.tuned(0.0, 1.0, strength=8.0)
    plain = moving_pml_dtn(base, spec, dec, 2, gamma=0.0)
    damped_op = moving_pml_dtn(base, spec, dec, 2, gamma=1.0)
    assert np.abs(damped_op.P - damped_op.P.T).max() == 0.0
    rel = np.abs(damped_op.P - plain.P).max() / np.abs(plain.P).max()
    assert rel > 1e-4  # the shift visibly changes the operator


def test_moving_pml_interface_index_validation():
    base = make_disk_coefficients(0.0, 4.0, 2)
    sr = Space1D(Mesh1D.uniform(0.0, 1.0, 4), 2, "none")
    st = Space1D(Mesh1D.uniform(0.0, 2 * np.pi, 4), 2, "periodic")
    dec = decompose(sr, 2, st)
    with pytest.raises(ValueError):
        moving_pml_dtn(base, PMLSpec(0.0, 1.0, 1.0), dec, 1)


# ------------------------------------------------------------- modal errors

def fixture_modal(omega=32.0, J=6, p=4):
    prof = prem_like_profile()
    base = make_sh_coefficients(prof, omega)
    sr = Space1D(Mesh1D.uniform(prof.r_inner, prof.r_outer, 2 * J), p, "none")
    st = Space1D(Mesh1D.uniform(0.0, np.pi, 2 * J), p, "both")
    dec = decompose(sr, J, st)
    basis = transverse_eigenbasis(st, base.w0, base.w1)
    return prof, base, dec, basis


def test_modal_error_zero_for_unperturbed():
    prof, base, dec, basis = fixture_modal()
    m = build_modal_dtn(base, dec, dec.J - 1, basis)
    err = modal_relative_error(m, m)
    assert np.all(err == 0.0)


def test_modal_error_free_vs_pml_and_linearity():
    omega, J = 128.0, 12
    prof, base, dec, basis = fixture_modal(omega=omega, J=J)
    eps = 3.9e-5
    layer_w = (prof.r_outer - prof.r_inner) / J
    spec = PMLSpec.tuned(prof.r_outer - layer_w, layer_w, strength=8.0)
    guided = basis.lam <= guided_threshold(base)
    assert guided.sum() >= 10

    def err(surface, e):
        pbase = make_sh_coefficients(perturbed_profile(prof, e), omega)
        c0 = base if surface == "free" else pml_scale(spec, base)
        c1 = pbase if surface == "free" else pml_scale(spec, pbase)
        return modal_relative_error(build_modal_dtn(c0, dec, J - 1, basis),
                                    build_modal_dtn(c1, dec, J - 1, basis))

    e_free, e_pml = err("free", eps), err("pml", eps)
    assert np.median(e_free[guided]) >= 10.0 * np.median(e_pml[guided])
    # doubling epsilon doubles each guided mode's error to first order
    ratio = err("free", 2 * eps)[guided] / e_free[guided]
    assert np.all((ratio > 1.5) & (ratio < 2.5))


def test_modal_error_flags_zero_background():
    prof, base, dec, basis = fixture_modal(J=3)
    m0 = build_modal_dtn(base, dec, 2, basis)
    m1 = build_modal_dtn(base, dec, 2, basis)
    zeroed = np.array(m0.numbers)
    zeroed[0] = 0.0
    import dataclasses
    m0z = dataclasses.replace(m0, numbers=zeroed)
    err = modal_relative_error(m0z, m1)
    assert np.isinf(err[0])
    assert np.all(np.isfinite(err[1:]))


def test_modal_table_rows_format():
    prof, base, dec, basis = fixture_modal(J=3)
    m = build_modal_dtn(base, dec, 2, basis)
    rows = modal_table_rows(m)
    assert rows[0][0] == 1
    assert len(rows) == basis.count
    lam = [r[1] for r in rows]
    assert lam == sorted(lam)
