"""Kronecker-product assembly of the separable 2D system, the general
quadrature path for non-separable perturbed coefficients, sources and
weighted error norms.

Global DOF ordering is lexicographic with theta fastest: a radial node
corresponds to one contiguous block of trace DOFs.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from .fem import Space1D, assemble_weighted_matrix, gauss_rule, lagrange_eval


def _check_spaces(coeffs, space_r, space_t):
    r0, r1 = coeffs.r_interval
    if abs(space_r.mesh.nodes[0] - r0) > 1e-9 or abs(space_r.mesh.nodes[-1] - r1) > 1e-9:
        raise ValueError("radial space does not cover the coefficient interval")
    t0, t1 = coeffs.theta_interval
    if abs(space_t.mesh.nodes[0] - t0) > 1e-9 or abs(space_t.mesh.nodes[-1] - t1) > 1e-9:
        raise ValueError("theta space does not cover the coefficient interval")
    want = "both" if coeffs.theta_bc == "dirichlet" else "periodic"
    if space_t.bc != want:
        raise ValueError(f"theta space bc {space_t.bc!r}, coefficients need {want!r}")
    if space_r.bc != "none":
        raise ValueError("radial space must be unconstrained; radial BCs are "
                         "handled through the kept-node map")


def _kept_radial_nodes(coeffs, space_r):
    keep = np.arange(space_r.n_nodes)
    if coeffs.r_bc_inner == "dirichlet":
        keep = keep[1:]
    if coeffs.r_bc_outer in ("dirichlet", "pml"):
        if coeffs.r_bc_outer == "pml" and coeffs.pml is None:
            raise ValueError("outer bc is 'pml' but coefficients carry no PML spec")
        keep = keep[:-1]
    return keep


@dataclass
class TensorSystem:
    """Assembled sparse complex-symmetric operator with its discretization.

    kept_r_nodes are the full radial node indices that remain after boundary
    elimination; global DOF (k, i) = position of node in kept_r_nodes * L + i
    with L = theta DOF count. separable is False for systems built by the
    general quadrature path, whose coefficients no longer describe A.
    """

    A: sparse.csr_matrix
    space_r: Space1D
    space_t: Space1D
    coeffs: object
    kept_r_nodes: np.ndarray
    b: Optional[np.ndarray] = None
    separable: bool = True
    general_terms: Optional[object] = None  # 2D weights of the general path

    def assemble_region(self, elements_r):
        """Region-only assembly over a radial element subset, on the full
        (radial node) x (theta dof) numbering. Matches the path that built
        the global matrix so restricted blocks are consistent with A."""
        if self.separable:
            return kron_system(
                radial_factors(self.coeffs, self.space_r, elements=elements_r),
                theta_matrices(self.coeffs, self.space_t))
        return _assemble_general(self.space_r, self.space_t,
                                 self.general_terms, elements_r=elements_r)

    @property
    def L(self):
        return self.space_t.dof_count

    @property
    def size(self):
        return self.kept_r_nodes.size * self.L

    def radial_position(self, node):
        """Position of a full radial node index among the kept nodes."""
        pos = np.searchsorted(self.kept_r_nodes, node)
        if pos >= self.kept_r_nodes.size or self.kept_r_nodes[pos] != node:
            raise KeyError(f"radial node {node} was eliminated")
        return int(pos)

    def block(self, node):
        """Global DOF indices of one radial node's theta block."""
        k = self.radial_position(node)
        return np.arange(k * self.L, (k + 1) * self.L)

    def dofs_for_nodes(self, nodes):
        """Global DOF indices for a set of full radial node indices, in
        ascending node order, skipping eliminated nodes."""
        out = []
        for nd in nodes:
            try:
                out.append(self.block(nd))
            except KeyError:
                continue
        return np.concatenate(out) if out else np.array([], dtype=int)


def theta_matrices(coeffs, space_t, nq=None):
    """Boundary mass M[w0] and stiffness K[w1] on the transverse space."""
    M = assemble_weighted_matrix(space_t, coeffs.w0, 0, 0, nq=nq)
    K = assemble_weighted_matrix(space_t, coeffs.w1, 1, 1, nq=nq)
    return M, K


def radial_factors(coeffs, space_r, elements=None, nq=None):
    """Weighted radial matrices (M[c0], K[c1], M[c2]), optionally restricted
    to an element subset (full DOF numbering kept)."""
    M0 = assemble_weighted_matrix(space_r, coeffs.c0, 0, 0, nq=nq, elements=elements)
    K1 = assemble_weighted_matrix(space_r, coeffs.c1, 1, 1, nq=nq, elements=elements)
    M2 = assemble_weighted_matrix(space_r, coeffs.c2, 0, 0, nq=nq, elements=elements)
    return M0, K1, M2


def kron_system(radial, theta):
    """-M0 x Mt + K1 x Mt + M2 x Kt as CSR."""
    M0, K1, M2 = radial
    Mt, Kt = theta
    A = (-sparse.kron(M0, Mt, format="csr")
         + sparse.kron(K1, Mt, format="csr")
         + sparse.kron(M2, Kt, format="csr"))
    return A.tocsr()


def assemble_tensor_system(coeffs, space_r, space_t):
    """Assemble the separable system via Kronecker products of 1D matrices."""
    _check_spaces(coeffs, space_r, space_t)
    kept = _kept_radial_nodes(coeffs, space_r)
    A_full = kron_system(radial_factors(coeffs, space_r), theta_matrices(coeffs, space_t))
    L = space_t.dof_count
    keep_2d = (kept[:, None] * L + np.arange(L)[None, :]).ravel()
    A = A_full[keep_2d][:, keep_2d].tocsr()
    A = A.astype(np.complex128)
    return TensorSystem(A=A, space_r=space_r, space_t=space_t,
                        coeffs=coeffs, kept_r_nodes=kept)


def _pml_stretch(coeffs):
    spec = coeffs.pml
    if spec is None:
        return lambda r: (np.asarray(r), np.ones_like(np.asarray(r, dtype=float)))
    om = coeffs.omega + 1j * spec.gamma

    def stretch(r):
        r = np.asarray(r)
        rt = r + (1j / om) * spec.sigma_integral(r)
        d = 1.0 + (1j / om) * spec.sigma(r)
        return rt, d

    return stretch


def assemble_perturbed_system(coeffs, v, space_r, space_t, nq=None):
    """General (non-Kronecker) assembly with shear modulus rho(r) v(r,theta)^2
    evaluated pointwise at the 2D quadrature nodes.

    `coeffs` must be profile-backed (SH form); any PML scaling recorded there
    is applied to the perturbed coefficients as well. For the unperturbed
    velocity this reproduces assemble_tensor_system to rounding.
    """
    if coeffs.profile is None:
        raise ValueError("perturbed assembly needs profile-backed coefficients")
    _check_spaces(coeffs, space_r, space_t)
    profile = coeffs.profile
    om2 = coeffs.omega ** 2
    stretch = _pml_stretch(coeffs)

    def terms(r, theta):
        # r: (nqr,), theta: (nqt,); return the three 2D weights
        rt, d = stretch(r)
        vv = v(rt[:, None], theta[None, :])
        if np.any(np.real(vv) <= 0):
            raise ValueError("perturbed velocity must stay positive")
        mu = profile.rho(rt)[:, None] * vv * vv
        w0 = coeffs.w0(theta)[None, :]
        w1 = coeffs.w1(theta)[None, :]
        F0 = -(profile.rho(rt) * om2 * rt ** 4 * d)[:, None] * w0
        F1 = mu * (rt ** 4 / d)[:, None] * w0
        F2 = mu * (rt ** 2 * d)[:, None] * w1
        return F0, F1, F2

    A_full = _assemble_general(space_r, space_t, terms, nq=nq)
    kept = _kept_radial_nodes(coeffs, space_r)
    L = space_t.dof_count
    keep_2d = (kept[:, None] * L + np.arange(L)[None, :]).ravel()
    A = A_full[keep_2d][:, keep_2d].tocsr().astype(np.complex128)
    return TensorSystem(A=A, space_r=space_r, space_t=space_t,
                        coeffs=coeffs, kept_r_nodes=kept, separable=False,
                        general_terms=terms)


def _assemble_general(space_r, space_t, terms, nq=None, elements_r=None):
    """Tensor-quadrature assembly of sum_k F_k d^k u d^k v over both
    directions, with derivative orders (0,0), (1,0), (0,1) in (r, theta).
    elements_r restricts the radial element range (full numbering kept)."""
    pr, pt = space_r.order, space_t.order
    nqr = pr + 3 if nq is None else nq
    nqt = pt + 3 if nq is None else nq
    xr, wr = gauss_rule(nqr)
    xt, wt = gauss_rule(nqt)
    Vr, Dr = lagrange_eval(space_r.ref_nodes, xr)
    Vt, Dt = lagrange_eval(space_t.ref_nodes, xt)

    n_r = space_r.n_nodes
    nloc_r, nloc_t = pr + 1, pt + 1
    rows, cols, vals = [], [], []
    for er in (range(space_r.mesh.n) if elements_r is None else elements_r):
        ar, br = space_r.mesh.element_bounds(er)
        hr = br - ar
        rphys = ar + (xr + 1.0) * 0.5 * hr
        rnodes = space_r.element_nodes(er)
        for et in range(space_t.mesh.n):
            at, bt = space_t.mesh.element_bounds(et)
            ht = bt - at
            tphys = at + (xt + 1.0) * 0.5 * ht
            F0, F1, F2 = terms(rphys, tphys)
            qw = np.outer(wr, wt) * (hr / 2.0) * (ht / 2.0)
            local = np.zeros((nloc_r, nloc_t, nloc_r, nloc_t), dtype=np.complex128)
            for F, Br, Bt, jac in (
                (F0, Vr, Vt, 1.0),
                (F1, Dr, Vt, (2.0 / hr) ** 2),
                (F2, Vr, Dt, (2.0 / ht) ** 2),
            ):
                W = F * qw * jac
                T1 = np.einsum("qs,si,sj->qij", W, Bt, Bt)
                local += np.einsum("qi,qj,qkl->ikjl", Br, Br, T1)
            tnodes = space_t.element_nodes(et)
            tdofs = space_t.dof_of_node[tnodes]
            gdofs = np.empty((nloc_r, nloc_t), dtype=int)
            for i1, rn in enumerate(rnodes):
                gdofs[i1] = rn * space_t.dof_count + tdofs
            mask = np.tile(tdofs >= 0, (nloc_r, 1))
            gflat = gdofs.ravel()
            mflat = mask.ravel()
            lflat = local.reshape(nloc_r * nloc_t, nloc_r * nloc_t)
            keep = np.nonzero(mflat)[0]
            ii, jj = np.meshgrid(gflat[keep], gflat[keep], indexing="ij")
            rows.append(ii.ravel())
            cols.append(jj.ravel())
            vals.append(lflat[np.ix_(keep, keep)].ravel())

    N = n_r * space_t.dof_count
    A = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N, N),
    ).tocsr()
    return (A + A.T) * 0.5


@dataclass(frozen=True)
class SourceSpec:
    """Right-hand-side description: a Dirac at `location` or a seeded
    uniform complex random vector, optionally zeroed where the radial basis
    support touches the PML region."""

    kind: str = "dirac"
    location: tuple = (0.0, 0.0)
    seed: int = 0
    zero_in_pml: bool = False

    def __post_init__(self):
        if self.kind not in ("dirac", "random"):
            raise ValueError(f"unknown source kind {self.kind!r}")


def _radial_support(space_r, node):
    """Physical interval on which the radial basis of `node` is supported."""
    p = space_r.order
    if node % p == 0:
        e_lo = max(node // p - 1, 0)
        e_hi = min(node // p, space_r.mesh.n - 1)
    else:
        e_lo = e_hi = node // p
    return space_r.mesh.nodes[e_lo], space_r.mesh.nodes[e_hi + 1]


def assemble_load(source, system):
    """Assemble the load vector for a SourceSpec on an assembled system."""
    coeffs = system.coeffs
    space_r, space_t = system.space_r, system.space_t
    N = system.size
    if source.kind == "dirac":
        r0, t0 = source.location
        rlo, rhi = coeffs.r_interval
        tlo, thi = coeffs.theta_interval
        if not (rlo < r0 < rhi):
            raise ValueError("dirac radius must lie strictly inside the domain")
        if coeffs.theta_bc == "dirichlet" and not (tlo < t0 < thi):
            raise ValueError("dirac must not sit on the Dirichlet boundary")
        if coeffs.r_bc_inner == "dirichlet" and abs(r0 - rlo) < 1e-12:
            raise ValueError("dirac must not sit on the Dirichlet boundary")
        if coeffs.r_bc_outer in ("dirichlet", "pml") and abs(r0 - rhi) < 1e-12:
            raise ValueError("dirac must not sit on the Dirichlet boundary")
        rn, rv = space_r.point_values(r0)
        tn, tv = space_t.point_values(t0)
        tdofs = space_t.dof_of_node[tn]
        b = np.zeros(N, dtype=np.complex128)
        for node, val in zip(rn, rv):
            try:
                pos = system.radial_position(node)
            except KeyError:
                continue
            for td, tvv in zip(tdofs, tv):
                if td >= 0:
                    b[pos * system.L + td] += val * tvv
        return b

    rng = np.random.default_rng(source.seed)
    b = rng.uniform(-1.0, 1.0, N) + 1j * rng.uniform(-1.0, 1.0, N)
    if source.zero_in_pml:
        spec = coeffs.pml
        if spec is None:
            raise ValueError("zero_in_pml requested but coefficients carry no PML")
        for k, node in enumerate(system.kept_r_nodes):
            lo, hi = _radial_support(space_r, node)
            if hi > spec.start + 1e-12:
                b[k * system.L:(k + 1) * system.L] = 0.0
    return b


def function_grid(system, u):
    """Scatter a DOF vector to the full (radial node) x (theta node) grid."""
    space_r, space_t = system.space_r, system.space_t
    grid = np.zeros((space_r.n_nodes, space_t.n_nodes), dtype=np.complex128)
    L = system.L
    for k, node in enumerate(system.kept_r_nodes):
        grid[node] = space_t.scatter(u[k * L:(k + 1) * L])
    return grid


def weighted_l2_norm(system, u, nq=None):
    """sqrt(int |u_h|^2 volume_r volume_theta) by tensor quadrature."""
    coeffs = system.coeffs
    space_r, space_t = system.space_r, system.space_t
    nqr = space_r.order + 3 if nq is None else nq
    nqt = space_t.order + 3 if nq is None else nq
    xr, wr = gauss_rule(nqr)
    xt, wt = gauss_rule(nqt)
    Vr, _ = lagrange_eval(space_r.ref_nodes, xr)
    Vt, _ = lagrange_eval(space_t.ref_nodes, xt)
    grid = function_grid(system, u)
    total = 0.0
    for er in range(space_r.mesh.n):
        ar, br = space_r.mesh.element_bounds(er)
        hr = br - ar
        rphys = ar + (xr + 1.0) * 0.5 * hr
        wvr = coeffs.volume_r(rphys) * wr * (hr / 2.0)
        rnodes = space_r.element_nodes(er)
        for et in range(space_t.mesh.n):
            at, bt = space_t.mesh.element_bounds(et)
            ht = bt - at
            tphys = at + (xt + 1.0) * 0.5 * ht
            wvt = coeffs.volume_theta(tphys) * wt * (ht / 2.0)
            C = grid[np.ix_(rnodes, space_t.element_nodes(et))]
            valsq = np.abs(Vr @ C @ Vt.T) ** 2
            total += float(wvr @ valsq @ wvt)
    return np.sqrt(total)


def relative_l2_error(u, u_ref, system):
    """Weighted relative L2 error between two DOF vectors."""
    ref = weighted_l2_norm(system, u_ref)
    if ref == 0:
        raise ValueError("reference solution has zero norm")
    return weighted_l2_norm(system, np.asarray(u) - np.asarray(u_ref)) / ref
