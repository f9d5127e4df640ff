"""Interface transmission operators.

Three constructions of the operator P_j acting on one interface's trace
DOFs: the exact Schur complement of the exterior region, the tensor-product
operator diagonalized in the transverse eigenbasis with per-mode 1D radial
solves, and the moving-PML operator obtained by complex-scaling the
neighboring layer. All three are complex symmetric dense matrices.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy import sparse
from scipy.sparse.linalg import splu

from .assembly import kron_system, radial_factors, theta_matrices
from .fem import Mesh1D, Space1D, assemble_weighted_matrix, lagrange_eval


class DtnResonanceError(RuntimeError):
    """A 1D mode problem (or exterior block) hit a discrete resonance."""

    def __init__(self, message, lam=None, ell=None):
        super().__init__(message)
        self.lam = lam
        self.ell = ell


@dataclass(frozen=True)
class TransverseEigenbasis:
    """Generalized eigenpairs K[w1] psi = lambda M[w0] psi, M-orthonormal,
    ascending eigenvalues."""

    lam: np.ndarray
    psi: np.ndarray  # (dof, mode)
    M: sparse.csr_matrix
    K: sparse.csr_matrix

    @property
    def count(self):
        return self.lam.size


def transverse_eigenbasis(space_t, w0, w1):
    """Full dense solve of the weighted transverse eigenproblem."""
    M = assemble_weighted_matrix(space_t, w0, 0, 0)
    K = assemble_weighted_matrix(space_t, w1, 1, 1)
    Md = M.toarray()
    try:
        lam, psi = sla.eigh(K.toarray(), Md)
    except sla.LinAlgError as exc:
        raise ValueError("transverse mass matrix is not positive definite") from exc
    # clamp eigenvalue noise below zero (K is positive semidefinite)
    scale = max(abs(lam[0]), abs(lam[-1]), 1.0)
    lam = np.where(lam > -1e-10 * scale, np.maximum(lam, 0.0), lam)
    if lam[0] < 0:
        raise ValueError("transverse pencil produced a negative eigenvalue")
    return TransverseEigenbasis(lam=lam, psi=psi, M=M, K=K)


@dataclass(frozen=True)
class ModalDtN:
    """Per-mode DtN numbers of one interface in a given eigenbasis."""

    radius: float
    numbers: np.ndarray
    basis: TransverseEigenbasis


@dataclass(frozen=True)
class InterfaceOperator:
    """Dense complex-symmetric matrix on one interface's trace DOFs."""

    P: np.ndarray
    provenance: str  # 'moving-pml' | 'tensor' | 'exact-schur'

    def __post_init__(self):
        if self.P.shape[0] != self.P.shape[1]:
            raise ValueError("interface operator must be square")


def _symmetrize(P):
    return (P + P.T) * 0.5


def exterior_space(space_r, first_node):
    """Restrict the global radial space to the elements outside a node that
    sits on an element boundary (same elements, same order)."""
    p = space_r.order
    if first_node % p != 0:
        raise ValueError("interface node must sit on an element boundary")
    e0 = first_node // p
    mesh = space_r.mesh.restrict(range(e0, space_r.mesh.n))
    return Space1D(mesh, p, bc="none")


def _mode_matrix(coeffs, ext_space, lam, nq=None):
    M0, K1, M2 = radial_factors(coeffs, ext_space, nq=nq)
    return (-M0 + K1 + lam * M2).tocsc()


def _outer_constrained(coeffs, ndof):
    """Index set of unknowns after applying the outer closure."""
    if coeffs.r_bc_outer in ("dirichlet", "pml"):
        return np.arange(ndof - 1)
    return np.arange(ndof)


def mode_dtn_number(coeffs, ext_space, lam, nq=None):
    """Discrete DtN number of one transverse mode.

    Solves the radial variational problem on the exterior interval with
    unit Dirichlet value at the interface (first node) and the problem's
    physical or PML outer condition, and returns the 1D Schur complement
    onto the interface DOF.
    """
    B = _mode_matrix(coeffs, ext_space, lam, nq=nq)
    keep = _outer_constrained(coeffs, ext_space.dof_count)
    B = B[np.ix_(keep, keep)]
    interior = np.arange(1, keep.size)
    BII = sparse.csc_matrix(B[np.ix_(interior, interior)])
    BIG = B[np.ix_(interior, [0])].toarray().ravel()
    try:
        lu = splu(BII)
        uI = lu.solve(BIG)
    except RuntimeError as exc:
        raise DtnResonanceError(f"singular mode problem at lambda={lam!r}", lam=lam) from exc
    return complex(B[0, 0] - B[np.ix_([0], interior)].toarray().ravel() @ uI)


def mode_dtn_pointwise(coeffs, ext_space, lam, nq=None):
    """Diagnostic variant using the pointwise flux -c1(R_j) u_h'(R_j).

    Differs from the variational number by a superconvergence-order term;
    only the variational extraction makes the double sweep exact.
    """
    B = _mode_matrix(coeffs, ext_space, lam, nq=nq)
    keep = _outer_constrained(coeffs, ext_space.dof_count)
    B = B[np.ix_(keep, keep)]
    interior = np.arange(1, keep.size)
    BII = sparse.csc_matrix(B[np.ix_(interior, interior)])
    BIG = B[np.ix_(interior, [0])].toarray().ravel()
    u = np.zeros(ext_space.dof_count, dtype=np.complex128)
    u[0] = 1.0
    u[keep[interior]] = -splu(BII).solve(BIG)
    # derivative of the FE solution at the interface end of the first element
    a, b = ext_space.mesh.element_bounds(0)
    _, D = lagrange_eval(ext_space.ref_nodes, np.array([-1.0]))
    du = (2.0 / (b - a)) * (D[0] @ u[ext_space.element_nodes(0)])
    c1 = complex(np.asarray(coeffs.c1(np.array([a])), dtype=complex)[0])
    return -c1 * du


def build_modal_dtn(coeffs, decomp, j, basis, nq=None):
    """ModalDtN table for interface j (per-mode 1D exterior solves)."""
    node = decomp.interface_node(j)
    ext = exterior_space(decomp.space_r, node)
    numbers = np.empty(basis.count, dtype=np.complex128)
    for ell, lam in enumerate(basis.lam):
        try:
            numbers[ell] = mode_dtn_number(coeffs, ext, lam, nq=nq)
        except DtnResonanceError as exc:
            raise DtnResonanceError(str(exc), lam=exc.lam, ell=ell) from exc
    return ModalDtN(radius=decomp.interface_radius(j), numbers=numbers, basis=basis)


def tensor_dtn_operator(coeffs, decomp, j, basis=None, nq=None):
    """Tensor-product DtN: P = M Psi diag(dtn) Psi^T M."""
    if basis is None:
        basis = transverse_eigenbasis(decomp.space_t, coeffs.w0, coeffs.w1)
    modal = build_modal_dtn(coeffs, decomp, j, basis, nq=nq)
    W = basis.M @ basis.psi
    P = (W * modal.numbers[None, :]) @ W.T
    return InterfaceOperator(P=_symmetrize(P.astype(np.complex128)), provenance="tensor")


def exact_schur_dtn(system, decomp, j):
    """Schur complement of the exterior-region discretization onto the
    interface trace DOFs (oracle transmission operator). Works for both the
    Kronecker and the general (perturbed) assembly paths."""
    node = decomp.interface_node(j)
    space_r = system.space_r
    exterior_elements = range(node // space_r.order, space_r.mesh.n)
    A_ext = system.assemble_region(exterior_elements)
    L = system.L
    ext_nodes = [n for n in range(node, space_r.n_nodes)
                 if n in set(system.kept_r_nodes.tolist())]
    dofs = np.concatenate([np.arange(n * L, (n + 1) * L) for n in ext_nodes])
    A_ext = A_ext[np.ix_(dofs, dofs)].tocsc().astype(np.complex128)
    gamma = np.arange(L)
    interior = np.arange(L, dofs.size)
    AGG = A_ext[np.ix_(gamma, gamma)].toarray()
    AGI = A_ext[np.ix_(gamma, interior)].toarray()
    AIG = A_ext[np.ix_(interior, gamma)].toarray()
    try:
        X = splu(sparse.csc_matrix(A_ext[np.ix_(interior, interior)])).solve(AIG)
    except RuntimeError as exc:
        raise DtnResonanceError(f"exterior block of interface {j} is singular") from exc
    P = AGG - AGI @ X
    return InterfaceOperator(P=_symmetrize(P), provenance="exact-schur")


def moving_pml_dtn(coeffs, pml, decomp, j, gamma=0.0, nq=None):
    """Moving-PML DtN: the neighboring layer j-1 is complex-scaled starting
    right at the interface, closed with homogeneous Dirichlet on its far
    side, and condensed onto the interface trace.

    `pml` fixes the absorption tuning; start and width are overridden to the
    interface radius and the neighbor-layer width, rescaling sigma0 so the
    total absorption integral (one-way decay) is preserved. gamma > 0 builds
    the operator from the damped problem omega -> omega + i*gamma.
    """
    from .media import PMLSpec, damped, pml_scale  # local import to avoid cycle

    if j < 2:
        raise ValueError("interface index must be >= 2 (layer j-1 must exist)")
    node = decomp.interface_node(j)
    space_r = decomp.space_r
    p = space_r.order
    e0 = node // p
    e1 = decomp.layer_elements(j - 1)[-1]  # neighbor layer's outer element
    width = space_r.mesh.nodes[e1 + 1] - space_r.mesh.nodes[e0]
    spec = PMLSpec(start=space_r.mesh.nodes[e0], width=width,
                   sigma0=pml.sigma0 * pml.width / width,
                   exponent=pml.exponent, gamma=gamma)
    base = damped(coeffs, gamma)
    scaled = pml_scale(spec, base)

    sub_mesh = Mesh1D(space_r.mesh.nodes[e0:e1 + 2])
    sub_space = Space1D(sub_mesh, p, bc="none")
    M0, K1, M2 = radial_factors(scaled, sub_space, nq=nq)
    Mt, Kt = theta_matrices(coeffs, decomp.space_t)
    A = kron_system((M0, K1, M2), (Mt, Kt)).tocsc().astype(np.complex128)
    L = Mt.shape[0]
    ndof = sub_space.dof_count
    keep = np.arange((ndof - 1) * L)  # homogeneous Dirichlet at the far end
    A = A[np.ix_(keep, keep)]
    gamma_idx = np.arange(L)
    interior = np.arange(L, keep.size)
    AGG = A[np.ix_(gamma_idx, gamma_idx)].toarray()
    AGI = A[np.ix_(gamma_idx, interior)].toarray()
    AIG = A[np.ix_(interior, gamma_idx)].toarray()
    try:
        X = splu(sparse.csc_matrix(A[np.ix_(interior, interior)])).solve(AIG)
    except RuntimeError as exc:
        raise DtnResonanceError(f"PML block of interface {j} is singular") from exc
    P = AGG - AGI @ X
    return InterfaceOperator(P=_symmetrize(P), provenance="moving-pml")


def guided_threshold(coeffs, nsample=512):
    """Largest transverse eigenvalue that still propagates radially:
    max over r of c0(r)/c2(r) for the unscaled background."""
    lo, hi = coeffs.r_interval
    r = np.linspace(lo + 1e-9 * (hi - lo), hi - 1e-9 * (hi - lo), nsample)
    ratio = np.real(coeffs.c0(r)) / np.real(coeffs.c2(r))
    return float(ratio.max())


def modal_relative_error(background, perturbed):
    """Per-mode |dtn_bg - dtn_pert| / |dtn_bg|; zero background entries are
    reported as infinity so summaries can exclude them."""
    if background.basis is not perturbed.basis and not np.array_equal(
            background.basis.lam, perturbed.basis.lam):
        raise ValueError("modal tables must share one eigenbasis")
    bg = background.numbers
    diff = np.abs(bg - perturbed.numbers)
    out = np.full(bg.shape, np.inf)
    nz = np.abs(bg) > 0
    out[nz] = diff[nz] / np.abs(bg[nz])
    return out


def modal_table_rows(modal):
    """Rows (ell, lambda, re_dtn, im_dtn) for CSV export."""
    return [(ell + 1, float(lam), float(z.real), float(z.imag))
            for ell, (lam, z) in enumerate(zip(modal.basis.lam, modal.numbers))]
