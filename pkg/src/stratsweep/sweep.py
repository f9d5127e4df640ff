"""Layer decomposition of the radial mesh and the double-sweep optimized
Schwarz preconditioner.

Layers are two radial elements thick and numbered from the outer boundary
inward (layer 1 starts the sweep at the surface). The interface between
layers j and j-1 carries a dense transmission operator P_j; with the exact
exterior Schur complements one forward/backward sweep reproduces the direct
solution.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu


class FactorizationError(RuntimeError):
    """A subdomain matrix could not be factorized (interior resonance)."""

    def __init__(self, layer, message):
        super().__init__(f"layer {layer}: {message}")
        self.layer = layer


@dataclass(frozen=True)
class LayerDecomposition:
    """Radial layer structure: layer j owns elements 2(J-j) .. 2(J-j)+1 in
    ascending element numbering, so layer 1 touches the outer boundary."""

    space_r: object
    space_t: object
    J: int

    def __post_init__(self):
        if self.space_r.mesh.n != 2 * self.J:
            raise ValueError(
                f"radial element count {self.space_r.mesh.n} != 2*J = {2 * self.J}")

    def layer_elements(self, j):
        if not 1 <= j <= self.J:
            raise ValueError(f"layer index {j} out of range")
        e0 = 2 * (self.J - j)
        return [e0, e0 + 1]

    def layer_nodes(self, j):
        """Full radial node indices of layer j, both traces included."""
        p = self.space_r.order
        e0 = 2 * (self.J - j)
        return np.arange(e0 * p, (e0 + 2) * p + 1)

    def interface_node(self, j):
        """Full radial node index of the interface between layers j and j-1."""
        if not 2 <= j <= self.J:
            raise ValueError(f"interface index {j} out of range")
        p = self.space_r.order
        return (2 * (self.J - j) + 2) * p

    def interface_radius(self, j):
        return float(self.space_r.node_coords[self.interface_node(j)])

    def interfaces(self):
        return range(2, self.J + 1)

    def dof_sets(self, system):
        """Per-layer global DOF sets: (interior, top trace, bottom trace).

        Top is the interface shared with layer j-1 (None for layer 1),
        bottom the one shared with layer j+1 (None for layer J). Boundary
        nodes of the domain count as interior to their layer.
        """
        out = {}
        for j in range(1, self.J + 1):
            nodes = self.layer_nodes(j)
            top = system.dofs_for_nodes([nodes[-1]]) if j >= 2 else None
            bottom = system.dofs_for_nodes([nodes[0]]) if j <= self.J - 1 else None
            inner_nodes = nodes[1:] if j <= self.J - 1 else nodes
            inner_nodes = inner_nodes[:-1] if j >= 2 else inner_nodes
            out[j] = (system.dofs_for_nodes(inner_nodes), top, bottom)
        return out


def decompose(space_r, J, space_t=None):
    """Validate the 2-elements-per-layer structure and record interfaces."""
    return LayerDecomposition(space_r=space_r, space_t=space_t, J=int(J))


@dataclass
class SubdomainSystem:
    """One layer's local matrix, factorization and index maps.

    Local DOFs are ordered with the bottom trace first and the top trace
    last (ascending radius, theta fastest). The factorized matrix covers the
    solved unknowns: everything except the bottom trace, where Dirichlet
    data is imposed.
    """

    j: int
    ldofs: np.ndarray          # global DOFs of the full layer, ascending
    A_loc: sparse.csr_matrix   # layer-only assembly on ldofs (no P_j)
    solve_idx: np.ndarray      # local indices actually solved
    lu: object
    L: int
    has_top: bool
    has_bottom: bool

    @property
    def top_local(self):
        return np.arange(self.ldofs.size - self.L, self.ldofs.size)

    @property
    def bottom_local(self):
        return np.arange(self.L)


@dataclass
class DosmPreconditioner:
    decomp: LayerDecomposition
    layers: List[SubdomainSystem]
    transmission: List[Optional[np.ndarray]]  # P_j per layer index (None for j=1)
    size: int

    def as_operator(self):
        from scipy.sparse.linalg import LinearOperator
        return LinearOperator((self.size, self.size), matvec=self.apply,
                              dtype=np.complex128)

    def apply(self, f, u_prev=None):
        """One forward + one backward sweep.

        With u_prev=None the previous iterate is zero (preconditioner mode);
        passing a global vector runs one step of the stationary iteration.
        """
        f = np.asarray(f, dtype=np.complex128).ravel()
        if f.size != self.size:
            raise ValueError("load vector has wrong dimension")
        J = self.decomp.J
        layers = {s.j: s for s in self.layers}
        L = layers[1].L

        def bottom_data(sub):
            if u_prev is None or not sub.has_bottom:
                return np.zeros(L, dtype=np.complex128)
            return np.asarray(u_prev, dtype=np.complex128)[sub.ldofs[sub.bottom_local]]

        def robin_rhs(j, u_fw_full):
            """Interface datum on the top rows of layer j from layer j-1."""
            sub_prev = layers[j - 1]
            P = self.transmission[j]  # operator attached to layer j
            flux = (f[sub_prev.ldofs[sub_prev.bottom_local]]
                    - sub_prev.A_loc[sub_prev.bottom_local, :] @ u_fw_full[j - 1])
            trace = u_fw_full[j - 1][sub_prev.bottom_local]
            return flux + P @ trace

        u_fw_full = {}
        robin = {}
        for j in range(1, J):
            sub = layers[j]
            rhs = f[sub.ldofs[sub.solve_idx]].copy()
            if sub.has_top:
                robin[j] = robin_rhs(j, u_fw_full)
                rhs[-L:] = robin[j]
            g = bottom_data(sub)
            rhs -= sub.A_loc[np.ix_(sub.solve_idx, sub.bottom_local)] @ g
            u = sub.lu.solve(rhs)
            full = np.empty(sub.ldofs.size, dtype=np.complex128)
            full[sub.bottom_local] = g
            full[sub.solve_idx] = u
            u_fw_full[j] = full

        x = np.zeros(self.size, dtype=np.complex128)
        g_above = None  # top-trace values of the layer below (j+1)
        for j in range(J, 0, -1):
            sub = layers[j]
            rhs = f[sub.ldofs[sub.solve_idx]].copy()
            if sub.has_top:
                if j not in robin:
                    robin[j] = robin_rhs(j, u_fw_full)
                rhs[-L:] = robin[j]
            if sub.has_bottom:
                rhs -= sub.A_loc[np.ix_(sub.solve_idx, sub.bottom_local)] @ g_above
            u = sub.lu.solve(rhs)
            x[sub.ldofs[sub.solve_idx]] = u
            g_above = u[-L:] if sub.has_top else None
        return x


def _layer_matrix(system, decomp, j):
    """Layer-only assembly restricted to the layer's kept global DOFs.

    Uses the same assembly path that built the global system, so the layer
    blocks of a perturbed operator are the perturbed ones."""
    A_full = system.assemble_region(decomp.layer_elements(j))
    L = system.L
    kept = set(system.kept_r_nodes.tolist())
    nodes = [n for n in decomp.layer_nodes(j) if n in kept]
    dofs = np.concatenate([np.arange(n * L, (n + 1) * L) for n in nodes])
    # map full product indexing (node * L + t) onto the system's kept DOFs
    gdofs = system.dofs_for_nodes(nodes)
    return A_full[np.ix_(dofs, dofs)].tocsr().astype(np.complex128), gdofs


def build_preconditioner(system, decomp, transmission):
    """Factorize the per-layer subdomain systems.

    transmission holds one InterfaceOperator per interface j = 2..J (the
    operator added on the top-trace block of layer j).
    """
    J = decomp.J
    if len(transmission) != J - 1:
        raise ValueError(f"need {J - 1} transmission operators, got {len(transmission)}")
    L = system.L
    # ops[j] is the operator of interface j (j = 2..J)
    ops = [None, None] + [np.asarray(t.P if hasattr(t, "P") else t, dtype=np.complex128)
                          for t in transmission]
    for j, P in enumerate(ops[2:], start=2):
        if P.shape != (L, L):
            raise ValueError(f"transmission operator for interface {j} has shape "
                             f"{P.shape}, expected {(L, L)}")

    layers = []
    for j in range(1, J + 1):
        A_loc, gdofs = _layer_matrix(system, decomp, j)
        has_top = j >= 2
        has_bottom = j <= J - 1
        solve_idx = np.arange(L, gdofs.size) if has_bottom else np.arange(gdofs.size)
        F = A_loc[np.ix_(solve_idx, solve_idx)].tolil()
        if has_top:
            top = np.arange(solve_idx.size - L, solve_idx.size)
            F[np.ix_(top, top)] = F[np.ix_(top, top)].toarray() + ops[j]
        try:
            lu = splu(sparse.csc_matrix(F))
        except RuntimeError as exc:
            raise FactorizationError(j, f"subdomain factorization failed: {exc}") from exc
        layers.append(SubdomainSystem(j=j, ldofs=gdofs, A_loc=A_loc,
                                      solve_idx=solve_idx, lu=lu, L=L,
                                      has_top=has_top, has_bottom=has_bottom))
    return DosmPreconditioner(decomp=decomp, layers=layers,
                              transmission=ops, size=system.size)
