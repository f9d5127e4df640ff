"""One-dimensional high-order nodal finite elements, quadrature and weighted matrices.

Spaces use Lagrange bases on per-element Gauss-Lobatto nodes, so endpoint
values are degrees of freedom and interface traces are DOF subsets.
"""

import numpy as np
from scipy import sparse
from scipy.special import roots_jacobi, roots_legendre


def gauss_lobatto_nodes(p):
    """Return the p+1 Gauss-Lobatto-Legendre nodes on [-1, 1].

    Interior nodes are the roots of P_p', i.e. of the Jacobi polynomial
    P^(1,1)_(p-1).
    """
    if p < 1:
        raise ValueError("polynomial order must be >= 1")
    if p == 1:
        return np.array([-1.0, 1.0])
    interior, _ = roots_jacobi(p - 1, 1.0, 1.0)
    return np.concatenate(([-1.0], np.sort(interior), [1.0]))


def gauss_rule(nq):
    """Gauss-Legendre points and weights on [-1, 1]."""
    x, w = roots_legendre(nq)
    return x, w


def barycentric_weights(nodes):
    nodes = np.asarray(nodes, dtype=float)
    w = np.ones_like(nodes)
    for i in range(nodes.size):
        w[i] = 1.0 / np.prod(nodes[i] - np.delete(nodes, i))
    return w


def lagrange_eval(nodes, x):
    """Evaluate the Lagrange basis on `nodes` at points `x`.

    Returns (V, D) with V[q, i] = L_i(x_q) and D[q, i] = L_i'(x_q).
    Points coinciding with a node are handled exactly (V row is a unit
    vector, D row is the spectral differentiation-matrix row).
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = barycentric_weights(nodes)
    n = nodes.size
    V = np.zeros((x.size, n))
    D = np.zeros((x.size, n))
    for q, t in enumerate(x):
        diff = t - nodes
        hit = np.nonzero(np.abs(diff) < 1e-14 * max(1.0, abs(t)))[0]
        if hit.size:
            k = hit[0]
            V[q, k] = 1.0
            # row k of the differentiation matrix
            others = np.arange(n) != k
            D[q, others] = (w[others] / w[k]) / (nodes[k] - nodes[others])
            D[q, k] = -np.sum(D[q, others])
        else:
            s = w / diff
            S = s.sum()
            V[q] = s / S
            # L_i'(t) = L_i(t) * (sum_j s_j/(t-x_j) / S - 1/(t-x_i))
            t2 = np.sum(s / diff) / S
            D[q] = V[q] * (t2 - 1.0 / diff)
    return V, D


class Mesh1D:
    """Strictly increasing node coordinates defining n = len(nodes)-1 elements."""

    def __init__(self, nodes):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("mesh needs at least two nodes")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("mesh nodes must be strictly increasing")
        self.nodes = nodes

    @classmethod
    def uniform(cls, a, b, n):
        return cls(np.linspace(a, b, n + 1))

    @property
    def n(self):
        return self.nodes.size - 1

    def element_bounds(self, e):
        return self.nodes[e], self.nodes[e + 1]

    def restrict(self, elements):
        """Sub-mesh made of a contiguous element range (same element sizes)."""
        elements = list(elements)
        lo, hi = elements[0], elements[-1]
        if elements != list(range(lo, hi + 1)):
            raise ValueError("element range must be contiguous")
        return Mesh1D(self.nodes[lo:hi + 2])


class Space1D:
    """H1-conforming nodal space of order p on a 1D mesh.

    bc is one of 'none', 'both', 'left', 'right' (Dirichlet ends eliminated
    from the DOF numbering) or 'periodic' (last node identified with the
    first).
    """

    def __init__(self, mesh, order, bc="none"):
        if bc not in ("none", "both", "left", "right", "periodic"):
            raise ValueError(f"unknown bc {bc!r}")
        self.mesh = mesh
        self.order = int(order)
        self.bc = bc
        self.ref_nodes = gauss_lobatto_nodes(self.order)

        p, n = self.order, mesh.n
        self.n_nodes = n * p + 1
        # physical coordinates of the full nodal set
        coords = np.empty(self.n_nodes)
        for e in range(n):
            a, b = mesh.element_bounds(e)
            coords[e * p:(e + 1) * p + 1] = a + (self.ref_nodes + 1.0) * 0.5 * (b - a)
        self.node_coords = coords

        dof_of_node = np.arange(self.n_nodes)
        if bc == "periodic":
            dof_of_node[-1] = 0
            keep = np.arange(self.n_nodes - 1)
        elif bc == "both":
            keep = np.arange(1, self.n_nodes - 1)
        elif bc == "left":
            keep = np.arange(1, self.n_nodes)
        elif bc == "right":
            keep = np.arange(0, self.n_nodes - 1)
        else:
            keep = np.arange(self.n_nodes)
        # renumber kept nodes consecutively; constrained nodes map to -1
        renum = -np.ones(self.n_nodes, dtype=int)
        renum[keep] = np.arange(keep.size)
        self.dof_of_node = np.where(dof_of_node == np.arange(self.n_nodes),
                                    renum, renum[dof_of_node])
        self.kept_nodes = keep
        self.dof_count = keep.size

    @property
    def dof_coords(self):
        return self.node_coords[self.kept_nodes]

    def element_nodes(self, e):
        p = self.order
        return np.arange(e * p, (e + 1) * p + 1)

    def element_containing(self, x):
        nodes = self.mesh.nodes
        if x < nodes[0] - 1e-12 or x > nodes[-1] + 1e-12:
            raise ValueError(f"point {x} outside mesh interval")
        e = int(np.searchsorted(nodes, x, side="right") - 1)
        return min(max(e, 0), self.mesh.n - 1)

    def point_values(self, x, deriv=False):
        """Nodal-basis values (and optionally derivatives) at a physical point.

        Returns (full_node_indices, values[, derivs]) for the element
        containing x; all other basis functions vanish there.
        """
        e = self.element_containing(x)
        a, b = self.mesh.element_bounds(e)
        t = 2.0 * (x - a) / (b - a) - 1.0
        V, D = lagrange_eval(self.ref_nodes, np.array([t]))
        idx = self.element_nodes(e)
        if deriv:
            return idx, V[0], D[0] * (2.0 / (b - a))
        return idx, V[0]

    def scatter(self, u_dofs):
        """Expand DOF values to the full nodal set (constraints applied)."""
        full = np.zeros(self.n_nodes, dtype=np.result_type(u_dofs, np.float64))
        m = self.dof_of_node >= 0
        full[m] = u_dofs[self.dof_of_node[m]]
        return full


def assemble_weighted_matrix(space, weight, du=0, dv=0, nq=None, elements=None):
    """Assemble the matrix of (i, j) -> int weight * basis_i^(du) * basis_j^(dv).

    `weight` is a callable evaluated at the physical quadrature points (it may
    return complex values) or a scalar. Gauss quadrature with nq points per
    element, default order+3. `elements` restricts integration to a subset of
    elements while keeping the full DOF numbering (rows outside the subset
    stay zero). For du == dv the result is exactly symmetric.
    """
    if du not in (0, 1) or dv not in (0, 1):
        raise ValueError("du, dv must be 0 or 1")
    p = space.order
    if nq is None:
        nq = p + 3
    xq, wq = gauss_rule(nq)
    V, D = lagrange_eval(space.ref_nodes, xq)
    if elements is None:
        elements = range(space.mesh.n)

    rows, cols, vals = [], [], []
    for e in elements:
        a, b = space.mesh.element_bounds(e)
        h = b - a
        xphys = a + (xq + 1.0) * 0.5 * h
        w = weight(xphys) if callable(weight) else weight
        w = np.broadcast_to(np.asarray(w), xphys.shape)
        # jacobian h/2 for the measure, 2/h per derivative
        scale = (h / 2.0) * (2.0 / h) ** (du + dv)
        Ba = D if du else V
        Bb = D if dv else V
        local = Ba.T @ ((wq * w * scale)[:, None] * Bb)
        idx = space.dof_of_node[space.element_nodes(e)]
        m = idx >= 0
        ii, jj = np.meshgrid(idx[m], idx[m], indexing="ij")
        rows.append(ii.ravel())
        cols.append(jj.ravel())
        vals.append(local[np.ix_(m, m)].ravel())

    n = space.dof_count
    if not rows:
        return sparse.csr_matrix((n, n))
    A = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    if du == dv:
        A = (A + A.T) * 0.5  # enforce bitwise symmetry
    return A


def interpolate(space, f):
    """Nodal interpolant coefficients of f on the space's DOFs."""
    return np.asarray(f(space.dof_coords))


def write_coo(path, A):
    """Dump a sparse matrix as text lines 'row col re im' for debugging."""
    A = sparse.coo_matrix(A)
    with open(path, "w") as fh:
        for r, c, v in zip(A.row, A.col, A.data):
            z = complex(v)
            fh.write(f"{r} {c} {z.real!r} {z.imag!r}\n")
