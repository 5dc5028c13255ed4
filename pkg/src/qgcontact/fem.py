"""Diagonal-conforming P1 finite elements on dissected configuration spaces.

Every hyperrectangle ``D_{e_1...e_N}`` carries a uniform grid with ``n``
intervals per coordinate, split into Kuhn (Freudenthal) simplices.  The Kuhn
split is invariant under coordinate permutations and every coincidence plane
``x_i = x_j`` of same-edge coordinates is a union of simplex facets, so each
dissected cell is meshed exactly.  Each cell owns its own copy of the grid
nodes in its closure; all couplings between copies (continuity across
diagonals, vertex conditions, Dirichlet conditions) are linear constraints
``C u = 0`` eliminated through an orthonormal prolongation ``u = T c``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .boundary import BoundaryLayout, ContactSpec, VertexConditions
from .dissect import DissectedDomain, edge_groups, permute_label
from .errors import DimensionMismatch, InvalidH, MeshTooFine

DEFAULT_MAX_NODES = 3_000_000
WEIGHT_MODES = ("distinguishable", "paper_bosonic")


# --------------------------------------------------------------------------
# element matrices
# --------------------------------------------------------------------------

def p1_element_matrices(vertices):
    """Volume and barycentric gradients of a P1 simplex.

    ``vertices`` has shape ``(d + 1, d)``.  Returns ``(volume, grads)`` with
    ``grads[k]`` the gradient of the k-th hat function.
    """
    v = np.asarray(vertices, dtype=float)
    d = v.shape[1]
    J = (v[1:] - v[0]).T
    vol = abs(np.linalg.det(J)) / math.factorial(d)
    Jinv = np.linalg.inv(J)
    grads = np.vstack([-Jinv.sum(axis=0), Jinv])
    return vol, grads


def p1_stiffness(vertices) -> np.ndarray:
    vol, g = p1_element_matrices(vertices)
    return vol * g @ g.T


def p1_mass(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    d = v.shape[1]
    vol, _ = p1_element_matrices(v)
    return vol / ((d + 1) * (d + 2)) * (np.ones((d + 1, d + 1)) + np.eye(d + 1))


def weighted_mass(volume: float, d: int, weights) -> np.ndarray:
    """Exact ``int w phi_a phi_b`` on a d-simplex for a P1 weight ``w``."""
    w = np.asarray(weights, dtype=float)
    k = d + 1
    out = np.empty((k, k))
    norm = math.factorial(d) * volume / math.factorial(d + 3)
    for a in range(k):
        for b in range(k):
            s = 0.0
            for c in range(k):
                mult = [0] * k
                mult[a] += 1
                mult[b] += 1
                mult[c] += 1
                s += w[c] * math.prod(math.factorial(m) for m in mult)
            out[a, b] = norm * s
    return out


def kuhn_offsets(perm) -> np.ndarray:
    """Vertex offsets (unit grid) of the Kuhn simplex for a coordinate order."""
    d = len(perm)
    off = np.zeros((d + 1, d), dtype=np.int64)
    for k, a in enumerate(perm):
        off[k + 1] = off[k]
        off[k + 1, a] += 1
    return off


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


# --------------------------------------------------------------------------
# mesh
# --------------------------------------------------------------------------

@dataclass(eq=False)
class Mesh:
    """Nodes (one copy per dissected cell), simplices and lookup tables.

    ``cell_ids[c]`` is an integer array over the grid of the cell's
    hyperrectangle holding node ids, ``-1`` outside the cell.
    """

    domain: DissectedDomain
    n: int
    spacing: tuple[float, ...]
    cell_ids: list
    dof_cell: np.ndarray
    dof_point: np.ndarray
    elements: np.ndarray
    element_cell: np.ndarray
    element_kind: np.ndarray
    kinds: list = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return len(self.dof_cell)

    @property
    def dim(self) -> int:
        return self.domain.n_particles

    @property
    def h(self) -> float:
        return max(self.spacing)

    def cell(self, c):
        return self.domain.cells[c]

    def coordinates(self) -> np.ndarray:
        """Physical coordinates of every node copy."""
        sp_ = np.array([[self.spacing[e] for e in self.cell(c).edges]
                        for c in range(len(self.domain.cells))])
        return self.dof_point * sp_[self.dof_cell]

    def nodes_of_cell(self, c) -> np.ndarray:
        ids = self.cell_ids[c]
        return ids[ids >= 0]

    def elements_of_cell(self, c) -> np.ndarray:
        return self.elements[self.element_cell == c]

    def lookup(self, edges, ranks, points) -> np.ndarray:
        c = self.domain.find(edges, ranks).index
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.dim)
        return self.cell_ids[c][tuple(pts.T)]

    def copies(self, edges, points, priority) -> np.ndarray:
        """Node ids at grid ``points`` of hyperrectangle ``edges``.

        The cell is the one whose ordering the points satisfy, with ties
        between same-edge coordinates broken by ``priority`` (lower value is
        treated as the smaller coordinate).
        """
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.dim)
        ranks = np.zeros_like(pts)
        prio = np.argsort(np.argsort(np.asarray(priority, dtype=float), kind="stable"))
        N = self.dim
        for gr in edge_groups(edges):
            keys = pts[:, gr] * (N + 1) + prio[gr][None, :]
            ranks[:, gr] = np.argsort(np.argsort(keys, axis=1, kind="stable"), axis=1)
        out = np.empty(len(pts), dtype=np.int64)
        codes = ranks @ (N ** np.arange(N))
        for code in np.unique(codes):
            m = codes == code
            c = self.domain.find(edges, tuple(int(r) for r in ranks[np.argmax(m)])).index
            out[m] = self.cell_ids[c][tuple(pts[m].T)]
        return out

    def permutation_matrix(self, perm) -> sp.csr_matrix:
        """Node-copy relabelling for a particle permutation (acts as ``(S u)(x) = u(x o perm)``)."""
        rows, cols = [], []
        perm = list(perm)
        for c, cell in enumerate(self.domain.cells):
            e2, r2 = permute_label(cell.edges, cell.ranks, perm)
            c2 = self.domain.find(e2, r2).index
            ids = self.cell_ids[c]
            mask = ids >= 0
            pts = np.argwhere(mask)
            src = ids[mask]
            dst = self.cell_ids[c2][tuple(pts[:, perm].T)]
            rows.append(src)
            cols.append(dst)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        n = self.n_nodes
        return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


def build_mesh(dd: DissectedDomain, h: float, max_nodes: int = DEFAULT_MAX_NODES) -> Mesh:
    """Structured Kuhn triangulation of all cells with ``<= h`` spacing.

    All edges get the same number ``n = ceil(max_e l_e / h)`` of intervals so
    that boundary nodes of different edges sit at the same normalised
    positions ``y = k / n``.
    """
    if not (isinstance(h, (int, float)) and math.isfinite(h) and h > 0):
        raise InvalidH(f"mesh parameter must be positive, got {h!r}")
    N = dd.n_particles
    n = max(1, math.ceil(max(dd.lengths) / h - 1e-9))
    spacing = tuple(l / n for l in dd.lengths)
    n_rects = len({c.edges for c in dd.cells})
    if n_rects * (n + 1) ** N > max_nodes:
        raise MeshTooFine(f"about {n_rects * (n + 1) ** N} nodes exceed the cap {max_nodes}")

    grid = np.indices((n + 1,) * N).reshape(N, -1).T
    cell_ids = []
    dof_cell = []
    dof_point = []
    start = 0
    for c in dd.cells:
        mask = np.ones(len(grid), dtype=bool)
        for gr in edge_groups(c.edges):
            order = sorted(gr, key=lambda a: c.ranks[a])
            for a, b in zip(order, order[1:]):
                mask &= grid[:, a] <= grid[:, b]
        ids = np.full(len(grid), -1, dtype=np.int64)
        k = int(mask.sum())
        ids[mask] = np.arange(start, start + k)
        start += k
        if start > max_nodes:
            raise MeshTooFine(f"node count exceeds the cap {max_nodes}")
        cell_ids.append(ids.reshape((n + 1,) * N))
        dof_cell.append(np.full(k, c.index))
        dof_point.append(grid[mask])

    bases = np.indices((n,) * N).reshape(N, -1).T
    perms = list(itertools.permutations(range(N)))
    elements, element_cell, element_kind, kinds = [], [], [], []
    rects = sorted({c.edges for c in dd.cells})
    for edges in rects:
        for perm in perms:
            kind_index = len(kinds)
            kinds.append((edges, perm))
            off = kuhn_offsets(perm)
            pos = np.empty(N, dtype=np.int64)
            pos[list(perm)] = np.arange(N)
            # inside the simplex, coordinate perm[0] moves first and is largest
            keys = bases * (N + 1) + (N - pos)[None, :]
            ranks = np.zeros_like(bases)
            for gr in edge_groups(edges):
                ranks[:, gr] = np.argsort(np.argsort(keys[:, gr], axis=1), axis=1)
            codes = ranks @ (N ** np.arange(N))
            for code in np.unique(codes):
                m = codes == code
                rk = tuple(int(r) for r in ranks[np.argmax(m)])
                c = dd.find(edges, rk).index
                verts = bases[m][:, None, :] + off[None, :, :]
                ids = cell_ids[c][tuple(verts.reshape(-1, N).T)].reshape(-1, N + 1)
                elements.append(ids)
                element_cell.append(np.full(len(ids), c))
                element_kind.append(np.full(len(ids), kind_index))
    return Mesh(dd, n, spacing, cell_ids, np.concatenate(dof_cell),
                np.concatenate(dof_point), np.concatenate(elements),
                np.concatenate(element_cell), np.concatenate(element_kind), kinds)


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------

@dataclass(eq=False)
class DiscreteForm:
    """Discrete quadratic form on the constrained P1 space.

    ``K``/``M`` act on the free coefficients ``c``; nodal values are
    ``u = T c``.  ``T`` has orthonormal columns.
    """

    K: sp.csr_matrix
    M: sp.csr_matrix
    T: sp.csr_matrix
    K_full: sp.csr_matrix
    M_full: sp.csr_matrix
    mesh: Mesh
    constraints: dict
    metadata: dict

    @property
    def n_free(self) -> int:
        return self.K.shape[0]

    def nodal(self, coeffs) -> np.ndarray:
        return self.T @ np.asarray(coeffs)

    def operator(self, mat_full) -> sp.csr_matrix:
        """Restriction ``T^T A T`` of a node-space operator."""
        return (self.T.T @ mat_full @ self.T).tocsr()


def _coo(rows, cols, vals, n):
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsr()


def _block_entries(ids, local, scale=1.0):
    """COO triplets for identical local matrices on rows of ``ids``."""
    k = ids.shape[1]
    r = np.repeat(ids, k, axis=1).ravel()
    c = np.tile(ids, (1, k)).ravel()
    v = np.broadcast_to(scale * local.ravel(), (len(ids), k * k)).ravel()
    return r, c, v


def _volume_terms(mesh: Mesh):
    """Full stiffness, stiffness in the first coordinate, and mass."""
    N = mesh.dim
    n_dof = mesh.n_nodes
    K_rows, K_cols, K_vals = [], [], []
    X_rows, X_cols, X_vals = [], [], []
    M_rows, M_cols, M_vals = [], [], []
    for kind_index, (edges, perm) in enumerate(mesh.kinds):
        ids = mesh.elements[mesh.element_kind == kind_index]
        if not len(ids):
            continue
        hs = np.array([mesh.spacing[e] for e in edges])
        verts = kuhn_offsets(perm) * hs[None, :]
        vol, g = p1_element_matrices(verts)
        Kloc = vol * g @ g.T
        Xloc = vol * np.outer(g[:, 0], g[:, 0])
        Mloc = vol / ((N + 1) * (N + 2)) * (np.ones((N + 1, N + 1)) + np.eye(N + 1))
        targets = ((K_rows, K_cols, K_vals, Kloc), (X_rows, X_cols, X_vals, Xloc),
                   (M_rows, M_cols, M_vals, Mloc))
        for R, C, V, loc in targets:
            r, c, v = _block_entries(ids, loc)
            R.append(r)
            C.append(c)
            V.append(v)
    return (_coo(K_rows, K_cols, K_vals, n_dof), _coo(X_rows, X_cols, X_vals, n_dof),
            _coo(M_rows, M_cols, M_vals, n_dof))


def _range_basis(P) -> np.ndarray:
    """Orthonormal basis of the range of a (nearly) orthogonal projector."""
    P = 0.5 * (P + P.T)
    w, U = np.linalg.eigh(P)
    return U[:, w > 0.5]


def _lifted_vertex_groups(mesh: Mesh, particles):
    """Node ids of one-particle boundary vectors at every spectator node.

    Returns ``(F, w, particle)`` with ``F`` of shape ``(m, 2E)`` and
    physical trapezoid weights ``w`` over the spectator coordinates.
    """
    N = mesh.dim
    E = len(mesh.domain.lengths)
    n = mesh.n
    out = []
    for a in particles:
        others = [b for b in range(N) if b != a]
        if N == 1:
            spect = np.zeros((1, 0), dtype=np.int64)
        else:
            spect = np.indices((n + 1,) * (N - 1)).reshape(N - 1, -1).T
        for sedges in itertools.product(range(E), repeat=N - 1):
            w = np.ones(len(spect))
            for k, e in enumerate(sedges):
                w = w * trapezoid_weights(n, mesh.spacing[e])[spect[:, k]]
            F = np.empty((len(spect), 2 * E), dtype=np.int64)
            for end in (0, 1):
                for e in range(E):
                    edges = [0] * N
                    pts = np.empty((len(spect), N), dtype=np.int64)
                    edges[a] = e
                    pts[:, a] = 0 if end == 0 else n
                    for k, b in enumerate(others):
                        edges[b] = sedges[k]
                        pts[:, b] = spect[:, k]
                    prio = np.arange(N, dtype=float)
                    prio[a] = -1 if end == 0 else N
                    F[:, end * E + e] = mesh.copies(tuple(edges), pts, prio)
            out.append((F, w, a))
    return out


def _full_vertex_groups(mesh: Mesh, layout: BoundaryLayout):
    """Node ids of the full two-particle vertex block at each node ``y = k/n``."""
    n = mesh.n
    comps = [c for c in layout.components if c.block == "vertex"]
    F = np.empty((n + 1, len(comps)), dtype=np.int64)
    k = np.arange(n + 1)
    for j, comp in enumerate(comps):
        pts = np.empty((n + 1, 2), dtype=np.int64)
        if comp.face == "x0":
            pts[:, 0], pts[:, 1] = 0, k
        elif comp.face == "xl":
            pts[:, 0], pts[:, 1] = n, k
        elif comp.face == "y0":
            pts[:, 0], pts[:, 1] = k, 0
        else:
            pts[:, 0], pts[:, 1] = k, n
        F[:, j] = mesh.lookup(comp.edges, comp.ranks, pts)
    scale = np.array([c.value_scale for c in comps])
    return F, scale


def _contact_pairs(mesh: Mesh):
    """For every coincidence plane: node ids on the ``x_i > x_j`` side and their mirror copies."""
    N = mesh.dim
    dd = mesh.domain
    plus_ids, minus_ids = [], []
    for c in dd.cells:
        for gr in edge_groups(c.edges):
            for i, j in itertools.combinations(gr, 2):
                if c.ranks[i] != c.ranks[j] + 1:
                    continue
                r = list(c.ranks)
                r[i], r[j] = r[j], r[i]
                mirror = dd.find(c.edges, tuple(r)).index
                ids = mesh.cell_ids[c.index]
                grid = np.indices(ids.shape)
                m = (ids >= 0) & (grid[i] == grid[j])
                plus_ids.append(ids[m])
                minus_ids.append(mesh.cell_ids[mirror][m])
    if not plus_ids:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(plus_ids), np.concatenate(minus_ids)


def _plane_simplices(mesh: Mesh, edges, i, j, side):
    """P1 simplices of the plane ``x_i = x_j`` seen from one side.

    Returns ``(ids, s_index, volume)``: node ids per plane simplex (taken from
    the cell on the requested side), the grid index of the coincidence
    coordinate at each vertex, and the simplex volume in the coordinate
    measure ``ds prod dx_k``.
    """
    N = mesh.dim
    n = mesh.n
    others = [k for k in range(N) if k not in (i, j)]
    d = N - 1
    hs = np.array([mesh.spacing[edges[i]]] + [mesh.spacing[edges[k]] for k in others])
    bases = np.indices((n,) * d).reshape(d, -1).T
    out_ids, out_s = [], []
    vol = None
    for perm in itertools.permutations(range(d)):
        off = kuhn_offsets(perm)
        vol_p, _ = p1_element_matrices(off * hs[None, :])
        vol = vol_p
        verts = bases[:, None, :] + off[None, :, :]
        centroid = verts.mean(axis=1)
        full_c = np.empty((len(bases), N))
        full_v = np.empty((len(bases), d + 1, N), dtype=np.int64)
        full_c[:, i] = centroid[:, 0]
        full_c[:, j] = centroid[:, 0]
        full_v[:, :, i] = verts[:, :, 0]
        full_v[:, :, j] = verts[:, :, 0]
        for k, b in enumerate(others, start=1):
            full_c[:, b] = centroid[:, k]
            full_v[:, :, b] = verts[:, :, k]
        eps = np.zeros(N)
        eps[i if side > 0 else j] = 1e-6
        keyed = full_c + eps[None, :]
        ranks = np.zeros((len(bases), N), dtype=np.int64)
        for gr in edge_groups(edges):
            ranks[:, gr] = np.argsort(np.argsort(keyed[:, gr], axis=1), axis=1)
        codes = ranks @ (N ** np.arange(N))
        for code in np.unique(codes):
            m = codes == code
            rk = tuple(int(r) for r in ranks[np.argmax(m)])
            cidx = mesh.domain.find(edges, rk).index
            ids = mesh.cell_ids[cidx][tuple(full_v[m].reshape(-1, N).T)].reshape(-1, d + 1)
            out_ids.append(ids)
            out_s.append(verts[m][:, :, 0])
    return np.concatenate(out_ids), np.concatenate(out_s), vol


def _contact_mass(mesh: Mesh, cs: ContactSpec, coeff, pairs="all"):
    """``sum int alpha(s/l) conj(u_a) u_b`` over coincidence planes.

    ``coeff`` is the 2x2 matrix acting on (plus, minus) copies.  With
    ``pairs="first"`` only the plane ``x_0 = x_1`` is used.
    """
    N = mesh.dim
    n_dof = mesh.n_nodes
    rows, cols, vals = [], [], []
    rects = sorted({c.edges for c in mesh.domain.cells})
    for edges in rects:
        for gr in edge_groups(edges):
            for i, j in itertools.combinations(gr, 2):
                if pairs == "first" and (i, j) != (0, 1):
                    continue
                sides = {}
                for side in (1, -1):
                    sides[side] = _plane_simplices(mesh, edges, i, j, side)
                s_idx = sides[1][1]
                vol = sides[1][2]
                alpha = cs.alpha_at(s_idx / mesh.n)
                d = N - 1
                # local alpha-weighted mass per plane simplex
                k = d + 1
                norm = math.factorial(d) * vol / math.factorial(d + 3)
                loc = np.empty((len(s_idx), k, k))
                for a in range(k):
                    for b in range(k):
                        acc = 0.0
                        for cc in range(k):
                            mult = [0] * k
                            mult[a] += 1
                            mult[b] += 1
                            mult[cc] += 1
                            acc = acc + alpha[:, cc] * math.prod(math.factorial(mm) for mm in mult)
                        loc[:, a, b] = norm * acc
                for si, s1 in enumerate((1, -1)):
                    for sj, s2 in enumerate((1, -1)):
                        w = coeff[si, sj]
                        if w == 0:
                            continue
                        ida = sides[s1][0]
                        idb = sides[s2][0]
                        rows.append(np.repeat(ida, k, axis=1).ravel())
                        cols.append(np.tile(idb, (1, k)).ravel())
                        vals.append((w * loc).ravel())
    return _coo(rows, cols, vals, n_dof)


def prolongation_from_constraints(C: sp.csr_matrix, n: int, tol: float = 1e-10):
    """Orthonormal basis ``T`` of ``ker C`` built component by component.

    DOFs coupled by constraint rows form small connected components; the
    null space of each component block is computed by a dense SVD.  Returns
    ``(T, record)``.
    """
    C = C.tocoo()
    keep = C.data != 0
    r, c, v = C.row[keep], C.col[keep], C.data[keep]
    involved = np.unique(c)
    record = {"n_rows": int(C.shape[0]), "n_involved": int(len(involved))}
    if len(involved) == 0:
        record.update(n_eliminated=0, n_components=0)
        return sp.identity(n, format="csr"), record
    loc = np.full(n, -1, dtype=np.int64)
    loc[involved] = np.arange(len(involved))
    nrows = C.shape[0]
    # bipartite row/dof graph -> components
    B = sp.coo_matrix((np.ones(len(r)), (r, loc[c] + nrows)),
                      shape=(nrows + len(involved),) * 2)
    ncomp, labels = connected_components(B, directed=False)
    dof_label = labels[nrows + np.arange(len(involved))]
    entry_label = dof_label[loc[c]]
    order = np.argsort(entry_label, kind="stable")
    r, c, v, entry_label = r[order], c[order], v[order], entry_label[order]
    bounds = np.searchsorted(entry_label, np.arange(ncomp + 1))
    dof_order = np.argsort(dof_label, kind="stable")
    dofs_sorted = involved[dof_order]
    dbounds = np.searchsorted(dof_label[dof_order], np.arange(ncomp + 1))

    t_rows, t_anchor, t_vals = [], [], []
    eliminated = []
    for k in range(ncomp):
        dofs = dofs_sorted[dbounds[k]:dbounds[k + 1]]
        if len(dofs) == 0:
            continue
        rr = r[bounds[k]:bounds[k + 1]]
        cc = c[bounds[k]:bounds[k + 1]]
        vv = v[bounds[k]:bounds[k + 1]]
        urows, rinv = np.unique(rr, return_inverse=True)
        blk = np.zeros((len(urows), len(dofs)))
        np.add.at(blk, (rinv, np.searchsorted(dofs, cc)), vv)
        if len(dofs) == 1:
            if np.abs(blk).max() > tol:
                eliminated.append(dofs[0])
                continue
            basis = np.ones((1, 1))
        else:
            _, s, Vt = np.linalg.svd(blk, full_matrices=True)
            rank = int((s > tol * max(1.0, s.max(initial=0.0))).sum())
            basis = Vt[rank:].T
            if basis.shape[1] == 0:
                eliminated.extend(dofs.tolist())
                continue
        for col in range(basis.shape[1]):
            vec = basis[:, col]
            if vec[np.argmax(np.abs(vec))] < 0:
                vec = -vec
            nz = np.abs(vec) > 1e-15
            t_rows.append(dofs[nz])
            t_vals.append(vec[nz])
            t_anchor.append(dofs[nz].min())
    free = np.setdiff1d(np.arange(n), involved, assume_unique=True)
    anchors = np.concatenate([free, np.array(t_anchor, dtype=np.int64)])
    col_order = np.argsort(anchors, kind="stable")
    col_of = np.empty(len(anchors), dtype=np.int64)
    col_of[col_order] = np.arange(len(anchors))
    rows_all = [free]
    cols_all = [col_of[:len(free)]]
    vals_all = [np.ones(len(free))]
    for g, (rows_g, vals_g) in enumerate(zip(t_rows, t_vals)):
        rows_all.append(rows_g)
        cols_all.append(np.full(len(rows_g), col_of[len(free) + g]))
        vals_all.append(vals_g)
    T = sp.coo_matrix((np.concatenate(vals_all),
                       (np.concatenate(rows_all), np.concatenate(cols_all))),
                      shape=(n, len(anchors))).tocsr()
    record.update(n_eliminated=len(eliminated), n_components=int(ncomp),
                  eliminated=np.array(sorted(eliminated), dtype=np.int64))
    return T, record


class _RowBuilder:
    def __init__(self):
        self.rows, self.cols, self.vals, self.tags = [], [], [], []
        self.count = 0

    def add(self, cols, coeffs, tag):
        """Rows ``sum_j coeffs[k, j] u[cols[m, j]] = 0`` for every m and k."""
        cols = np.atleast_2d(cols)
        coeffs = np.atleast_2d(coeffs)
        m, d = cols.shape
        nr = coeffs.shape[0]
        if nr == 0 or m == 0:
            return
        ridx = self.count + np.arange(m * nr).reshape(m, nr)
        self.rows.append(np.repeat(ridx, d, axis=1).ravel())
        self.cols.append(np.repeat(cols[:, None, :], nr, axis=1).ravel())
        self.vals.append(np.broadcast_to(coeffs[None], (m, nr, d)).ravel())
        self.tags.append((tag, m * nr))
        self.count += m * nr

    def add_varying(self, cols, coeffs, tag):
        """Like :meth:`add` with per-row coefficient blocks ``coeffs[m]``."""
        m, nr, d = coeffs.shape
        if nr == 0 or m == 0:
            return
        ridx = self.count + np.arange(m * nr).reshape(m, nr)
        self.rows.append(np.repeat(ridx, d, axis=1).ravel())
        self.cols.append(np.repeat(cols[:, None, :], nr, axis=1).ravel())
        self.vals.append(coeffs.ravel())
        self.tags.append((tag, m * nr))
        self.count += m * nr

    def matrix(self, n):
        if not self.rows:
            return sp.csr_matrix((0, n))
        return sp.coo_matrix((np.concatenate(self.vals),
                              (np.concatenate(self.rows), np.concatenate(self.cols))),
                             shape=(self.count, n)).tocsr()


def assemble(mesh: Mesh, layout: BoundaryLayout | None, vc: VertexConditions,
             cs: ContactSpec, weights: str = "distinguishable",
             vertex_mode: str = "auto") -> DiscreteForm:
    """Discrete quadratic form, mass matrix and constrained space.

    ``weights="distinguishable"`` assembles
    ``int |grad u|^2 - int <u_bv, L u_bv> + sum_pairs int alpha |u|^2`` with
    the contact term in the coordinate measure along each coincidence set.
    ``weights="paper_bosonic"`` assembles the bosonic expression
    ``N int |u_x1|^2 - N <vertex term of particle 1> + N(N-1)/2 int_{x1=x2} alpha |u|^2``
    on the same constrained space; both agree on exchange-symmetric vectors.
    """
    if weights not in WEIGHT_MODES:
        raise ValueError(f"unknown weight mode {weights!r}")
    N = mesh.dim
    E = len(mesh.domain.lengths)
    n_dof = mesh.n_nodes
    if vc.n_particles != N:
        raise DimensionMismatch(f"vertex conditions are for N={vc.n_particles}, mesh has N={N}")
    if vc.one_particle is not None and vc.one_particle[0].shape[0] != 2 * E:
        raise DimensionMismatch("one-particle vertex matrices do not match the graph")
    mode = vertex_mode
    if mode == "auto":
        mode = "lifted" if vc.one_particle is not None else "full"
    if mode == "full" and (N != 2 or vc.P is None or layout is None):
        raise DimensionMismatch("full vertex blocks need N = 2, sampled matrices and a layout")

    K_vol, K_x, M_full = _volume_terms(mesh)
    bosonic = weights == "paper_bosonic"
    K_full = N * K_x if bosonic else K_vol

    rb = _RowBuilder()
    vrows, vcols, vvals = [], [], []
    if mode == "lifted":
        P1, L1 = vc.one_particle
        U = _range_basis(P1).T
        for F, w, a in _lifted_vertex_groups(mesh, range(N)):
            rb.add(F, U, "vertex")
            if bosonic and a != 0:
                continue
            if np.any(L1):
                fac = N if bosonic else 1.0
                k = F.shape[1]
                vrows.append(np.repeat(F, k, axis=1).ravel())
                vcols.append(np.tile(F, (1, k)).ravel())
                vvals.append((-fac * w[:, None, None] * L1[None]).ravel())
    else:
        if bosonic:
            raise DimensionMismatch("the bosonic weight mode needs lifted vertex conditions")
        F, scale = _full_vertex_groups(mesh, layout)
        n = mesh.n
        wy = trapezoid_weights(n, 1.0 / n)
        coeffs = []
        for k in range(n + 1):
            Pk, Lk = vc.sample(k / n)
            U = _range_basis(Pk)
            Q = np.eye(len(Pk)) - U @ U.T
            Lk = Q @ Lk @ Q
            blk = np.zeros((F.shape[1], F.shape[1]))
            blk[:U.shape[1]] = (U.T * scale[None, :])
            coeffs.append(blk)
            Lsc = scale[:, None] * Lk * scale[None, :]
            if np.any(Lsc):
                d = F.shape[1]
                vrows.append(np.repeat(F[k], d))
                vcols.append(np.tile(F[k], d))
                vvals.append((-wy[k] * Lsc).ravel())
        rb.add_varying(F, np.array(coeffs), "vertex")
    K_full = K_full + _coo(vrows, vcols, vvals, n_dof)

    if N >= 2:
        plus, minus = _contact_pairs(mesh)
        pm = np.stack([plus, minus], axis=1)
        if cs.is_delta_like:
            rb.add(pm, np.array([[1.0, -1.0]]) / math.sqrt(2), "contact-continuity")
        elif cs.kind == "hardcore":
            rb.add(pm, np.eye(2), "contact-dirichlet")
        if cs.kind == "delta" and any(cs.alpha_values):
            if bosonic:
                coeff = np.array([[N * (N - 1) / 2, 0.0], [0.0, 0.0]])
                K_full = K_full + _contact_mass(mesh, cs, coeff, pairs="first")
            else:
                Pc, _ = cs.contact_blocks(0.0, "distinguishable")
                coeff = 0.5 * (np.eye(2) - Pc)
                K_full = K_full + _contact_mass(mesh, cs, coeff)

    C = rb.matrix(n_dof)
    T, record = prolongation_from_constraints(C, n_dof)
    record["tags"] = rb.tags
    K_full = (0.5 * (K_full + K_full.T)).tocsr()
    M_full = (0.5 * (M_full + M_full.T)).tocsr()
    K = (T.T @ K_full @ T).tocsr()
    M = (T.T @ M_full @ T).tocsr()
    K = (0.5 * (K + K.T)).tocsr()
    M = (0.5 * (M + M.T)).tocsr()
    meta = {
        "weights": weights,
        "vertex_mode": mode,
        "contact": cs.kind,
        "contact_measure": "coordinate dt along coincidence sets",
        "contact_quadrature": "exact for piecewise-linear alpha",
        "vertex_quadrature": "trapezoidal on boundary node chains",
        "h": mesh.h,
        "n": mesh.n,
    }
    return DiscreteForm(K, M, T, K_full, M_full, mesh, record, meta)


def form_value(df: DiscreteForm, coeffs) -> float:
    c = np.asarray(coeffs, dtype=float)
    if c.shape != (df.n_free,):
        raise DimensionMismatch(f"expected {df.n_free} coefficients, got {c.shape}")
    return float(c @ (df.K @ c))


def exchange_operator(df: DiscreteForm, perm=(1, 0)) -> sp.csr_matrix:
    """Particle permutation acting on the free coefficients, ``T^T S T``."""
    perm = tuple(perm) + tuple(range(len(perm), df.mesh.dim))
    S = df.mesh.permutation_matrix(perm)
    return (df.T.T @ S @ df.T).tocsr()


def write_coo(path, A) -> None:
    """Dump a sparse matrix as ``row col value`` lines."""
    A = sp.coo_matrix(A)
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        for i, j, v in zip(A.row[order], A.col[order], A.data[order]):
            fh.write(f"{i} {j} {v:.17g}\n")


def diagonal_jump(df: DiscreteForm, u, cs: ContactSpec, edge: int = 0) -> dict:
    """Normal-derivative jump of a two-particle P1 function across ``x = y`` on edge ``edge``.

    For every diagonal segment the gradients of the two adjacent simplices
    (one on each side) give the inward normal derivatives.  A solution of
    the delta-type problem satisfies ``d_n u^+ + d_n u^- = alpha u / sqrt(2)``
    there.  ``u`` holds nodal values (``T c``).  Returns the segment
    midpoints ``t``, the computed jump, the target and the relative discrete
    L2 error.
    """
    mesh = df.mesh
    if mesh.dim != 2:
        raise DimensionMismatch("diagonal jumps are defined for two particles")
    n = mesh.n
    hx = mesh.spacing[edge]
    i = np.arange(n)
    e2 = (edge, edge)
    plus = [mesh.lookup(e2, (1, 0), np.stack([a, b], axis=1))
            for a, b in ((i, i), (i + 1, i), (i + 1, i + 1))]
    minus = [mesh.lookup(e2, (0, 1), np.stack([a, b], axis=1))
             for a, b in ((i, i), (i, i + 1), (i + 1, i + 1))]
    u = np.asarray(u)
    # plus triangle (i,i),(i+1,i),(i+1,i+1): u_x = u1 - u0, u_y = u2 - u1
    gx_p = (u[plus[1]] - u[plus[0]]) / hx
    gy_p = (u[plus[2]] - u[plus[1]]) / hx
    # minus triangle (i,i),(i,i+1),(i+1,i+1): u_y = u1 - u0, u_x = u2 - u1
    gy_m = (u[minus[1]] - u[minus[0]]) / hx
    gx_m = (u[minus[2]] - u[minus[1]]) / hx
    dn_plus = (gx_p - gy_p) / np.sqrt(2)
    dn_minus = -(gx_m - gy_m) / np.sqrt(2)
    jump = dn_plus + dn_minus
    t = (i + 0.5) * hx
    value = 0.25 * (u[plus[0]] + u[plus[2]] + u[minus[0]] + u[minus[2]])
    target = cs.alpha_at(t / mesh.domain.lengths[edge]) * value / np.sqrt(2)
    err = np.sqrt(np.sum((jump - target) ** 2) * hx)
    scale = np.sqrt(np.sum(target ** 2) * hx)
    return {"t": t, "jump": jump, "target": target, "error": float(err),
            "rel_error": float(err / scale) if scale > 0 else float(err)}
