import numpy as np
import pytest
import scipy.linalg as sl
from hypothesis import given, settings, strategies as st

from qgcontact.boundary import (ContactSpec, build_layout, custom_vertex_conditions,
                                preset_vertex_conditions)
from qgcontact.dissect import dissect
from qgcontact.eigen import solve
from qgcontact.errors import DimensionMismatch, InvalidH, MeshTooFine
from qgcontact.fem import (assemble, build_mesh, diagonal_jump, exchange_operator,
                           form_value, p1_mass, p1_stiffness, weighted_mass, write_coo)
from qgcontact.graph import Edge, MetricGraph, interval, ring

from conftest import make_form


def star2():
    return MetricGraph(("c", "a", "b"), (Edge("e0", "c", "a", 1.0), Edge("e1", "c", "b", 1.6)))


def test_unit_square_mesh_counts():
    mesh = build_mesh(dissect(interval(1.0), 2), 0.5)
    assert mesh.n == 2
    assert len(mesh.elements) == 8
    xy = np.round(mesh.coordinates(), 12)
    assert len(np.unique(xy, axis=0)) == 9
    plus = mesh.domain.find((0, 0), (1, 0)).index
    assert len(mesh.nodes_of_cell(plus)) == 6
    assert len(mesh.elements_of_cell(plus)) == 4


def test_elements_positive_and_inside_cells():
    mesh = build_mesh(dissect(star2(), 2), 0.3)
    xy = mesh.coordinates()
    for el in mesh.elements[:200]:
        v = xy[el]
        assert abs(np.linalg.det(v[1:] - v[0])) > 0
    mesh3 = build_mesh(dissect(ring(1.0), 3), 0.25)
    pts = mesh3.dof_point[mesh3.elements]
    for k, c in zip(pts[::7], mesh3.element_cell[::7]):
        cell = mesh3.domain.cells[c]
        order = np.argsort(cell.ranks)
        assert np.all(np.diff(k[:, order], axis=1) >= 0)


@pytest.mark.parametrize("h", [0.0, -1.0, float("nan"), float("inf")])
def test_invalid_h(h):
    with pytest.raises(InvalidH):
        build_mesh(dissect(interval(1.0), 2), h)


def test_mesh_too_fine():
    with pytest.raises(MeshTooFine):
        build_mesh(dissect(interval(1.0), 2), 1e-3, max_nodes=10_000)


def test_reference_element():
    K = p1_stiffness([[0, 0], [1, 0], [0, 1]])
    assert np.allclose(K, [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])
    M = p1_mass([[0, 0], [1, 0], [0, 1]])
    assert M.sum() == pytest.approx(0.5)
    W = weighted_mass(0.5, 2, [2.0, 2.0, 2.0])
    assert np.allclose(W, 2 * M)


def test_symmetry_and_mass_consistency(ring_delta):
    df = ring_delta
    assert abs(df.K - df.K.T).max() == 0 and abs(df.M - df.M.T).max() == 0
    sl.cholesky(df.M.toarray())
    ones = np.ones(df.mesh.n_nodes)
    assert ones @ df.M_full @ ones == pytest.approx((2 * np.pi) ** 2, rel=1e-12)
    c = df.T.T @ ones
    assert np.allclose(df.T @ c, 1.0)  # constants satisfy continuity and Kirchhoff
    assert c @ df.M @ c == pytest.approx((2 * np.pi) ** 2, rel=1e-10)


def _square_laplacian(n, l):
    """Plain P1 Laplacian on [0,l]^2 with the same Kuhn split, assembled directly."""
    h = l / n
    idx = lambda i, j: i * (n + 1) + j
    N = (n + 1) ** 2
    K = np.zeros((N, N))
    M = np.zeros((N, N))
    for i in range(n):
        for j in range(n):
            for tri in (((i, j), (i + 1, j), (i + 1, j + 1)), ((i, j), (i, j + 1), (i + 1, j + 1))):
                v = np.array(tri, dtype=float) * h
                ids = [idx(*p) for p in tri]
                K[np.ix_(ids, ids)] += p1_stiffness(v)
                M[np.ix_(ids, ids)] += p1_mass(v)
    return K, M


def test_zero_coupling_is_plain_laplacian():
    n = 6
    df = make_form(interval(np.pi), 2, "neumann", ContactSpec.delta(0.0), np.pi / n)
    K, M = _square_laplacian(n, np.pi)
    ref = sl.eigh(K, M, eigvals_only=True)
    got = sl.eigh(df.K.toarray(), df.M.toarray(), eigvals_only=True)
    assert np.allclose(got, ref, atol=1e-10)
    none = make_form(interval(np.pi), 2, "neumann", ContactSpec(), np.pi / n)
    assert np.allclose(sl.eigh(none.K.toarray(), none.M.toarray(), eigvals_only=True), ref, atol=1e-10)


def test_contact_energy_of_constant():
    l, alpha = 1.7, 2.5
    f0 = make_form(interval(l), 2, "neumann", ContactSpec.delta(0.0), l / 9)
    fa = make_form(interval(l), 2, "neumann", ContactSpec.delta(alpha), l / 9)
    c = f0.T.T @ np.ones(f0.mesh.n_nodes)
    assert c @ (fa.K - f0.K) @ c == pytest.approx(alpha * l, rel=1e-10)


@pytest.mark.parametrize("alpha", [[[0.0, 1.0], [1.0, 3.0]], [[0.0, 2.0], [0.5, 0.0], [1.0, 1.0]]])
def test_contact_term_matches_line_quadrature(alpha):
    """x^T (K(alpha) - K(0)) x = int alpha(t/l) |psi(t,t)|^2 dt by Gauss quadrature."""
    l, n = 2.0, 8
    cs = ContactSpec.delta(alpha)
    f0 = make_form(interval(l), 2, "dirichlet", ContactSpec.delta(0.0), l / n)
    fa = make_form(interval(l), 2, "dirichlet", cs, l / n)
    rng = np.random.default_rng(4)
    gx, gw = np.polynomial.legendre.leggauss(4)
    mesh = f0.mesh
    for _ in range(5):
        c = rng.standard_normal(f0.n_free)
        u = f0.T @ c
        k = np.arange(n + 1)
        d = u[mesh.lookup((0, 0), (1, 0), np.stack([k, k], axis=1))]
        h = l / n
        ref = 0.0
        for i in range(n):
            t = (gx + 1) / 2
            psi = d[i] * (1 - t) + d[i + 1] * t
            a = cs.alpha_at((i + t) * h / l)
            ref += np.sum(gw / 2 * h * a * psi ** 2)
        assert c @ (fa.K - f0.K) @ c == pytest.approx(ref, rel=1e-10)


def _symmetric_vectors(df, count, seed):
    S = exchange_operator(df)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((df.n_free, count))
    return 0.5 * (X + S @ X)


@pytest.mark.parametrize("g,preset,alpha", [
    (interval(1.3), "dirichlet", 1.7),
    (ring(2.0), "delta_vertex(1.2)", 0.6),
    (star2(), "delta_vertex(-0.8)", 2.0),
])
def test_bosonic_weights_two_particles(g, preset, alpha):
    cs = ContactSpec.delta([[0.0, alpha], [1.0, 0.5 * alpha]])
    d = make_form(g, 2, preset, cs, 0.2)
    b = make_form(g, 2, preset, cs, 0.2, weights="paper_bosonic")
    assert b.n_free == d.n_free
    X = _symmetric_vectors(d, 100, 1)
    qd = np.einsum("ij,ij->j", X, d.K @ X)
    qb = np.einsum("ij,ij->j", X, b.K @ X)
    assert np.allclose(qb, qd, rtol=1e-10, atol=0)


def test_bosonic_weights_three_particles():
    cs = ContactSpec.delta(1.3)
    d = make_form(ring(1.0), 3, "delta_vertex(0.7)", cs, 1 / 7)
    b = make_form(ring(1.0), 3, "delta_vertex(0.7)", cs, 1 / 7, weights="paper_bosonic")
    from qgcontact.spectra import permutation_operators
    ops = permutation_operators(d)
    rng = np.random.default_rng(2)
    X = rng.standard_normal((d.n_free, 100))
    X = sum(S @ X for _, S, _ in ops) / 6
    qd = np.einsum("ij,ij->j", X, d.K @ X)
    qb = np.einsum("ij,ij->j", X, b.K @ X)
    assert np.allclose(qb, qd, rtol=1e-10, atol=0)


def test_alpha_monotone():
    a1 = ContactSpec.delta([[0.0, 0.5], [1.0, 1.0]])
    a2 = ContactSpec.delta([[0.0, 0.7], [0.4, 3.0], [1.0, 1.0]])
    k1 = make_form(interval(1.0), 2, "kirchhoff", a1, 0.1).K
    k2 = make_form(interval(1.0), 2, "kirchhoff", a2, 0.1).K
    w = np.linalg.eigvalsh((k2 - k1).toarray())
    assert w.min() > -1e-12


@settings(max_examples=15, deadline=None)
@given(alpha=st.floats(0.0, 50.0), preset=st.sampled_from(["dirichlet", "neumann", "kirchhoff"]))
def test_repulsive_forms_psd(alpha, preset):
    K = make_form(ring(1.0) if preset == "kirchhoff" else interval(1.0), 2, preset,
                  ContactSpec.delta(alpha), 0.25).K.toarray()
    assert np.linalg.eigvalsh(K).min() > -1e-10 * max(1.0, np.abs(K).max())


def test_hardcore_psd_and_form_value():
    df = make_form(interval(1.0), 2, "dirichlet", ContactSpec.hardcore(), 0.1)
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert form_value(df, rng.standard_normal(df.n_free)) >= 0
    assert form_value(df, np.zeros(df.n_free)) == 0.0
    with pytest.raises(DimensionMismatch):
        form_value(df, np.zeros(df.n_free + 1))


def test_hardcore_eliminates_diagonal():
    df = make_form(interval(1.0), 2, "neumann", ContactSpec.hardcore(), 0.25)
    mesh = df.mesh
    k = np.arange(mesh.n + 1)
    diag = mesh.lookup((0, 0), (1, 0), np.stack([k, k], axis=1))
    assert np.abs(df.T[diag]).max() == 0
    assert set(diag) <= set(df.constraints["eliminated"])


def test_exchange_operator(ring_delta):
    S = exchange_operator(ring_delta)
    assert abs(S @ S - np.eye(S.shape[0])).max() < 1e-12
    assert abs(S @ ring_delta.K - ring_delta.K @ S).max() < 1e-12


def test_full_vertex_block_matches_lifted():
    g = star2()
    vc = preset_vertex_conditions("delta_vertex(1.1)", g, 2)
    layout = build_layout(g, 2)
    mesh = build_mesh(dissect(g, 2), 0.25)
    cs = ContactSpec.delta(1.0)
    a = assemble(mesh, layout, vc, cs, vertex_mode="lifted")
    b = assemble(mesh, layout, vc, cs, vertex_mode="full")
    wa = sl.eigh(a.K.toarray(), a.M.toarray(), eigvals_only=True, subset_by_index=[0, 9])
    wb = sl.eigh(b.K.toarray(), b.M.toarray(), eigvals_only=True, subset_by_index=[0, 9])
    assert np.allclose(wa, wb, rtol=1e-10)


def test_sampled_vertex_conditions_assemble():
    g = interval(1.0)
    d = 4
    P = np.stack([np.eye(d), np.diag([1.0, 1.0, 0.0, 0.0]), np.eye(d)])
    vc = custom_vertex_conditions(P, np.zeros((3, d, d)), g, 2, (0.0, 0.5, 1.0))
    mesh = build_mesh(dissect(g, 2), 0.1)
    df = assemble(mesh, build_layout(g, 2), vc, ContactSpec.delta(1.0))
    dd = assemble(mesh, build_layout(g, 2), preset_vertex_conditions("dirichlet", g, 2),
                  ContactSpec.delta(1.0))
    # fewer Dirichlet nodes: more freedom, lower ground state
    l1 = solve(df.K, df.M, 1).values[0]
    l2 = solve(dd.K, dd.M, 1).values[0]
    assert df.n_free > dd.n_free and l1 < l2


def test_jump_condition_recovery():
    cs = ContactSpec.delta(3.0)
    errs = []
    for n in (10, 20, 40):
        df = make_form(interval(np.pi), 2, "neumann", cs, np.pi / n)
        r = solve(df.K, df.M, 1)
        errs.append(diagonal_jump(df, df.T @ r.vectors[:, 0], cs)["rel_error"])
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert errs[-1] < 1e-2
    assert np.all(orders >= 1.0)


def test_write_coo(tmp_path, square_neumann_free):
    p = tmp_path / "K.txt"
    write_coo(p, square_neumann_free.K)
    rows = np.loadtxt(p)
    assert rows.shape[1] == 3 and len(rows) == square_neumann_free.K.nnz
    A = np.zeros(square_neumann_free.K.shape)
    A[rows[:, 0].astype(int), rows[:, 1].astype(int)] = rows[:, 2]
    assert np.allclose(A, square_neumann_free.K.toarray())
