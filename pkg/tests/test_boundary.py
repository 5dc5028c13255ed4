import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qgcontact.boundary import (ContactSpec, build_layout, check_pl,
                                check_regularity_hypotheses, custom_vertex_conditions,
                                layout_count, lift_two_particle, one_particle_preset,
                                preset_vertex_conditions, validate_pl,
                                vertex_conditions_from_spec)
from qgcontact.errors import DimensionMismatch, UnknownPreset, ValidationError
from qgcontact.graph import Edge, MetricGraph, interval, ring

PRESETS = ["kirchhoff", "dirichlet", "neumann", "delta_vertex(1.5)", "delta_vertex(-2)"]


def star(E):
    verts = ("c",) + tuple(f"o{k}" for k in range(E))
    return MetricGraph(verts, tuple(Edge(f"e{k}", "c", f"o{k}", 1.0 + k) for k in range(E)))


def flower(E):
    return MetricGraph(("c",), tuple(Edge(f"e{k}", "c", "c", 1.0 + 0.5 * k) for k in range(E)))


@pytest.mark.parametrize("E", range(1, 7))
def test_layout_counts(E):
    g = star(E)
    dist = build_layout(g, 2)
    bos = build_layout(g, 2, "bosonic")
    assert dist.dim == 4 * E * E + 2 * E == layout_count(E)
    assert bos.dim == 2 * E * E + E == layout_count(E, "bosonic")
    assert dist.n_contact == 2 * E and bos.n_contact == E
    # contact block comes first
    assert all(c.block == "contact" for c in dist.components[dist.contact_slice])
    assert all(c.block == "vertex" for c in dist.components[dist.vertex_slice])


def test_layout_examples():
    assert build_layout(interval(1.0), 2).dim == 6
    assert build_layout(interval(1.0), 2, "bosonic").dim == 3
    assert build_layout(star(2), 2).dim == 20


@pytest.mark.parametrize("preset", PRESETS)
@pytest.mark.parametrize("g", [interval(2.0), ring(3.0), star(3), flower(2)], ids=["I", "R", "S3", "F2"])
@pytest.mark.parametrize("N", [1, 2, 3])
def test_presets_admissible(preset, g, N):
    if N == 3 and g.E != 1:
        pytest.skip("three particles only on one edge")
    vc = preset_vertex_conditions(preset, g, N)
    rep = validate_pl(vc, ContactSpec.delta(1.0) if N >= 2 else None, "distinguishable",
                      g.E if vc.P is not None and N == 2 else None)
    assert rep.ok, rep.failures()
    assert vc.y_independent


def test_preset_matrices():
    g = interval(1.0)
    P, L = one_particle_preset("dirichlet", g)
    assert np.array_equal(P, np.eye(2)) and not L.any()
    P, L = one_particle_preset("neumann", g)
    assert not P.any() and not L.any()
    # Kirchhoff at degree-one vertices is Neumann
    P, L = one_particle_preset("kirchhoff", g)
    assert not P.any() and not L.any()
    # a ring vertex joins both ends of the loop: continuity plus derivative balance
    P, _ = one_particle_preset("kirchhoff", ring(1.0))
    assert np.allclose(P, 0.5 * np.array([[1, -1], [-1, 1]]))


def test_delta_vertex_strength():
    """L = -(s/d^2) 11^T: the quadratic term on continuous data is s |f(v)|^2."""
    g = star(3)
    vc = preset_vertex_conditions("delta_vertex(2.5)", g, 1)
    P1, L1 = vc.one_particle
    f = np.zeros(6)
    f[g.endpoints_at("c")] = 0.7
    assert np.allclose(P1 @ f, 0)
    assert -f @ L1 @ f == pytest.approx(2.5 * 0.7 ** 2)


def test_preset_names():
    g = interval(1.0)
    assert preset_vertex_conditions(("delta_vertex", 2.0), g, 1).preset == "delta_vertex(2)"
    with pytest.raises(UnknownPreset):
        preset_vertex_conditions("robin", g, 2)


def test_lift_is_block_diagonal_in_spectator():
    g = star(2)
    P1, _ = one_particle_preset("kirchhoff", g)
    P = lift_two_particle(P1, 2)
    assert np.allclose(P @ P, P) and np.allclose(P, P.T)
    assert np.trace(P) == pytest.approx(2 * 2 * np.trace(P1))


def test_check_pl_examples():
    assert all(ok for ok, _ in check_pl(np.eye(3), np.zeros((3, 3))).values())
    Pc = 0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert all(ok for ok, _ in check_pl(Pc, np.zeros((2, 2))).values())
    res = check_pl(np.array([[1.0, 1.0], [0.0, 1.0]]), np.zeros((2, 2)))
    assert not res["P_self_adjoint"][0]
    with pytest.raises(DimensionMismatch):
        check_pl(np.eye(2), np.eye(3))


def test_contact_kernel_is_continuity():
    P, L = ContactSpec.delta(3.0).contact_blocks(0.3)
    w, V = np.linalg.eigh(P)
    ker = V[:, np.isclose(w, 0)]
    assert ker.shape[1] == 1
    assert np.allclose(np.abs(ker[:, 0]), 1 / np.sqrt(2))
    assert np.allclose(P @ L, 0) and np.allclose(L, L.T)
    # the form on continuous data is alpha |psi|^2 / 2 per side pair normalisation
    v = np.array([1.0, 1.0])
    assert -v @ L @ v == pytest.approx(3.0)


def test_custom_rejects_inadmissible():
    g = interval(1.0)
    with pytest.raises(ValidationError):
        custom_vertex_conditions(np.array([[1.0, 1.0], [0.0, 1.0]]), np.zeros((2, 2)), g, 2)
    with pytest.raises(DimensionMismatch):
        custom_vertex_conditions(np.eye(3), np.zeros((3, 3)), g, 2)


def test_spec_document_forms():
    g = star(2)
    vc = vertex_conditions_from_spec({"per_vertex": {"c": "kirchhoff", "o0": {"delta": 1.0}},
                                      "default": "dirichlet"}, g, 2)
    P1, L1 = vc.one_particle
    assert P1[3, 3] == 1.0  # o1 sits at the far end of edge 1 and is Dirichlet
    assert np.allclose(P1 @ P1, P1)
    vc = vertex_conditions_from_spec({"P": np.eye(4).tolist()}, g, 1)
    assert np.array_equal(vc.one_particle[0], np.eye(4))
    with pytest.raises(ValidationError):
        vertex_conditions_from_spec(3, g, 2)


def test_regularity_advisories():
    vc = preset_vertex_conditions("kirchhoff", ring(1.0), 2)
    assert check_regularity_hypotheses(vc, ContactSpec.delta(2.0)) == []
    warn = check_regularity_hypotheses(vc, ContactSpec.delta([[0.0, 0.0], [1.0, 1.0]]))
    assert "alpha not constant near endpoints" in warn
    g = interval(1.0)
    d = 6 - 2  # vertex block of E=1
    P0 = np.zeros((d, d))
    P1 = np.diag([1.0, 0, 0, 0])
    vc = custom_vertex_conditions(np.stack([P0, P1, P1]), np.zeros((3, d, d)), g, 2, (0.0, 0.1, 1.0))
    warn = check_regularity_hypotheses(vc, ContactSpec.delta(1.0))
    assert any("y=0" in w for w in warn)


def test_alpha_repulsive_flag():
    assert ContactSpec.delta(0.5).repulsive
    assert not ContactSpec.delta([[0.0, 1.0], [1.0, -0.1]]).repulsive
    assert ContactSpec.hardcore().repulsive


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), rank=st.integers(0, 4))
def test_random_projector_admissible(seed, rank):
    """Any orthogonal projector with L compressed to its kernel passes."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    U = Q[:, :rank]
    P = U @ U.T
    A = rng.standard_normal((4, 4))
    K = np.eye(4) - P
    L = K @ (A + A.T) @ K
    assert all(ok for ok, _ in check_pl(P, L).values())
    bad = L + 0.1 * P
    if rank:
        assert not check_pl(P, bad)["L_in_ker_P"][0]
