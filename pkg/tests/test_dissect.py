import math

import numpy as np
import pytest

from qgcontact.dissect import (cells_per_hyperrectangle, diagonal_trace, dissect,
                               enumerate_cells, exchange_map, permutation_map,
                               symmetric_group_maps)
from qgcontact.errors import NoDiagonal, UnsupportedConfiguration
from qgcontact.graph import Edge, MetricGraph, interval, ring, total_length


def two_edges(l1=1.0, l2=2.0):
    return MetricGraph(("a", "b"), (Edge("e1", "a", "b", l1), Edge("e2", "b", "a", l2)))


def test_single_edge_two_particles():
    dd = dissect(interval(2.0), 2)
    assert sorted(c.kind for c in dd.cells) == ["triangle_minus", "triangle_plus"]
    assert dd.total_measure == pytest.approx(4.0)


def test_two_edges_two_particles():
    dd = dissect(two_edges(), 2)
    kinds = [c.kind for c in dd.cells]
    assert len(kinds) == 6
    assert kinds.count("rectangle") == 2
    assert dd.total_measure == pytest.approx(9.0)


def test_three_particles_single_edge():
    dd = dissect(ring(1.5), 3)
    assert len(dd.cells) == 6 and all(c.kind == "simplex" for c in dd.cells)
    assert dd.total_measure == pytest.approx(1.5 ** 3)
    with pytest.raises(UnsupportedConfiguration):
        dissect(two_edges(), 3)


def test_enumeration_multi_edge_three_particles():
    cells = enumerate_cells(two_edges(), 3)
    # (0,0,0),(1,1,1): 3! each; six mixed tuples with one pair: 2! each
    assert len(cells) == 6 + 6 + 6 * 2
    assert cells_per_hyperrectangle((0, 0, 1)) == 2
    meas = sum(math.prod((1.0, 2.0)[e] for e in edges) / cells_per_hyperrectangle(edges)
               for edges, _ in cells)
    assert meas == pytest.approx(3.0 ** 3)


@pytest.mark.parametrize("g,N", [(interval(1.0), 2), (two_edges(), 2), (ring(1.0), 3)])
def test_facet_pairing_is_perfect_matching(g, N):
    dd = dissect(g, N)
    internal = {k: v for k, v in dd.adjacency.items() if v[0] == "internal"}
    for (c, tag, coords), (_, (other, tag2, coords2)) in internal.items():
        assert tag2 == tag
        back = dd.adjacency[(other, tag2, coords2)]
        assert back == ("internal", (c, tag, coords))
    assert len(internal) % 2 == 0


def test_external_facets_map_to_layout_components():
    dd = dissect(two_edges(), 2)
    ext = [v for v in dd.adjacency.values() if v[0] == "external"]
    assert len(ext) == 16  # four faces per hyperrectangle
    assert all(v[1] is not None for v in ext)


def test_diagonal_trace():
    dd = dissect(interval(3.0), 2)
    tr = diagonal_trace(dd, 0)
    assert tr.plus.kind == "triangle_plus" and tr.minus.kind == "triangle_minus"
    assert tr.length == 3.0
    assert np.allclose(tr.parameterize(1.0), [1.0, 1.0])
    dd2 = dissect(two_edges(), 2)
    assert {diagonal_trace(dd2, e).edge for e in (0, 1)} == {0, 1}
    rect = dd2.find((0, 1), (0, 0))
    with pytest.raises(NoDiagonal):
        diagonal_trace(dd2, 0, rect)


def test_exchange_map():
    dd = dissect(two_edges(), 2)
    ex = exchange_map(dd)
    plus = dd.find((0, 0), (1, 0)).index
    minus = dd.find((0, 0), (0, 1)).index
    assert ex(plus) == minus
    assert ex(dd.find((0, 1), (0, 0)).index) == dd.find((1, 0), (0, 0)).index
    for c in dd.cells:
        assert ex(ex(c.index)) == c.index
    assert np.allclose(ex.point([0.3, 0.7]), [0.7, 0.3])


def test_symmetric_group_acts():
    dd = dissect(ring(1.0), 3)
    maps = symmetric_group_maps(dd)
    assert len(maps) == 6
    for m in maps:
        assert sorted(m.cell_map.values()) == list(range(6))
    cyc = permutation_map(dd, (1, 2, 0))
    c0 = dd.cells[0].index
    assert cyc(cyc(cyc(c0))) == c0
