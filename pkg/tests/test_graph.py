import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from qgcontact.boundary import ContactSpec
from qgcontact.errors import SchemaError, ValidationError
from qgcontact.graph import (Edge, GraphSpec, MetricGraph, interval, load_graph_spec,
                             parse_graph_spec, ring, serialize_graph_spec, total_length)

RING_DOC = {
    "vertices": ["v1"],
    "edges": [{"id": "e1", "from": "v1", "to": "v1", "length": 6.2831853}],
    "particles": {"n": 2, "statistics": "bosonic"},
    "vertex_conditions": "kirchhoff",
    "contact": {"type": "delta", "alpha": 2.0},
}


def test_parse_ring_document():
    spec = parse_graph_spec(json.dumps(RING_DOC))
    assert spec.graph.E == 1 and spec.graph.V == 1
    assert spec.n_particles == 2 and spec.statistics == "bosonic"
    assert spec.contact.kind == "delta" and spec.contact.alpha_values == (2.0, 2.0)
    assert spec.graph.endpoints_at("v1") == [0, 1]


def test_total_length():
    g = MetricGraph(("a", "b"), (Edge("e1", "a", "b", 1.0), Edge("e2", "b", "a", 2.5)))
    assert total_length(g) == 3.5
    assert total_length(ring(2 * math.pi)) == pytest.approx(2 * math.pi)


@pytest.mark.parametrize("length", [0.0, -1.0, float("inf"), float("nan")])
def test_bad_lengths_rejected(length):
    with pytest.raises(ValidationError):
        interval(length)


def test_unknown_vertex_and_empty_graph():
    with pytest.raises(ValidationError):
        MetricGraph(("a",), (Edge("e", "a", "b", 1.0),))
    with pytest.raises(ValidationError):
        MetricGraph(("a",), ())
    with pytest.raises(ValidationError):
        MetricGraph(("a",), (Edge("e", "a", "a", 1.0), Edge("e", "a", "a", 2.0)))


@pytest.mark.parametrize("text", ["not json", "[]", '{"vertices": "v"}',
                                  '{"vertices": ["a"], "edges": [{"from": "a", "to": "a"}]}',
                                  '{"vertices": ["a"], "edges": [{"from": "a", "to": "a", "length": 1}], "contact": {"type": "laser"}}'])
def test_schema_errors(text):
    with pytest.raises(SchemaError):
        parse_graph_spec(text)


def test_schema_vs_validation_error():
    doc = dict(RING_DOC, edges=[{"id": "e1", "from": "v1", "to": "v1", "length": -2}])
    with pytest.raises(ValidationError):
        parse_graph_spec(json.dumps(doc))


def test_bosonic_needs_two_particles():
    with pytest.raises(ValidationError):
        GraphSpec(interval(1.0), 1, "bosonic")


def test_load_from_file(tmp_path):
    p = tmp_path / "ring.json"
    p.write_text(json.dumps(RING_DOC))
    assert load_graph_spec(p).fingerprint() == parse_graph_spec(json.dumps(RING_DOC)).fingerprint()


lengths = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(ls=st.lists(lengths, min_size=1, max_size=4), n=st.integers(1, 3),
       alpha=st.floats(min_value=-5, max_value=5, allow_nan=False))
def test_serialize_roundtrip(ls, n, alpha):
    verts = tuple(f"v{k}" for k in range(len(ls) + 1))
    edges = tuple(Edge(f"e{k}", verts[k], verts[k + 1], v) for k, v in enumerate(ls))
    spec = GraphSpec(MetricGraph(verts, edges), n, "distinguishable", "dirichlet",
                     ContactSpec.delta(alpha))
    back = parse_graph_spec(serialize_graph_spec(spec))
    assert back.graph == spec.graph
    assert back.contact == spec.contact
    assert back.fingerprint() == spec.fingerprint()
