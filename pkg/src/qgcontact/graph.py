"""Compact metric graphs and the JSON graph-specification document."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

from .boundary import ContactSpec
from .errors import SchemaError, ValidationError

STATISTICS = ("distinguishable", "bosonic")


@dataclass(frozen=True)
class Edge:
    id: str
    tail: str
    head: str
    length: float


@dataclass(frozen=True)
class MetricGraph:
    """Finite graph whose edges are identified with intervals ``[0, l_e]``.

    The edge ``e`` starts (x = 0) at ``tail`` and ends (x = l_e) at ``head``.
    Loop edges and multi-edges are allowed.
    """

    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(self.edges))
        if len(set(self.vertices)) != len(self.vertices):
            raise ValidationError("duplicate vertex ids")
        if not self.edges:
            raise ValidationError("graph has no edges")
        ids = [e.id for e in self.edges]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate edge ids")
        known = set(self.vertices)
        for e in self.edges:
            if not (isinstance(e.length, (int, float)) and math.isfinite(e.length)):
                raise ValidationError(f"edge {e.id!r}: length must be a finite real")
            if e.length <= 0:
                raise ValidationError(f"edge {e.id!r}: nonpositive length {e.length}")
            for v in (e.tail, e.head):
                if v not in known:
                    raise ValidationError(f"edge {e.id!r}: unknown vertex {v!r}")

    @property
    def E(self) -> int:
        return len(self.edges)

    @property
    def V(self) -> int:
        return len(self.vertices)

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(float(e.length) for e in self.edges)

    def endpoints_at(self, v: str) -> list[int]:
        """Indices into the one-particle boundary vector of the edge ends at ``v``.

        Index ``e`` is ``f_e(0)`` and index ``E + e`` is ``f_e(l_e)``.
        """
        out = []
        for i, e in enumerate(self.edges):
            if e.tail == v:
                out.append(i)
            if e.head == v:
                out.append(self.E + i)
        return out


def total_length(g: MetricGraph) -> float:
    return float(math.fsum(e.length for e in g.edges))


def interval(length: float) -> MetricGraph:
    """Single edge between two distinct vertices."""
    return MetricGraph(("v0", "v1"), (Edge("e0", "v0", "v1", float(length)),))


def ring(length: float) -> MetricGraph:
    """Single loop edge attached to one vertex."""
    return MetricGraph(("v0",), (Edge("e0", "v0", "v0", float(length)),))


@dataclass(frozen=True)
class GraphSpec:
    graph: MetricGraph
    n_particles: int = 1
    statistics: str = "distinguishable"
    vertex_conditions: Any = "kirchhoff"
    contact: ContactSpec = field(default_factory=ContactSpec)

    def __post_init__(self):
        if not isinstance(self.n_particles, int) or self.n_particles < 1:
            raise ValidationError("particle count must be a positive integer")
        if self.statistics not in STATISTICS:
            raise ValidationError(f"unknown statistics {self.statistics!r}")
        if self.statistics == "bosonic" and self.n_particles < 2:
            raise ValidationError("bosonic statistics requires at least two particles")

    def to_dict(self) -> dict:
        return {
            "vertices": list(self.graph.vertices),
            "edges": [
                {"id": e.id, "from": e.tail, "to": e.head, "length": e.length}
                for e in self.graph.edges
            ],
            "particles": {"n": self.n_particles, "statistics": self.statistics},
            "vertex_conditions": self.vertex_conditions,
            "contact": self.contact.to_json(),
        }

    def fingerprint(self) -> str:
        return hashlib.sha256(serialize_graph_spec(self).encode()).hexdigest()[:16]

    def replace(self, **changes) -> "GraphSpec":
        kw = dict(graph=self.graph, n_particles=self.n_particles,
                  statistics=self.statistics,
                  vertex_conditions=self.vertex_conditions, contact=self.contact)
        kw.update(changes)
        return GraphSpec(**kw)


def serialize_graph_spec(spec: GraphSpec) -> str:
    return json.dumps(spec.to_dict(), sort_keys=True, indent=2)


def _require(d: dict, key: str, kind, where: str):
    if key not in d:
        raise SchemaError(f"{where}: missing key {key!r}")
    val = d[key]
    if not isinstance(val, kind) or isinstance(val, bool):
        raise SchemaError(f"{where}: {key!r} has wrong type {type(val).__name__}")
    return val


def parse_graph_spec(text: str | bytes) -> GraphSpec:
    """Parse and validate a graph-specification document.

    Raises
    ------
    SchemaError
        The document is not JSON or does not follow the schema.
    ValidationError
        The document is well formed but describes an invalid graph.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not a JSON document: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")

    vertices = _require(doc, "vertices", list, "document")
    if not all(isinstance(v, str) for v in vertices):
        raise SchemaError("vertex ids must be strings")
    edges = []
    for k, ed in enumerate(_require(doc, "edges", list, "document")):
        if not isinstance(ed, dict):
            raise SchemaError(f"edge #{k} must be an object")
        where = f"edge #{k}"
        length = _require(ed, "length", (int, float), where)
        edges.append(Edge(str(ed.get("id", f"e{k}")),
                          _require(ed, "from", str, where),
                          _require(ed, "to", str, where), float(length)))
    graph = MetricGraph(tuple(vertices), tuple(edges))

    particles = doc.get("particles", {"n": 1, "statistics": "distinguishable"})
    if not isinstance(particles, dict):
        raise SchemaError("'particles' must be an object")
    n = _require(particles, "n", int, "particles")
    stats = particles.get("statistics", "distinguishable")
    if stats not in STATISTICS:
        raise SchemaError(f"unknown statistics {stats!r}")

    vc = doc.get("vertex_conditions", "kirchhoff")
    if not isinstance(vc, (str, dict)):
        raise SchemaError("'vertex_conditions' must be a preset name or an object")

    contact = ContactSpec.from_json(doc.get("contact", {"type": "none"}))
    return GraphSpec(graph, n, stats, vc, contact)


def load_graph_spec(path) -> GraphSpec:
    with open(path, "rb") as fh:
        return parse_graph_spec(fh.read())
