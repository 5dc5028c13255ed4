"""Dissected configuration spaces of N particles on a metric graph.

A cell is labelled by an edge tuple ``edges`` (particle ``a`` sits on edge
``edges[a]``) and a rank tuple ``ranks``: within each group of particles
sharing an edge, ``ranks[a]`` is the position of ``x_a`` in increasing order.
For two particles on the same edge, ranks ``(1, 0)`` is the triangle
``x > y`` (``D^+``) and ``(0, 1)`` the triangle ``x < y`` (``D^-``).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoDiagonal, UnsupportedConfiguration


def edge_groups(edges) -> list[list[int]]:
    """Coordinates grouped by the edge they live on (in order of first appearance)."""
    groups: dict[int, list[int]] = {}
    for a, e in enumerate(edges):
        groups.setdefault(e, []).append(a)
    return list(groups.values())


def _rank_tuples(edges):
    groups = edge_groups(edges)
    per_group = [itertools.permutations(range(len(g))) for g in groups]
    for choice in itertools.product(*per_group):
        ranks = [0] * len(edges)
        for g, perm in zip(groups, choice):
            for a, r in zip(g, perm):
                ranks[a] = r
        yield tuple(ranks)


@dataclass(frozen=True)
class Facet:
    tag: str            # "vertex-face", "diagonal", "coincidence-plane"
    coords: tuple       # (a, end) for vertex faces, (i, j, side) for coincidence facets
    cell: int


@dataclass(frozen=True)
class Cell:
    index: int
    kind: str
    edges: tuple[int, ...]
    ranks: tuple[int, ...]
    extents: tuple[float, ...]
    measure: float
    facets: tuple[Facet, ...] = ()


def _cell_kind(edges, ranks):
    N = len(edges)
    if N == 1:
        return "interval"
    if len(set(edges)) == N:
        return "rectangle"
    if N == 2:
        return "triangle_plus" if ranks[0] > ranks[1] else "triangle_minus"
    return "simplex"


def enumerate_cells(g, n_particles: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """All ``(edges, ranks)`` labels; there are ``n_1! ... n_E!`` per edge tuple."""
    out = []
    for edges in itertools.product(range(g.E), repeat=n_particles):
        for ranks in _rank_tuples(edges):
            out.append((edges, ranks))
    return out


def cells_per_hyperrectangle(edges) -> int:
    return math.prod(math.factorial(len(gr)) for gr in edge_groups(edges))


@dataclass(frozen=True)
class DissectedDomain:
    n_particles: int
    statistics: str
    lengths: tuple[float, ...]
    cells: tuple[Cell, ...]
    adjacency: dict = field(hash=False, compare=False)

    @property
    def total_measure(self) -> float:
        return math.fsum(c.measure for c in self.cells)

    def find(self, edges, ranks) -> Cell:
        return self._index[(tuple(edges), tuple(ranks))]

    def __post_init__(self):
        object.__setattr__(self, "_index", {(c.edges, c.ranks): c for c in self.cells})


def _facets(index, edges, ranks, N):
    out = []
    groups = edge_groups(edges)
    for gr in groups:
        size = len(gr)
        for a in gr:
            if ranks[a] == 0:
                out.append(Facet("vertex-face", (a, 0), index))
            if ranks[a] == size - 1:
                out.append(Facet("vertex-face", (a, 1), index))
        for i, j in itertools.combinations(gr, 2):
            if abs(ranks[i] - ranks[j]) == 1:
                tag = "diagonal" if N == 2 else "coincidence-plane"
                side = 1 if ranks[i] > ranks[j] else -1
                out.append(Facet(tag, (i, j, side), index))
    return tuple(out)


def dissect(g, n_particles: int, statistics: str = "distinguishable",
            layout=None) -> DissectedDomain:
    """Cells of the dissected configuration space with facet tags and pairing.

    Exchange symmetry is not used to shrink the domain; bosonic statistics
    only changes the metadata returned by :func:`exchange_map`.
    """
    if n_particles >= 3 and g.E != 1:
        raise UnsupportedConfiguration("N >= 3 dissection is only meshed on single-edge graphs")
    lengths = g.lengths
    cells = []
    for k, (edges, ranks) in enumerate(enumerate_cells(g, n_particles)):
        ext = tuple(lengths[e] for e in edges)
        meas = math.prod(ext) / cells_per_hyperrectangle(edges)
        cells.append(Cell(k, _cell_kind(edges, ranks), edges, ranks, ext, meas,
                          _facets(k, edges, ranks, n_particles)))
    index = {(c.edges, c.ranks): c.index for c in cells}
    if layout is None and n_particles in (1, 2):
        from .boundary import build_layout
        layout = build_layout(g, n_particles, "distinguishable")
    adjacency = {}
    for c in cells:
        for f in c.facets:
            if f.tag == "vertex-face":
                adjacency[(c.index, f.tag, f.coords)] = ("external", _component_range(layout, c, f))
            else:
                i, j, side = f.coords
                r = list(c.ranks)
                r[i], r[j] = r[j], r[i]
                other = index[(c.edges, tuple(r))]
                adjacency[(c.index, f.tag, f.coords)] = ("internal", (other, f.tag, (i, j, -side)))
    return DissectedDomain(n_particles, statistics, lengths, tuple(cells), adjacency)


def _component_range(layout, cell, facet):
    """Index range of the boundary layout carried by an external facet."""
    if layout is None:
        return None
    a, end = facet.coords
    face = ("x0", "xl")[end] if a == 0 else ("y0", "yl")[end]
    for k, comp in enumerate(layout.components):
        if comp.block != "vertex" or comp.edges != cell.edges:
            continue
        if layout.n_particles <= 2:
            if comp.face == face and comp.ranks == cell.ranks:
                return (k, k + 1)
        elif comp.particle == a and comp.face == ("x0", "xl")[end]:
            return (k, k + 1)
    return None


@dataclass(frozen=True)
class DiagonalTrace:
    edge: int
    plus: Cell
    minus: Cell
    length: float

    def parameterize(self, t):
        """Point ``(t, t)`` on the diagonal, ``t in (0, l_e)``."""
        t = np.asarray(t, dtype=float)
        return np.stack([t, t], axis=-1)

    @staticmethod
    def normal_derivatives(grad_plus, grad_minus):
        """Inward normal derivatives ``(+-)(psi_x - psi_y)/sqrt(2)`` from both sides."""
        gp = np.asarray(grad_plus, dtype=float)
        gm = np.asarray(grad_minus, dtype=float)
        return ((gp[..., 0] - gp[..., 1]) / math.sqrt(2),
                -(gm[..., 0] - gm[..., 1]) / math.sqrt(2))


def diagonal_trace(dd: DissectedDomain, e, cell: Cell | None = None) -> DiagonalTrace:
    """Matched diagonal facets of the square ``D_ee``.

    Passing an off-diagonal rectangle as ``cell`` raises :class:`NoDiagonal`.
    """
    if dd.n_particles != 2:
        raise NoDiagonal("diagonal traces are defined for two particles")
    if cell is not None and cell.kind == "rectangle":
        raise NoDiagonal(f"cell {cell.index} ({cell.edges}) has no diagonal")
    if not 0 <= e < len(dd.lengths):
        raise NoDiagonal(f"no edge {e}")
    return DiagonalTrace(e, dd.find((e, e), (1, 0)), dd.find((e, e), (0, 1)), dd.lengths[e])


@dataclass(frozen=True)
class PermutationMap:
    """Relabelling of particles: new coordinate ``a`` is old coordinate ``perm[a]``."""

    perm: tuple[int, ...]
    cell_map: dict

    def point(self, x):
        x = np.asarray(x)
        return x[..., list(self.perm)]

    def __call__(self, cell_index: int) -> int:
        return self.cell_map[cell_index]


def permute_label(edges, ranks, perm):
    return tuple(edges[p] for p in perm), tuple(ranks[p] for p in perm)


def permutation_map(dd: DissectedDomain, perm) -> PermutationMap:
    perm = tuple(perm)
    cmap = {}
    for c in dd.cells:
        e2, r2 = permute_label(c.edges, c.ranks, perm)
        cmap[c.index] = dd.find(e2, r2).index
    return PermutationMap(perm, cmap)


def exchange_map(dd: DissectedDomain) -> PermutationMap:
    """Exchange of the first two particles, ``(x, y) -> (y, x)`` for N = 2."""
    N = dd.n_particles
    if N < 2:
        raise UnsupportedConfiguration("exchange needs at least two particles")
    perm = (1, 0) + tuple(range(2, N))
    return permutation_map(dd, perm)


def symmetric_group_maps(dd: DissectedDomain) -> list[PermutationMap]:
    return [permutation_map(dd, p) for p in itertools.permutations(range(dd.n_particles))]
