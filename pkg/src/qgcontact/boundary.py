"""Boundary-value layouts, vertex/contact (P, L) data and their validation.

Conventions
-----------
The one-particle boundary vector of a graph with ``E`` edges is
``(f_1(0), ..., f_E(0), f_1(l_1), ..., f_E(l_E))``.  For two particles the
vertex block ``V_vertex`` lists, for every ordered edge pair ``(e1, e2)`` in
lexicographic order, the four traces on the faces ``x = 0``, ``x = l_e1``,
``y = 0``, ``y = l_e2``.  Faces ``x = 0, l`` are parameterised along ``e2``
and faces ``y = 0, l`` along ``e1``; each entry carries the factor
``sqrt(l)`` of its parameter edge.  The contact block lists, per edge, the
two diagonal traces seen from ``x > y`` ("plus") and ``x < y`` ("minus").
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, UnknownPreset, UnsupportedConfiguration, ValidationError

PL_TOL = 1e-12
CONTACT_KINDS = ("none", "delta", "hardcore", "free")


# --------------------------------------------------------------------------
# contact interactions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ContactSpec:
    """Two-particle contact interaction along the coincidence set.

    ``kind`` is ``"delta"`` (continuity plus derivative jump of strength
    alpha), ``"hardcore"`` (Dirichlet on the diagonal), ``"none"`` (no
    interaction, i.e. alpha = 0) or ``"free"`` (diagonal sides decoupled with
    natural boundary conditions; only used as a comparison operator).
    ``alpha`` is piecewise linear in the normalised edge coordinate
    ``y in [0, 1]`` with knots ``alpha_y``.
    """

    kind: str = "none"
    alpha_y: tuple[float, ...] = (0.0, 1.0)
    alpha_values: tuple[float, ...] = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in CONTACT_KINDS:
            raise ValidationError(f"unknown contact kind {self.kind!r}")
        y = tuple(float(v) for v in self.alpha_y)
        a = tuple(float(v) for v in self.alpha_values)
        if len(y) != len(a) or len(y) < 1:
            raise ValidationError("alpha knots and values differ in length")
        if any(b <= c for c, b in zip(y, y[1:])):
            raise ValidationError("alpha knots must be strictly increasing")
        if y[0] > 0 or y[-1] < 1:
            raise ValidationError("alpha knots must cover [0, 1]")
        if not all(math.isfinite(v) for v in a):
            raise ValidationError("alpha must be finite")
        object.__setattr__(self, "alpha_y", y)
        object.__setattr__(self, "alpha_values", a)

    @classmethod
    def delta(cls, alpha) -> "ContactSpec":
        """delta-type contact with a constant strength or ``(y, value)`` pairs."""
        if np.isscalar(alpha):
            return cls("delta", (0.0, 1.0), (float(alpha), float(alpha)))
        pts = np.asarray(alpha, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValidationError("alpha must be a scalar or a list of (y, value) pairs")
        return cls("delta", tuple(pts[:, 0]), tuple(pts[:, 1]))

    @classmethod
    def hardcore(cls) -> "ContactSpec":
        return cls("hardcore")

    @classmethod
    def free(cls) -> "ContactSpec":
        return cls("free")

    @property
    def is_delta_like(self) -> bool:
        return self.kind in ("delta", "none")

    @property
    def is_constant(self) -> bool:
        return len(set(self.alpha_values)) == 1

    @property
    def repulsive(self) -> bool:
        if self.kind == "delta":
            return min(self.alpha_values) >= 0
        return True

    def alpha_at(self, y) -> np.ndarray:
        if not self.kind == "delta":
            return np.zeros_like(np.asarray(y, dtype=float))
        return np.interp(y, self.alpha_y, self.alpha_values)

    def contact_blocks(self, y: float, statistics: str = "distinguishable"):
        """``(P, L)`` on the edge-e contact block at normalised position ``y``.

        ``L`` is stored compressed to ``ker P``.
        """
        alpha = float(self.alpha_at(y))
        if statistics == "bosonic":
            if self.kind == "hardcore":
                return np.ones((1, 1)), np.zeros((1, 1))
            if self.kind == "free":
                return np.zeros((1, 1)), np.zeros((1, 1))
            return np.zeros((1, 1)), np.full((1, 1), -0.5 * alpha)
        if self.kind == "hardcore":
            return np.eye(2), np.zeros((2, 2))
        if self.kind == "free":
            return np.zeros((2, 2)), np.zeros((2, 2))
        P = 0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]])
        Q = np.eye(2) - P
        return P, Q @ (-0.5 * alpha * np.eye(2)) @ Q

    def to_json(self):
        if self.kind in ("none", "hardcore", "free"):
            return {"type": self.kind}
        if self.is_constant and self.alpha_y == (0.0, 1.0):
            return {"type": "delta", "alpha": self.alpha_values[0]}
        return {"type": "delta", "alpha": [list(p) for p in zip(self.alpha_y, self.alpha_values)]}

    @classmethod
    def from_json(cls, doc) -> "ContactSpec":
        from .errors import SchemaError

        if not isinstance(doc, dict) or "type" not in doc:
            raise SchemaError("'contact' must be an object with a 'type'")
        kind = doc["type"]
        if kind == "delta":
            if "alpha" not in doc:
                raise SchemaError("delta contact requires 'alpha'")
            alpha = doc["alpha"]
            if isinstance(alpha, bool) or not isinstance(alpha, (int, float, list)):
                raise SchemaError("'alpha' must be a number or a list of pairs")
            return cls.delta(alpha)
        if kind in ("none", "hardcore", "free"):
            return cls(kind)
        raise SchemaError(f"unknown contact type {kind!r}")


# --------------------------------------------------------------------------
# boundary layouts
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Component:
    """One entry of the boundary-value vector.

    ``edges`` is the edge tuple of the hyperrectangle, ``face`` names the
    facet (``"x0"``/``"xl"`` for particle ``particle`` at the start/end of its
    edge, ``"diag"`` for a coincidence facet), ``ranks`` selects the dissected
    cell the trace is taken from, ``value_scale`` and ``deriv_scale`` are the
    factors in front of the function and normal-derivative traces.
    """

    block: str
    edges: tuple[int, ...]
    face: str
    particle: int
    ranks: tuple[int, ...]
    value_scale: float
    deriv_scale: float
    pair: tuple[int, int] | None = None


@dataclass(frozen=True)
class BoundaryLayout:
    n_particles: int
    statistics: str
    components: tuple[Component, ...]

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def n_contact(self) -> int:
        return sum(c.block == "contact" for c in self.components)

    @property
    def contact_slice(self) -> slice:
        return slice(0, self.n_contact)

    @property
    def vertex_slice(self) -> slice:
        return slice(self.n_contact, self.dim)


def _pair_ranks(e1, e2, face):
    if e1 != e2:
        return (0, 0)
    # x = 0 and y = l faces border D^-, the others D^+
    return {"x0": (0, 1), "xl": (1, 0), "y0": (1, 0), "yl": (0, 1)}[face]


def build_layout(g, n_particles: int, statistics: str = "distinguishable") -> BoundaryLayout:
    """Boundary-value layout with the component counts ``4E^2 + 2E`` (two
    distinguishable particles) or ``2E^2 + E`` (two bosons)."""
    E = g.E
    lengths = g.lengths
    comps: list[Component] = []
    if n_particles == 1:
        for end, face in enumerate(("x0", "xl")):
            for e in range(E):
                comps.append(Component("vertex", (e,), face, 0, (0,), 1.0, 1.0))
        return BoundaryLayout(1, statistics, tuple(comps))
    if n_particles == 2:
        bos = statistics == "bosonic"
        for e in range(E):
            s = math.sqrt(lengths[e])
            comps.append(Component("contact", (e, e), "diag", 0, (1, 0), s,
                                   math.sqrt(2 * lengths[e]), (0, 1)))
            if not bos:
                comps.append(Component("contact", (e, e), "diag", 0, (0, 1), s,
                                       math.sqrt(2 * lengths[e]), (0, 1)))
        for e1, e2 in itertools.product(range(E), repeat=2):
            faces = ("x0", "xl") if bos else ("x0", "xl", "y0", "yl")
            for face in faces:
                particle = 0 if face[0] == "x" else 1
                param = e2 if particle == 0 else e1
                s = math.sqrt(lengths[param])
                comps.append(Component("vertex", (e1, e2), face[0] + face[1:],
                                       particle, _pair_ranks(e1, e2, face), s, s))
        return BoundaryLayout(2, statistics, tuple(comps))
    if E != 1:
        raise UnsupportedConfiguration("N >= 3 layouts are only available on single-edge graphs")
    l = lengths[0]
    N = n_particles
    s = math.sqrt(l ** (N - 1))
    edges = (0,) * N
    particles = range(1) if statistics == "bosonic" else range(N)
    pairs = [(0, 1)] if statistics == "bosonic" else list(itertools.combinations(range(N), 2))
    for i, j in pairs:
        sides = (1,) if statistics == "bosonic" else (1, -1)
        for side in sides:
            ranks = list(range(N))
            ranks[i], ranks[j] = (1, 0) if side > 0 else (0, 1)
            others = [k for k in range(N) if k not in (i, j)]
            for r, k in enumerate(others, start=2):
                ranks[k] = r
            comps.append(Component("contact", edges, "diag", i, tuple(ranks), s,
                                   math.sqrt(2) * s, (i, j)))
    for a in particles:
        for face in ("x0", "xl"):
            ranks = [0] * N
            others = [k for k in range(N) if k != a]
            if face == "x0":
                ranks[a] = 0
                for r, k in enumerate(others, start=1):
                    ranks[k] = r
            else:
                ranks[a] = N - 1
                for r, k in enumerate(others):
                    ranks[k] = r
            comps.append(Component("vertex", edges, face, a, tuple(ranks), s, s))
    return BoundaryLayout(N, statistics, tuple(comps))


def layout_count(E: int, statistics: str = "distinguishable") -> int:
    return 2 * E * E + E if statistics == "bosonic" else 4 * E * E + 2 * E


# --------------------------------------------------------------------------
# vertex conditions
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VertexConditions:
    """Vertex data ``y -> (P(y), L(y))`` on the vertex block.

    ``P`` and ``L`` have shape ``(S, d, d)`` for ``S`` samples at the knots
    ``y`` (``S == 1`` means y-independent).  ``one_particle`` holds the
    one-particle ``(P, L)`` on ``C^{2E}`` when the conditions are the
    non-interacting lift of one-particle conditions; for ``N >= 3`` only this
    lifted form is available and ``P``/``L`` are ``None``.
    """

    n_particles: int
    y: tuple[float, ...]
    P: np.ndarray | None
    L: np.ndarray | None
    preset: str = "custom"
    one_particle: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def y_independent(self) -> bool:
        return self.P is None or self.P.shape[0] == 1

    @property
    def dim(self) -> int:
        return self.P.shape[1] if self.P is not None else self.one_particle[0].shape[0]

    def sample(self, y: float):
        """Piecewise-linear interpolation of ``(P, L)`` at ``y``."""
        if self.P.shape[0] == 1:
            return self.P[0], self.L[0]
        ys = np.asarray(self.y)
        k = int(np.clip(np.searchsorted(ys, y) - 1, 0, len(ys) - 2))
        t = (y - ys[k]) / (ys[k + 1] - ys[k])
        t = min(max(t, 0.0), 1.0)
        return ((1 - t) * self.P[k] + t * self.P[k + 1],
                (1 - t) * self.L[k] + t * self.L[k + 1])

    def max_L_norm(self) -> float:
        mats = self.L if self.L is not None else self.one_particle[1][None]
        return max(float(np.linalg.norm(m, 2)) for m in mats)


def _compress(P, L):
    Q = np.eye(P.shape[0]) - P
    L = Q @ L @ Q
    return 0.5 * (L + L.T)


def lift_two_particle(P1: np.ndarray, E: int) -> np.ndarray:
    """Non-interacting lift of a one-particle matrix to the 4E^2 vertex block."""
    d = 4 * E * E
    out = np.zeros((d, d))

    def comp(e1, e2, face):
        return 4 * (e1 * E + e2) + face

    for spect in range(E):
        idx_x = [comp(j % E, spect, j // E) for j in range(2 * E)]
        idx_y = [comp(spect, j % E, 2 + j // E) for j in range(2 * E)]
        out[np.ix_(idx_x, idx_x)] = P1
        out[np.ix_(idx_y, idx_y)] = P1
    return out


def one_particle_preset(name: str, g, strength: float = 0.0):
    """One-particle ``(P, L)`` on ``C^{2E}`` for a preset applied at every vertex."""
    n = 2 * g.E
    P = np.zeros((n, n))
    L = np.zeros((n, n))
    for v in g.vertices:
        J = g.endpoints_at(v)
        if not J:
            continue
        _vertex_block(name, J, P, L, strength)
    return P, L


def _vertex_block(name, J, P, L, strength=0.0):
    d = len(J)
    ix = np.ix_(J, J)
    if name == "dirichlet":
        P[ix] = np.eye(d)
    elif name == "neumann":
        pass
    elif name in ("kirchhoff", "delta_vertex"):
        one = np.ones((d, d)) / d
        P[ix] = np.eye(d) - one
        if name == "delta_vertex":
            L[ix] = -(strength / d) * one
    else:
        raise UnknownPreset(name)


_DELTA_RE = re.compile(r"^delta_vertex\(\s*([-+0-9.eE]+)\s*\)$")


def _parse_preset_name(name):
    if isinstance(name, (tuple, list)) and len(name) == 2 and name[0] == "delta_vertex":
        return "delta_vertex", float(name[1])
    if not isinstance(name, str):
        raise UnknownPreset(str(name))
    m = _DELTA_RE.match(name.strip())
    if m:
        return "delta_vertex", float(m.group(1))
    if name in ("kirchhoff", "dirichlet", "neumann"):
        return name, 0.0
    raise UnknownPreset(name)


def _from_one_particle(P1, L1, g, n_particles, preset):
    P1 = np.asarray(P1, dtype=float)
    L1 = _compress(P1, np.asarray(L1, dtype=float))
    if n_particles == 1:
        return VertexConditions(1, (0.0,), P1[None], L1[None], preset, (P1, L1))
    if n_particles == 2:
        P = lift_two_particle(P1, g.E)
        L = lift_two_particle(L1, g.E)
        return VertexConditions(2, (0.0,), P[None], L[None], preset, (P1, L1))
    return VertexConditions(n_particles, (0.0,), None, None, preset, (P1, L1))


def preset_vertex_conditions(name, g, n_particles: int = 2) -> VertexConditions:
    """Shipped non-interacting vertex conditions.

    ``name`` is ``"kirchhoff"``, ``"dirichlet"``, ``"neumann"`` or
    ``"delta_vertex(s)"`` (continuity with inward-derivative sum ``s * f(v)``).
    """
    base, s = _parse_preset_name(name)
    P1, L1 = one_particle_preset(base, g, s)
    tag = base if base != "delta_vertex" else f"delta_vertex({s:g})"
    return _from_one_particle(P1, L1, g, n_particles, tag)


def check_pl(P, L, tol: float = PL_TOL) -> dict:
    """Admissibility checks for one ``(P, L)`` pair (operator-norm residuals)."""
    P = np.asarray(P, dtype=float)
    L = np.asarray(L, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or L.shape != P.shape:
        raise DimensionMismatch(f"P {P.shape} and L {L.shape} must be equal square shapes")

    def nrm(A):
        return float(np.linalg.norm(A, 2)) if A.size else 0.0

    res = {
        "P_self_adjoint": nrm(P - P.T),
        "P_idempotent": nrm(P @ P - P),
        "L_self_adjoint": nrm(L - L.T),
        "L_in_ker_P": max(nrm(P @ L), nrm(L @ P)),
    }
    return {k: (v <= tol, v) for k, v in res.items()}


@dataclass
class ValidationReport:
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(passed for passed, _ in self.checks.values())

    def failures(self) -> list[str]:
        return [k for k, (passed, _) in self.checks.items() if not passed]

    def as_dict(self) -> dict:
        return {k: {"pass": bool(p), "residual": float(r)} for k, (p, r) in self.checks.items()}


def validate_pl(vc: VertexConditions, cs: ContactSpec | None = None,
                statistics: str = "distinguishable", E: int | None = None) -> ValidationReport:
    """Check projector, self-adjointness, ker-P and block-split conditions."""
    rep = ValidationReport()
    mats = []
    if vc.P is not None:
        if vc.L is None or vc.P.shape != vc.L.shape or vc.P.ndim != 3:
            raise DimensionMismatch("vertex P and L sample stacks must have equal shapes")
        mats += [(f"vertex[{k}]", vc.P[k], vc.L[k]) for k in range(vc.P.shape[0])]
    if vc.one_particle is not None:
        mats.append(("one_particle", *vc.one_particle))
    if E is not None and vc.n_particles == 2 and vc.P is not None and vc.P.shape[1] != 4 * E * E:
        raise DimensionMismatch(f"vertex block must be {4 * E * E}-dimensional")
    for tag, P, L in mats:
        for k, v in check_pl(P, L).items():
            rep.checks[f"{tag}.{k}"] = v
    if cs is not None and vc.n_particles >= 2:
        ys = sorted(set(cs.alpha_y))
        for y in ys:
            Pc, Lc = cs.contact_blocks(y, statistics)
            for k, v in check_pl(Pc, Lc).items():
                rep.checks[f"contact[y={y:g}].{k}"] = v
        if vc.P is not None and E is not None:
            # P = P_contact (+) P_vertex is block diagonal by construction; check it
            Pc, _ = cs.contact_blocks(0.0, statistics)
            full = np.zeros((Pc.shape[0] * E + vc.dim,) * 2)
            for e in range(E):
                k = Pc.shape[0]
                full[e * k:(e + 1) * k, e * k:(e + 1) * k] = Pc
            nc = Pc.shape[0] * E
            full[nc:, nc:] = vc.P[0]
            off = float(np.abs(full[:nc, nc:]).max(initial=0.0))
            rep.checks["block_split"] = (off == 0.0, off)
    return rep


def _slopes(y, v):
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.diff(v, axis=0) / np.diff(y).reshape((-1,) + (1,) * (v.ndim - 1))


def check_regularity_hypotheses(vc: VertexConditions, cs: ContactSpec) -> list[str]:
    """Advisory warnings when the regularity hypotheses are not met.

    Looks for non-constant alpha at the edge ends, y-dependent vertex
    projectors that are not diagonal 0/1 matrices near the ends, attractive
    coupling and non-smooth samples.  Never raises.
    """
    warnings = []
    if cs.kind == "delta":
        a = np.asarray(cs.alpha_values)
        sl = _slopes(cs.alpha_y, a)
        if len(a) >= 2 and (abs(sl[0]) > 0 or abs(sl[-1]) > 0):
            warnings.append("alpha not constant near endpoints")
        if min(a[0], a[-1]) < 0:
            warnings.append("alpha negative at an endpoint")
        if a.min() < 0:
            warnings.append("attractive contact (alpha < 0): Weyl and bracketing claims do not apply")
        if len(a) >= 3:
            jump = np.abs(np.diff(sl)).max()
            if jump > 0.5 * np.abs(sl).max() > 0:
                warnings.append("alpha samples not plausibly C^1")
    if vc.P is not None and vc.P.shape[0] > 1:
        P = vc.P
        for tag, k0, k1 in (("y=0", 0, 1), ("y=1", -1, -2)):
            Pe = P[k0]
            diag01 = (np.abs(Pe - np.diag(np.diag(Pe))).max() < 1e-12
                      and np.all(np.minimum(np.abs(np.diag(Pe)), np.abs(np.diag(Pe) - 1)) < 1e-12))
            varying = np.abs(P[k1] - Pe).max() > 1e-12
            if varying or not diag01:
                warnings.append(f"vertex projector near {tag} is not a constant diagonal 0/1 matrix")
        if P.shape[0] >= 3:
            sl = _slopes(vc.y, P)
            jump = np.abs(np.diff(sl, axis=0)).max()
            if jump > 0.5 * np.abs(sl).max() > 0:
                warnings.append("vertex projector samples not plausibly C^1")
    return warnings


def vertex_conditions_from_spec(desc, g, n_particles: int) -> VertexConditions:
    """Resolve the ``vertex_conditions`` entry of a graph-spec document."""
    if isinstance(desc, str):
        return preset_vertex_conditions(desc, g, n_particles)
    if not isinstance(desc, dict):
        raise ValidationError("vertex_conditions must be a preset name or an object")
    n1 = 2 * g.E
    if "preset" in desc:
        name = desc["preset"]
        if name == "delta_vertex":
            name = ("delta_vertex", float(desc.get("strength", 0.0)))
        return preset_vertex_conditions(name, g, n_particles)
    if "per_vertex" in desc:
        P = np.zeros((n1, n1))
        L = np.zeros((n1, n1))
        per = desc["per_vertex"]
        default = desc.get("default", "kirchhoff")
        for v in g.vertices:
            J = g.endpoints_at(v)
            if not J:
                continue
            item = per.get(v, default)
            if isinstance(item, dict) and "delta" in item:
                _vertex_block("delta_vertex", J, P, L, float(item["delta"]))
            else:
                base, s = _parse_preset_name(item)
                _vertex_block(base, J, P, L, s)
        return _from_one_particle(P, L, g, n_particles, "custom")
    if "samples" in desc:
        samples = sorted(desc["samples"], key=lambda s: s["y"])
        ys = tuple(float(s["y"]) for s in samples)
        Ps = np.array([s["P"] for s in samples], dtype=float)
        Ls = np.array([s["L"] for s in samples], dtype=float)
        return custom_vertex_conditions(Ps, Ls, g, n_particles, ys)
    if "P" in desc:
        P = np.asarray(desc["P"], dtype=float)
        L = np.asarray(desc.get("L", np.zeros_like(P)), dtype=float)
        return custom_vertex_conditions(P, L, g, n_particles)
    raise ValidationError("unrecognised vertex_conditions object")


def custom_vertex_conditions(P, L, g, n_particles: int, y=(0.0,)) -> VertexConditions:
    """Vertex conditions from explicit matrices.

    A ``2E x 2E`` pair is taken as one-particle data and lifted; a
    ``4E^2 x 4E^2`` pair (optionally a stack of samples at knots ``y``) is the
    full two-particle vertex block and may describe interacting vertices.
    """
    P = np.asarray(P, dtype=float)
    L = np.asarray(L, dtype=float)
    if P.ndim == 2:
        P, L = P[None], L[None]
    if P.shape != L.shape:
        raise DimensionMismatch("P and L shapes differ")
    if len(y) != P.shape[0]:
        raise DimensionMismatch("number of samples does not match the knots")
    for k in range(P.shape[0]):
        bad = [name for name, (ok, _) in check_pl(P[k], L[k]).items() if not ok]
        if bad:
            raise ValidationError(f"inadmissible vertex conditions: {', '.join(bad)}")
    d = P.shape[1]
    if d == 2 * g.E and P.shape[0] == 1:
        return _from_one_particle(P[0], L[0], g, n_particles, "custom")
    if n_particles == 2 and d == 4 * g.E ** 2:
        Ls = np.array([_compress(P[k], L[k]) for k in range(P.shape[0])])
        return VertexConditions(2, tuple(float(v) for v in y), P.copy(), Ls, "custom")
    raise DimensionMismatch(f"vertex matrices of size {d} do not fit E={g.E}, N={n_particles}")
