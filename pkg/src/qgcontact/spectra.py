"""End-to-end spectral computations for particles on metric graphs.

Covers one-, two- and three-particle spectra, exchange-sector labels,
eigenvalue counting, Weyl-law fits, Dirichlet/Robin bracketing and mesh
convergence studies.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .boundary import (ContactSpec, VertexConditions, build_layout,
                       custom_vertex_conditions, preset_vertex_conditions,
                       validate_pl, vertex_conditions_from_spec)
from .dissect import dissect
from .eigen import EigenRequest, find_clusters, solve
from .errors import (NonSymmetricProblem, OutOfResolvedRange, TooFewEigenvalues,
                     UnsupportedConfiguration, ValidationError)
from .fem import DiscreteForm, assemble, build_mesh, prolongation_from_constraints
from .graph import GraphSpec, MetricGraph, total_length

SECTOR_RTOL = 1e-7
COMMUTE_TOL = 1e-10
THEORIES = ("distinguishable2", "bose2", "distinguishableN", "boseN")


@dataclass(eq=False)
class SpectralResult:
    """Eigenvalues with sector labels and bookkeeping.

    ``sectors`` holds ``"bose"``, ``"fermi"``, ``"mixed"`` (N = 3 states of
    neither symmetry) or ``"none"`` (no exchange symmetry, or N = 1).
    """

    eigenvalues: np.ndarray
    sectors: list
    residuals: np.ndarray
    h: float
    fingerprint: str = ""
    convergence: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)
    vectors: np.ndarray | None = None

    def __len__(self):
        return len(self.eigenvalues)

    def sector(self, label: str) -> np.ndarray:
        return np.array([v for v, s in zip(self.eigenvalues, self.sectors) if s == label])

    def counts(self) -> dict:
        out = {}
        for s in self.sectors:
            out[s] = out.get(s, 0) + 1
        return out

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "eigenvalue", "sector", "residual"])
        for k, (v, s, r) in enumerate(zip(self.eigenvalues, self.sectors, self.residuals)):
            w.writerow([k, f"{v:.15g}", s, f"{r:.15g}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


@dataclass(frozen=True)
class WeylFit:
    fitted_slope: float
    theory_slope: float
    rel_deviation: float
    window: tuple[float, float]
    count: int
    exponent: float = 1.0

    def to_json(self) -> dict:
        return {"fitted_slope": self.fitted_slope, "theory_slope": self.theory_slope,
                "rel_deviation": self.rel_deviation, "window": list(self.window),
                "count": self.count}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


# --------------------------------------------------------------------------
# discretisation
# --------------------------------------------------------------------------

def _vertex_conditions(spec: GraphSpec) -> VertexConditions:
    return vertex_conditions_from_spec(spec.vertex_conditions, spec.graph, spec.n_particles)


def discretize(spec: GraphSpec, h: float, weights: str = "distinguishable",
               vc: VertexConditions | None = None, cs: ContactSpec | None = None,
               validate: bool = True) -> DiscreteForm:
    """Dissect, mesh and assemble the problem described by ``spec``."""
    g = spec.graph
    N = spec.n_particles
    vc = _vertex_conditions(spec) if vc is None else vc
    cs = spec.contact if cs is None else cs
    if validate:
        rep = validate_pl(vc, cs if N >= 2 else None, "distinguishable",
                          g.E if vc.P is not None and N == 2 else None)
        if not rep.ok:
            raise ValidationError("inadmissible (P, L): " + ", ".join(rep.failures()))
    layout = build_layout(g, N) if N <= 2 else None
    dd = dissect(g, N, "distinguishable", layout)
    mesh = build_mesh(dd, h)
    return assemble(mesh, layout, vc, cs, weights=weights)


def _eig(df: DiscreteForm, m: int, req: EigenRequest | None):
    if req is None:
        req = EigenRequest(m)
    elif req.m != m:
        req = EigenRequest(m, req.mode, req.sigma, req.tol, req.maxiter, req.dense_cap)
    return solve(df.K, df.M, req)


# --------------------------------------------------------------------------
# symmetry sectors
# --------------------------------------------------------------------------

def permutation_operators(df: DiscreteForm) -> list[tuple[tuple, sp.csr_matrix, int]]:
    """``(perm, T^T S_perm T, sign)`` for every particle permutation."""
    N = df.mesh.dim
    out = []
    for perm in itertools.permutations(range(N)):
        inv = sum(1 for i, j in itertools.combinations(range(N), 2) if perm[i] > perm[j])
        S = df.T.T @ df.mesh.permutation_matrix(perm) @ df.T
        out.append((perm, S.tocsr(), -1 if inv % 2 else 1))
    return out


def exchange_commutes(df: DiscreteForm, ops=None) -> bool:
    """Structural check that every permutation commutes with K and M."""
    ops = permutation_operators(df) if ops is None else ops
    scale = max(1.0, abs(df.K).max())
    for _, S, _ in ops:
        for A, sc in ((df.K, scale), (df.M, abs(df.M).max())):
            D = S @ A - A @ S
            if D.nnz and abs(D).max() > COMMUTE_TOL * sc:
                return False
    return True


def _projector_blocks(ops, V, MV):
    n = len(ops)
    PB = sum(S for _, S, _ in ops) / n
    PF = sum(sg * S for _, S, sg in ops) / n
    B = MV.T @ (PB @ V)
    F = MV.T @ (PF @ V)
    return 0.5 * (B + B.T), 0.5 * (F + F.T)


def classify_sectors(res, M, ops, rtol: float = SECTOR_RTOL):
    """Sector labels per eigenpair from the permutation action on clusters.

    ``ops`` is the output of :func:`permutation_operators`.  Within each
    cluster of (numerically) degenerate eigenvalues the symmetric and
    antisymmetric projectors are diagonalised on the cluster's subspace.
    Returns ``(labels, vectors)`` with the vectors rotated to be
    sector-pure.
    """
    V = res.vectors.copy()
    labels = ["none"] * len(res.values)
    for idx in find_clusters(res.values, rtol):
        Vc = V[:, idx]
        MVc = M @ Vc
        B, F = _projector_blocks(ops, Vc, MVc)
        wb, Ub = np.linalg.eigh(B)
        bose = Ub[:, wb > 0.5]
        rest = Ub[:, wb <= 0.5]
        if rest.shape[1]:
            Fr = rest.T @ F @ rest
            wf, Uf = np.linalg.eigh(0.5 * (Fr + Fr.T))
            fermi = rest @ Uf[:, wf > 0.5]
            mixed = rest @ Uf[:, wf <= 0.5]
        else:
            fermi = mixed = rest
        basis = np.hstack([bose, fermi, mixed])
        V[:, idx] = Vc @ basis
        lab = ["bose"] * bose.shape[1] + ["fermi"] * fermi.shape[1] + ["mixed"] * mixed.shape[1]
        for k, i in enumerate(idx):
            labels[i] = lab[k]
    return labels, V


def symmetric_subspace(df: DiscreteForm, ops=None) -> sp.csr_matrix:
    """Orthonormal basis of the exchange-symmetric free coefficients."""
    ops = permutation_operators(df) if ops is None else ops
    PB = sum(S for _, S, _ in ops) / len(ops)
    C = (sp.identity(df.n_free) - PB).tocsr()
    C.eliminate_zeros()
    B, _ = prolongation_from_constraints(C, df.n_free, tol=1e-8)
    return B


# --------------------------------------------------------------------------
# spectra
# --------------------------------------------------------------------------

def _result(values, labels, resid, h, fp, info, vectors=None):
    return SpectralResult(np.asarray(values), list(labels), np.asarray(resid), h, fp,
                          {}, info, vectors)


def one_particle_spectrum(g: MetricGraph, vc_1p, m: int, h: float,
                          req: EigenRequest | None = None) -> SpectralResult:
    """Lowest ``m`` eigenvalues of the one-particle form with ``P F_bv = 0``.

    ``vc_1p`` is a preset name, a ``(P, L)`` pair on ``C^{2E}`` or
    :class:`VertexConditions`.
    """
    if isinstance(vc_1p, VertexConditions):
        vc = vc_1p
    elif isinstance(vc_1p, (tuple, list)) and len(vc_1p) == 2 and not isinstance(vc_1p[0], str):
        vc = custom_vertex_conditions(vc_1p[0], vc_1p[1], g, 1)
    else:
        vc = preset_vertex_conditions(vc_1p, g, 1)
    spec = GraphSpec(g, 1, "distinguishable", vc.preset)
    df = discretize(spec, h, vc=vc, cs=ContactSpec())
    r = _eig(df, m, req)
    return _result(r.values, ["none"] * r.m, r.residuals, df.mesh.h, spec.fingerprint(),
                   {"n_free": df.n_free, "mode": r.mode}, r.vectors)


def _labelled_spectrum(df, m_total, req, need_bose=None):
    """Solve and label the lowest ``m_total`` eigenpairs.

    A few extra pairs are computed and the last cluster is discarded, since
    the request size may cut a degenerate cluster and spoil its labels.  The
    request grows until ``need_bose`` bose states are available.
    """
    ops = permutation_operators(df)
    symmetric = exchange_commutes(df, ops)
    m = m_total
    while True:
        m_req = min(df.n_free, m + 6)
        r = _eig(df, m_req, req)
        if not symmetric:
            labels, V = ["none"] * r.m, r.vectors
        else:
            labels, V = classify_sectors(r, df.M, ops)
        keep = r.m
        if m_req < df.n_free:
            keep = find_clusters(r.values, SECTOR_RTOL)[-1][0]
        if need_bose is None:
            keep = min(keep, m_total)
        if need_bose is None or labels[:keep].count("bose") >= need_bose or m_req >= df.n_free:
            r.values, r.residuals = r.values[:keep], r.residuals[:keep]
            return r, labels[:keep], V[:, :keep], symmetric
        m = 2 * m


def two_particle_spectrum(spec: GraphSpec, m: int, h: float,
                          req: EigenRequest | None = None,
                          richardson: bool = False) -> SpectralResult:
    """Two-particle spectrum with exchange-sector labels.

    Bosonic statistics returns the ``m`` lowest bose-sector eigenvalues of
    the distinguishable problem.  With ``richardson=True`` the computation is
    repeated at ``h/2`` and the extrapolation ``(4 lambda(h/2) - lambda(h)) / 3``
    is stored in ``convergence``.
    """
    if spec.n_particles != 2:
        raise UnsupportedConfiguration("two_particle_spectrum needs N = 2")
    out = _two_particle(spec, m, h, req)
    if richardson:
        fine = _two_particle(spec, m, h / 2, req)
        k = min(len(out), len(fine))
        out.convergence = {
            "h": [out.h, fine.h],
            "values": [out.eigenvalues[:k].tolist(), fine.eigenvalues[:k].tolist()],
            "richardson": ((4 * fine.eigenvalues[:k] - out.eigenvalues[:k]) / 3).tolist(),
        }
    return out


def _two_particle(spec, m, h, req):
    df = discretize(spec, h)
    bosonic = spec.statistics == "bosonic"
    m_total = min(df.n_free, 2 * m + 4 if bosonic else m)
    r, labels, V, symmetric = _labelled_spectrum(df, m_total, req, m if bosonic else None)
    info = {"n_free": df.n_free, "mode": r.mode, "exchange_symmetric": symmetric,
            "n_computed": r.m}
    vals, res_ = r.values, r.residuals
    if bosonic:
        if not symmetric:
            raise NonSymmetricProblem("bosonic statistics on a problem without exchange symmetry")
        keep = [i for i, s in enumerate(labels) if s == "bose"][:m]
        return _result(vals[keep], ["bose"] * len(keep), res_[keep], df.mesh.h,
                       spec.fingerprint(), info, V[:, keep])
    return _result(vals, labels, res_, df.mesh.h, spec.fingerprint(), info, V)


def n_particle_spectrum(spec: GraphSpec, m: int, h: float,
                        req: EigenRequest | None = None) -> SpectralResult:
    """Three-particle spectrum on a single edge.

    Bosonic statistics restricts the pencil to the orthonormal basis of the
    S_3-symmetric coefficients, which is the bose sector of the
    distinguishable problem; distinguishable statistics labels every
    eigenpair by its S_3 behaviour.
    """
    N = spec.n_particles
    if N != 3:
        raise UnsupportedConfiguration("n_particle_spectrum supports N = 3")
    if spec.graph.E != 1:
        raise UnsupportedConfiguration("three-particle spectra need a single-edge graph")
    df = discretize(spec, h)
    ops = permutation_operators(df)
    symmetric = exchange_commutes(df, ops)
    info = {"n_free": df.n_free, "exchange_symmetric": symmetric}
    if spec.statistics == "bosonic":
        if not symmetric:
            raise NonSymmetricProblem("bosonic statistics on a problem without exchange symmetry")
        B = symmetric_subspace(df, ops)
        Kb = (B.T @ df.K @ B).tocsr()
        Mb = (B.T @ df.M @ B).tocsr()
        req = EigenRequest(m) if req is None else req
        r = solve(0.5 * (Kb + Kb.T), 0.5 * (Mb + Mb.T),
                  EigenRequest(min(m, Kb.shape[0]), req.mode, req.sigma, req.tol,
                               req.maxiter, req.dense_cap))
        info.update(n_symmetric=Kb.shape[0], mode=r.mode)
        return _result(r.values, ["bose"] * r.m, r.residuals, df.mesh.h, spec.fingerprint(),
                       info, B @ r.vectors)
    r, labels, V, _ = _labelled_spectrum(df, min(m, df.n_free), req)
    info["mode"] = r.mode
    return _result(r.values, labels, r.residuals, df.mesh.h, spec.fingerprint(), info, V)


def spectrum(spec: GraphSpec, m: int, h: float, req: EigenRequest | None = None,
             richardson: bool = False) -> SpectralResult:
    """Dispatch on the particle number."""
    if spec.n_particles == 1:
        vc = _vertex_conditions(spec)
        out = one_particle_spectrum(spec.graph, vc, m, h, req)
        out.fingerprint = spec.fingerprint()
        return out
    if spec.n_particles == 2:
        return two_particle_spectrum(spec, m, h, req, richardson)
    return n_particle_spectrum(spec, m, h, req)


# --------------------------------------------------------------------------
# counting and Weyl asymptotics
# --------------------------------------------------------------------------

def _values(res) -> np.ndarray:
    return np.asarray(res.eigenvalues if isinstance(res, SpectralResult) else res, dtype=float)


def counting_function(res, lam: float) -> int:
    """``#{n : lambda_n <= lam}`` within the computed range."""
    v = np.sort(_values(res))
    if len(v) == 0 or lam > v[-1]:
        raise OutOfResolvedRange(f"lambda={lam} is above the largest computed eigenvalue")
    return int(np.searchsorted(v, lam, side="right"))


def theory_slope(theory: str, total: float, n_particles: int = 2) -> float:
    """Leading Weyl constant ``c`` in ``N(lambda) ~ c lambda^(N/2)``."""
    if theory not in THEORIES:
        raise ValueError(f"unknown Weyl theory {theory!r}")
    N = 2 if theory.endswith("2") else n_particles
    c = total ** N / ((4 * math.pi) ** (N / 2) * math.gamma(1 + N / 2))
    if theory.startswith("bose"):
        c /= math.factorial(N)
    return c


def weyl_fit(res, theory: str, g, n_particles: int = 2, drop_low: int = 5,
             drop_top: float = 0.3, min_count: int = 100) -> WeylFit:
    """Least-squares fit ``N(lambda) = c lambda^(N/2)`` over the resolved window.

    The lowest ``drop_low`` and the top ``drop_top`` fraction of the
    eigenvalues are excluded.  ``g`` is a graph or its total length.
    """
    v = np.sort(_values(res))
    N = 2 if theory.endswith("2") else n_particles
    n_res = int(math.floor(len(v) * (1 - drop_top)))
    window = v[drop_low:n_res]
    if len(window) < min_count:
        raise TooFewEigenvalues(f"{len(window)} eigenvalues in the fit window, need {min_count}")
    counts = np.searchsorted(v, window, side="right").astype(float)
    x = window ** (N / 2)
    c = float(counts @ x / (x @ x))
    total = g if isinstance(g, (int, float)) else total_length(g)
    ct = theory_slope(theory, total, n_particles)
    return WeylFit(c, ct, abs(c - ct) / ct, (float(window[0]), float(window[-1])),
                   len(window), N / 2)


# --------------------------------------------------------------------------
# bracketing
# --------------------------------------------------------------------------

def comparison_problems(spec: GraphSpec):
    """Dirichlet and Robin comparison data ``(vc, cs)`` for bracketing.

    Dirichlet: ``P = 1`` on every boundary value, including the diagonal.
    Robin: ``P = 0`` everywhere, ``L = lambda_bar`` on vertex values and no
    contact term, with ``lambda_bar`` the largest operator norm of ``L(y)``.
    """
    g = spec.graph
    N = spec.n_particles
    vc = _vertex_conditions(spec)
    lam_bar = vc.max_L_norm()
    vd = preset_vertex_conditions("dirichlet", g, N)
    n1 = 2 * g.E
    vr = custom_vertex_conditions(np.zeros((n1, n1)), lam_bar * np.eye(n1), g, N)
    return (vd, ContactSpec.hardcore()), (vr, ContactSpec.free()), lam_bar


def bracketing_check(spec: GraphSpec, m: int, h: float, req: EigenRequest | None = None) -> dict:
    """Count comparison ``N_D <= N <= N_R`` on a shared mesh.

    Counts are evaluated at midpoints between consecutive distinct
    eigenvalues of the three spectra, up to the smallest of their largest
    computed eigenvalues, so exact coincidences cannot flip a comparison.
    """
    if not spec.contact.repulsive:
        raise ValidationError("bracketing needs a repulsive interaction")
    (vd, cd), (vr, cr), lam_bar = comparison_problems(spec)
    spectra = {}
    for name, vc, cs in (("dirichlet", vd, cd), ("form", None, None), ("robin", vr, cr)):
        df = discretize(spec, h, vc=vc, cs=cs)
        spectra[name] = _eig(df, min(m, df.n_free), req).values
    top = min(v[-1] for v in spectra.values())
    merged = np.unique(np.concatenate([v[v <= top] for v in spectra.values()]))
    groups = find_clusters(merged, 1e-9)
    reps = np.array([merged[g].mean() for g in groups])
    points = 0.5 * (reps[:-1] + reps[1:])
    counts = {k: np.searchsorted(v, points, side="right") for k, v in spectra.items()}
    low = np.nonzero(counts["dirichlet"] > counts["form"])[0]
    high = np.nonzero(counts["form"] > counts["robin"])[0]
    return {
        "ok": bool(len(low) == 0 and len(high) == 0),
        "lambda_bar": lam_bar,
        "window": [float(points[0]) if len(points) else 0.0, float(top)],
        "n_points": int(len(points)),
        "violations_lower": [float(points[i]) for i in low],
        "violations_upper": [float(points[i]) for i in high],
        "eigenvalues": {k: v.tolist() for k, v in spectra.items()},
    }


# --------------------------------------------------------------------------
# convergence
# --------------------------------------------------------------------------

def observed_orders(values, hs, exact=None) -> np.ndarray:
    """Observed convergence orders per eigenvalue from a sequence of meshes.

    ``values`` has shape ``(levels, k)``.  With ``exact`` the orders come
    from consecutive errors, otherwise from consecutive differences (needs
    three levels).
    """
    values = np.asarray(values, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if exact is not None:
        err = np.abs(values - np.asarray(exact)[None, :])
        return np.log(err[:-1] / err[1:]) / np.log(hs[:-1] / hs[1:])[:, None]
    d = np.abs(np.diff(values, axis=0))
    ratio = hs[:-1] / hs[1:]
    return np.log(d[:-1] / d[1:]) / np.log(ratio[1:])[:, None]


def convergence_study(spec: GraphSpec, m: int, hs, exact=None,
                      req: EigenRequest | None = None, flag_below: float = 1.5) -> dict:
    """Eigenvalues on several meshes, observed orders and Richardson estimates."""
    hs = [float(h) for h in hs]
    if len(hs) < 3:
        raise ValueError("a convergence study needs at least three mesh levels")
    vals = []
    actual = []
    for h in hs:
        r = spectrum(spec, m, h, req)
        vals.append(r.eigenvalues[:m])
        actual.append(r.h)
    k = min(len(v) for v in vals)
    V = np.array([v[:k] for v in vals])
    p = observed_orders(V, actual, None if exact is None else np.asarray(exact)[:k])
    p_last = p[-1]
    r_last = actual[-2] / actual[-1]
    rich = V[-1] + (V[-1] - V[-2]) / (r_last ** 2 - 1)
    return {
        "h": actual,
        "values": V.tolist(),
        "orders": p.tolist(),
        "richardson": rich.tolist(),
        "flagged": [int(i) for i in np.nonzero(~(p_last >= flag_below))[0]],
    }
