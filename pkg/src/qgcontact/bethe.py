"""Bethe-ansatz energies of N delta-interacting bosons on a ring.

For ``H = -sum_j d^2/dx_j^2 + 2c sum_{j<l} delta(x_j - x_l)`` on a circle of
circumference ``L`` the quasi-momenta solve

    k_j L + sum_{l != j} 2 atan((k_j - k_l) / c) = 2 pi I_j

with ``I_j`` half-odd integers for even N and integers for odd N.  The left
side is the gradient of the strictly convex Yang-Yang action, so a damped
Newton iteration converges from any start.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import BadQuantumNumbers, NoConvergence

RESIDUAL_TOL = 1e-12
C_MIN = 1e-8


def coupling_from_alpha(alpha: float) -> float:
    """Bethe coupling ``c`` for the contact strength ``alpha`` of the FEM forms.

    The quadratic forms carry ``alpha * delta(x - y)``, the Bethe equations
    above carry ``2c * delta``.
    """
    return 0.5 * float(alpha)


@dataclass(frozen=True)
class BetheSolution:
    k: np.ndarray
    I: tuple
    c: float
    length: float
    energy: float
    residual: float
    iterations: int

    @property
    def momentum(self) -> float:
        return float(self.k.sum())


def _phase(d, c):
    return 2.0 * np.arctan(d / c)


def bethe_residual(k, I, length, c) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    d = k[:, None] - k[None, :]
    return k * length + _phase(d, c).sum(axis=1) - 2 * np.pi * np.asarray(I, dtype=float)


def check_quantum_numbers(I, N: int) -> tuple:
    I = tuple(float(v) for v in I)
    if len(I) != N:
        raise BadQuantumNumbers(f"need {N} quantum numbers, got {len(I)}")
    frac = 0.5 if N % 2 == 0 else 0.0
    for v in I:
        if abs((v - frac) - round(v - frac)) > 1e-12:
            kind = "half-odd integers" if frac else "integers"
            raise BadQuantumNumbers(f"quantum numbers must be {kind} for N={N}, got {v}")
    if any(b <= a for a, b in zip(I, I[1:])):
        raise BadQuantumNumbers("quantum numbers must be strictly increasing")
    return I


class _System:
    """Bethe equations in offsets ``delta_j = k_j - 2 pi n_j / L``.

    ``n_j`` are the bosonic occupations of ``I``; quasi-momenta sharing an
    occupation collapse together as ``c -> 0``, and writing them relative to
    the same exact base keeps their differences accurate to full precision.
    """

    def __init__(self, I, L):
        N = len(I)
        self.N = N
        self.L = L
        self.n = np.array(occupations(I), dtype=float)
        self.base = 2 * np.pi * self.n / L
        self.shift = 2 * np.pi * (np.arange(N) - (N - 1) / 2)
        self.db = self.base[:, None] - self.base[None, :]

    def diffs(self, delta):
        return self.db + (delta[:, None] - delta[None, :])

    def residual(self, delta, c):
        return delta * self.L - self.shift + _phase(self.diffs(delta), c).sum(axis=1)

    def action(self, delta, c):
        d = self.diffs(delta)
        x = d / c
        theta = 2.0 * (d * np.arctan(x) - 0.5 * c * np.log1p(x * x))
        return 0.5 * self.L * (delta @ delta) - self.shift @ delta + 0.25 * theta.sum()

    def jacobian(self, delta, c):
        d = self.diffs(delta)
        w = 2 * c / (c * c + d * d)
        np.fill_diagonal(w, 0.0)
        J = -w
        J[np.diag_indices(self.N)] = self.L + w.sum(axis=1)
        return J


def _newton(sys_, delta, c, maxiter):
    S = sys_.action(delta, c)
    for it in range(maxiter):
        F = sys_.residual(delta, c)
        if np.abs(F).max() <= RESIDUAL_TOL:
            return delta, it, True
        step = np.linalg.solve(sys_.jacobian(delta, c), F)
        t = 1.0
        fmax = np.abs(F).max()
        while t >= 1e-10:
            trial = delta - t * step
            S_new = sys_.action(trial, c)
            # the residual test takes over once action differences drown in rounding
            if (S_new <= S - 1e-4 * t * (F @ step)
                    or np.abs(sys_.residual(trial, c)).max() <= (1 - 0.5 * t) * fmax):
                break
            t *= 0.5
        else:
            # rounding hides the decrease of the action near the solution
            trial = delta - step
            S_new = sys_.action(trial, c)
        delta, S = trial, S_new
    return delta, maxiter, bool(np.abs(sys_.residual(delta, c)).max() <= RESIDUAL_TOL)


def solve_bethe(N: int, length: float, c: float, I, k0=None, maxiter: int = 100) -> BetheSolution:
    """Quasi-momenta for quantum numbers ``I`` by damped Newton.

    The start is the impenetrable limit ``k_j = 2 pi I_j / L`` (or ``k0``).
    If Newton stalls, the coupling is lowered geometrically from ``c = 1``
    and each solution seeds the next.
    """
    I = check_quantum_numbers(I, N)
    if c < 0:
        raise BadQuantumNumbers("only repulsive coupling c >= 0 is supported")
    c = max(float(c), C_MIN)
    L = float(length)
    sys_ = _System(I, L)
    start = 2 * np.pi * np.array(I) / L if k0 is None else np.asarray(k0, dtype=float)
    delta, its, ok = _newton(sys_, start - sys_.base, c, maxiter)
    if not ok:
        delta = 2 * np.pi * np.array(I) / L - sys_.base
        cs = [max(c, 1.0)]
        while cs[-1] > c * 1.0001:
            cs.append(max(c, cs[-1] * 0.5))
        its = 0
        for ci in cs:
            delta, n_it, ok = _newton(sys_, delta, ci, maxiter)
            its += n_it
        if not ok:
            res = float(np.abs(sys_.residual(delta, c)).max())
            raise NoConvergence(f"Bethe equations not solved, residual {res:.3e}")
    k = sys_.base + delta
    res = float(np.abs(sys_.residual(delta, c)).max())
    return BetheSolution(k, I, c, L, float(k @ k), res, its)


def _candidate_quantum_numbers(N, nmax):
    """Bosonic occupations ``n_1 <= ... <= n_N`` with ``|n_j| <= nmax`` mapped to I."""
    shift = np.arange(N) - (N - 1) / 2
    for occ in itertools.combinations_with_replacement(range(-nmax, nmax + 1), N):
        yield tuple(float(v) for v in np.array(occ) + shift), occ


def bethe_spectrum(N: int, length: float, c: float, m: int, return_states: bool = False):
    """The ``m`` lowest energies, with total-momentum degeneracies.

    Each state is labelled by bosonic occupations ``n_j`` (``I_j = n_j +
    j - (N-1)/2``).  Energies are bounded below by the free-boson value
    ``(2 pi / L)^2 sum n_j^2``, which is used to decide when the search box
    over ``n_j`` is large enough.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    q = 2 * np.pi / length
    nmax = 1
    while True:
        states = []
        for I, occ in _candidate_quantum_numbers(N, nmax):
            sol = solve_bethe(N, length, c, I)
            states.append(sol)
        states.sort(key=lambda s: (s.energy, s.I))
        if len(states) >= m:
            bound = q * q * (nmax + 1) ** 2
            if states[m - 1].energy < bound:
                break
        nmax += 1
    states = states[:m]
    energies = np.array([s.energy for s in states])
    return (energies, states) if return_states else energies


def free_fermion_energy(N: int, length: float, I) -> float:
    q = 2 * np.pi / length
    return float(sum((q * v) ** 2 for v in I))


def free_boson_energy(N: int, length: float, occ) -> float:
    q = 2 * np.pi / length
    return float(sum((q * v) ** 2 for v in occ))


def occupations(I) -> tuple:
    N = len(I)
    return tuple(int(round(v - (j - (N - 1) / 2))) for j, v in enumerate(I))


__all__ = ["BetheSolution", "solve_bethe", "bethe_spectrum", "bethe_residual",
           "coupling_from_alpha", "free_fermion_energy", "free_boson_energy",
           "occupations", "check_quantum_numbers"]
