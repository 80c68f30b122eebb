"""Multipliers, resonance enumeration and taxonomy, and linear splittings.

Resonance detection runs on two channels: a float channel with tolerance
EPS_RES, and an exact channel used whenever the relevant multipliers carry
rational angles (lambda_j = exp(2*pi*i*p/q) * |lambda_j|).  Angle relations
are then decided in integer arithmetic; only moduli use the tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from . import mvps
from .errors import DecompositionIncomplete, DimensionMismatch

EPS_RES = 1e-10
EPS_NEUTRAL = 1e-10
Q_MAX = 10 ** 4
EPS_JORDAN = 1e-7


def _wrap_angle(a: float) -> float:
    """Normalize to [-pi, pi); makes (-1) sort before i under 'arg ascending'."""
    a = math.remainder(a, 2 * math.pi)
    if a >= math.pi - 1e-300:
        a -= 2 * math.pi
    return a


@dataclass(frozen=True)
class MultiplierTuple:
    """Eigenvalues of the linear part, with an optional exact-angle channel.

    ``exact_angles[j]``, when present, is a Fraction p/q meaning
    values[j] = exp(2*pi*i*p/q) * |values[j]|.
    """

    values: tuple
    exact_angles: tuple | None = None
    defective: bool = False

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(complex(v) for v in self.values))
        if self.exact_angles is not None:
            ang = tuple(None if a is None else Fraction(a) for a in self.exact_angles)
            if len(ang) != len(self.values):
                raise DimensionMismatch("exact_angles length mismatch")
            for v, a in zip(self.values, ang):
                if a is None or v == 0:
                    continue
                delta = math.remainder(np.angle(v) - 2 * math.pi * float(a % 1), 2 * math.pi)
                if abs(delta) >= 1e-12:
                    raise ValueError(f"exact angle {a} inconsistent with multiplier {v}")
            object.__setattr__(self, "exact_angles", ang)

    @property
    def dim(self) -> int:
        return len(self.values)

    def power(self, alpha) -> complex:
        p = 1.0 + 0j
        for v, a in zip(self.values, alpha):
            if a:
                p *= v ** a
        return p

    def _angles_for(self, support: Iterable[int]):
        """Exact angles for the given 0-based indices, or None if any missing."""
        if self.exact_angles is None:
            return None
        out = {}
        for i in support:
            a = self.exact_angles[i]
            if a is None:
                return None
            out[i] = a
        return out

    def is_resonant_pair(self, alpha, j: int, eps: float = EPS_RES) -> bool:
        """Whether lambda^alpha = lambda_j (j 1-based), exact channel preferred."""
        support = [i for i, a in enumerate(alpha) if a] + [j - 1]
        ang = self._angles_for(support)
        if ang is not None:
            total = sum(Fraction(a) * ang[i] for i, a in enumerate(alpha) if a)
            if (total - ang[j - 1]) % 1 != 0:
                return False
            mod = math.prod(abs(v) ** a for v, a in zip(self.values, alpha) if a)
            return abs(mod - abs(self.values[j - 1])) < eps
        return abs(self.power(alpha) - self.values[j - 1]) < eps

    def is_generator(self, g, eps: float = EPS_RES) -> bool:
        """Whether lambda^g = 1."""
        support = [i for i, a in enumerate(g) if a]
        if not support:
            return False
        ang = self._angles_for(support)
        if ang is not None:
            total = sum(Fraction(a) * ang[i] for i, a in enumerate(g) if a)
            if total % 1 != 0:
                return False
            mod = math.prod(abs(v) ** a for v, a in zip(self.values, g) if a)
            return abs(mod - 1.0) < eps
        return abs(self.power(g) - 1.0) < eps


def multipliers(F: mvps.TruncatedGerm) -> MultiplierTuple:
    """Multipliers of F ordered by (|lambda| descending, arg ascending).

    Exact angles supplied via germ metadata travel with their eigenvalue.
    Eigenvalue clusters of diameter < EPS_JORDAN with geometric multiplicity
    below their size are merged and flagged defective.
    """
    L = mvps.linear_part(F)
    d = F.dim
    tri = all(abs(L[j, i]) < 1e-300 for j in range(d) for i in range(j))
    if tri:
        vals = [L[j, j] for j in range(d)]
        angles = list(F.exact_angles) if F.exact_angles is not None else None
    else:
        vals = list(np.linalg.eigvals(L))
        angles = None
        if F.exact_angles is not None:
            angles = []
            used = set()
            for v in vals:
                best = None
                for i, a in enumerate(F.exact_angles):
                    if a is None or i in used:
                        continue
                    delta = math.remainder(np.angle(complex(v)) - 2 * math.pi * float(a % 1),
                                           2 * math.pi)
                    if abs(delta) < 1e-12:
                        best = i
                        break
                if best is None:
                    angles.append(None)
                else:
                    used.add(best)
                    angles.append(F.exact_angles[best])

    # cluster for defect detection
    defective = False
    n = len(vals)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if abs(vals[i] - vals[j]) < EPS_JORDAN:
                parent[find(i)] = find(j)
    clusters: dict[int, list[int]] = {}
    for i in range(n):
        clusters.setdefault(find(i), []).append(i)
    merged = list(vals)
    for members in clusters.values():
        if len(members) < 2:
            continue
        mean = sum(vals[i] for i in members) / len(members)
        scale = max(1.0, float(np.linalg.norm(L)))
        rank = np.linalg.matrix_rank(L - mean * np.eye(d), tol=EPS_JORDAN * scale)
        geometric = d - rank
        if geometric < len(members):
            defective = True
        for i in members:
            merged[i] = mean

    order = sorted(range(n), key=lambda i: (-abs(merged[i]), _wrap_angle(np.angle(complex(merged[i])))))
    values = tuple(merged[i] for i in order)
    exact = None
    if angles is not None and any(a is not None for a in angles):
        exact = tuple(angles[i] for i in order)
    return MultiplierTuple(values=values, exact_angles=exact, defective=defective)


@dataclass(frozen=True)
class MultiplierClass:
    kind: str          # superattracting | geometrically-attracting | repelling | parabolic | elliptic
    q: int | None = None

    def __str__(self):
        return f"parabolic(q={self.q})" if self.kind == "parabolic" else self.kind


def classify_multiplier(lam: complex, exact_angle: Fraction | None = None) -> MultiplierClass:
    """Classify one multiplier; parabolicity via the exact-angle channel or a
    root-of-unity search up to Q_MAX."""
    lam = complex(lam)
    r = abs(lam)
    if r < EPS_NEUTRAL:
        return MultiplierClass("superattracting")
    if abs(r - 1.0) >= EPS_NEUTRAL:
        return MultiplierClass("geometrically-attracting" if r < 1 else "repelling")
    if exact_angle is not None:
        a = Fraction(exact_angle) % 1
        return MultiplierClass("parabolic", q=a.denominator)
    theta = np.angle(lam) / (2 * math.pi)
    q = np.arange(1, Q_MAX + 1)
    dist = np.abs(2.0 * np.sin(math.pi * q * theta))
    hits = np.nonzero(dist < EPS_RES)[0]
    if hits.size:
        return MultiplierClass("parabolic", q=int(q[hits[0]]))
    return MultiplierClass("elliptic")


# ---------------------------------------------------------------------------
# resonance tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResonanceEntry:
    alpha: tuple
    j: int                      # component, 1-based
    kind: str                   # Regular | IrregularSingular | IrregularComposite | Degenerate
    witness: tuple | None = None  # (generator_sum, core) for composite entries


@dataclass(frozen=True)
class ResonanceTable:
    degree_bound: int
    entries: tuple
    generators: tuple
    minimal: tuple
    cominimal: tuple

    def pairs(self):
        return [(e.alpha, e.j) for e in self.entries]

    def to_dict(self) -> dict:
        return {
            "degree_bound": self.degree_bound,
            "entries": [
                {"alpha": list(e.alpha), "j": e.j, "kind": e.kind,
                 "witness": None if e.witness is None else
                 {"generator": list(e.witness[0]), "core": list(e.witness[1])}}
                for e in self.entries],
            "generators": [list(g) for g in self.generators],
            "minimal": [list(g) for g in self.minimal],
            "cominimal": [list(g) for g in self.cominimal],
        }


def _le(a, b) -> bool:
    return all(x <= y for x, y in zip(a, b))


def _sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def find_resonances(lam: MultiplierTuple, degree_bound: int) -> ResonanceTable:
    """All resonance pairs (alpha, j) with 2 <= |alpha| <= degree_bound,
    classified per the regular/irregular taxonomy, plus the generator set
    with its minimal/cominimal decomposition."""
    if degree_bound < 2:
        raise ValueError("degree_bound must be >= 2")
    d = lam.dim
    alphas, _, _ = mvps._monomials(d, degree_bound)

    generators = tuple(g for g in alphas if lam.is_generator(g))
    gen_set = set(generators)

    entries = []
    for alpha in alphas:
        n = sum(alpha)
        if n < 2:
            continue
        for j in range(1, d + 1):
            if not lam.is_resonant_pair(alpha, j):
                continue
            entries.append(ResonanceEntry(alpha, j, *_classify_resonance(lam, alpha, j, gen_set)))
    minimal, cominimal = minimal_cominimal(generators)
    return ResonanceTable(degree_bound, tuple(entries), generators,
                          tuple(minimal), tuple(cominimal))


def _classify_resonance(lam: MultiplierTuple, alpha, j: int, gen_set: set):
    if abs(lam.values[j - 1]) < EPS_RES:
        return "Degenerate", None
    e_j = tuple(1 if i == j - 1 else 0 for i in range(lam.dim))
    if alpha[j - 1] >= 1 and _sub(alpha, e_j) in gen_set:
        return "Regular", None
    below = [g for g in gen_set if _le(g, alpha) and g != alpha]
    if not below:
        return "IrregularSingular", None
    # peel generators off until no generator fits strictly below the core;
    # the peeled sum is itself a generator (closure under addition)
    core = alpha
    total = tuple(0 for _ in alpha)
    while True:
        nxt = next((g for g in sorted(gen_set, key=lambda g: (sum(g), g))
                    if _le(g, core) and g != core), None)
        if nxt is None:
            break
        core = _sub(core, nxt)
        total = tuple(x + y for x, y in zip(total, nxt))
        if sum(core) < 1:
            break
    return "IrregularComposite", (total, core)


# ---------------------------------------------------------------------------
# minimal / cominimal generator decomposition
# ---------------------------------------------------------------------------

def _nat_representable(target, basis) -> bool:
    """Is target an N-combination of basis elements?  Bounded DFS with memo."""
    basis = [tuple(b) for b in basis if any(b)]
    memo = {}

    def rec(t):
        if all(x == 0 for x in t):
            return True
        if t in memo:
            return memo[t]
        ok = any(_le(b, t) and rec(_sub(t, b)) for b in basis)
        memo[t] = ok
        return ok

    return rec(tuple(target))


def _primitive(g):
    gc = 0
    for x in g:
        gc = math.gcd(gc, x)
    return tuple(x // gc for x in g), gc


def _extremal_directions(directions: Sequence[tuple]) -> list:
    """Directions on extremal rays of the cone spanned by all of them."""
    if len(directions) <= 1:
        return list(directions)
    out = []
    for p in directions:
        others = [q for q in directions if q != p]
        A = np.array(others, dtype=float).T
        res = scipy.optimize.linprog(
            c=np.zeros(len(others)), A_eq=A, b_eq=np.array(p, dtype=float),
            bounds=[(0, None)] * len(others), method="highs")
        if not res.success:
            out.append(p)
    return out


def minimal_cominimal(generators: Iterable) -> tuple[list, list]:
    """Split a (bound-complete) generator set into minimal elements and
    cominimal witnesses.

    Minimal elements sit on the extremal rays of the generator cone (on each
    ray, the additively irreducible multiples present).  Cominimal elements
    are the graded-lex-first witnesses among generators not reachable as
    N-combinations of the minimal ones.  Every supplied generator must then
    decompose as sum(a_i * minimal_i) + (0 or 1) * cominimal_j; failure
    raises DecompositionIncomplete.
    """
    gens = sorted({tuple(int(x) for x in g) for g in generators},
                  key=lambda g: (sum(g), g))
    gens = [g for g in gens if any(g)]
    if not gens:
        return [], []

    rays: dict[tuple, list[int]] = {}
    for g in gens:
        p, k = _primitive(g)
        rays.setdefault(p, []).append(k)

    minimal = []
    for p in _extremal_directions(sorted(rays)):
        ks = sorted(set(rays[p]))
        irreducible: list[int] = []
        for k in ks:
            if not _nat_rep_int(k, irreducible):
                irreducible.append(k)
        minimal.extend(tuple(k * x for x in p) for k in irreducible)
    minimal.sort(key=lambda g: (sum(g), g))

    cominimal = []
    for g in gens:
        if _nat_representable(g, minimal):
            continue
        if any(c != g and _le(c, g) and _nat_representable(_sub(g, c), minimal)
               for c in cominimal):
            continue
        cominimal.append(g)

    for g in gens:
        ok = _nat_representable(g, minimal) or any(
            _le(c, g) and _nat_representable(_sub(g, c), minimal) for c in cominimal)
        if not ok:
            raise DecompositionIncomplete(f"generator {g} does not decompose", generator=list(g))
    return minimal, cominimal


def _nat_rep_int(k: int, parts: list[int]) -> bool:
    if k == 0:
        return True
    return any(p <= k and _nat_rep_int(k - p, parts) for p in parts)


# ---------------------------------------------------------------------------
# m-resonance detection
# ---------------------------------------------------------------------------

def _rank_over_q(rows: list) -> int:
    """Exact rank of an integer matrix via fraction Gaussian elimination."""
    mat = [[Fraction(x) for x in r] for r in rows]
    rank = 0
    cols = len(mat[0]) if mat else 0
    for c in range(cols):
        piv = next((r for r in range(rank, len(mat)) if mat[r][c] != 0), None)
        if piv is None:
            continue
        mat[rank], mat[piv] = mat[piv], mat[rank]
        pv = mat[rank][c]
        for r in range(len(mat)):
            if r != rank and mat[r][c] != 0:
                f = mat[r][c] / pv
                mat[r] = [a - f * b for a, b in zip(mat[r], mat[rank])]
        rank += 1
    return rank


def detect_m_resonance(lam: MultiplierTuple, r: int, N: int):
    """If the resonances in components 1..r up to degree N are exactly
    {k_1 a^1 + ... + k_m a^m + e_j}, return (m, generators); else None.

    The candidate generators are the minimal elements of the generator set
    supported in the first r coordinates; they must be Q-linearly
    independent and m >= 1.
    """
    if not 1 <= r <= lam.dim:
        raise ValueError("need 1 <= r <= d")
    d = lam.dim
    alphas, _, _ = mvps._monomials(d, N)

    actual = set()
    for alpha in alphas:
        if sum(alpha) < 2:
            continue
        for j in range(1, r + 1):
            if lam.is_resonant_pair(alpha, j):
                actual.add((alpha, j))

    gens_r = [g for g in alphas
              if all(g[i] == 0 for i in range(r, d)) and lam.is_generator(g)]
    if not gens_r:
        return None
    try:
        minimal, _ = minimal_cominimal(gens_r)
    except DecompositionIncomplete:
        return None
    if not minimal:
        return None
    if _rank_over_q([list(g) for g in minimal]) != len(minimal):
        return None

    predicted = set()

    def extend(base, idx):
        if idx == len(minimal):
            if all(x == 0 for x in base):
                return
            n = sum(base)
            for j in range(1, r + 1):
                alpha = tuple(x + (1 if i == j - 1 else 0) for i, x in enumerate(base))
                if sum(alpha) <= N:
                    predicted.add((alpha, j))
            return
        g = minimal[idx]
        k = 0
        while True:
            cand = tuple(x + k * y for x, y in zip(base, g))
            if sum(cand) > N - 1:
                break
            extend(cand, idx + 1)
            k += 1

    extend(tuple(0 for _ in range(d)), 0)
    if predicted != actual:
        return None
    return len(minimal), list(minimal)


# ---------------------------------------------------------------------------
# linear stable / centre / unstable splitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearSplitting:
    stable_basis: tuple
    centre_basis: tuple
    unstable_basis: tuple

    def concatenated(self) -> np.ndarray:
        cols = list(self.stable_basis) + list(self.centre_basis) + list(self.unstable_basis)
        return np.array(cols, dtype=complex).T


def invariant_splitting(L) -> LinearSplitting:
    """Bases of the sums of generalised eigenspaces with |lambda| <1 / =1 / >1
    (EPS_NEUTRAL band), via sorted complex Schur decompositions."""
    L = np.asarray(L, dtype=complex)

    def basis(select) -> tuple:
        T, Z, k = scipy.linalg.schur(L, output="complex", sort=select)
        return tuple(Z[:, i].copy() for i in range(k))

    stable = basis(lambda x: abs(x) < 1 - EPS_NEUTRAL)
    centre = basis(lambda x: abs(abs(x) - 1) <= EPS_NEUTRAL)
    unstable = basis(lambda x: abs(x) > 1 + EPS_NEUTRAL)
    return LinearSplitting(stable, centre, unstable)
