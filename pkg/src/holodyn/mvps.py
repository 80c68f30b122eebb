"""Degree-truncated multivariate formal power series and germ algebra.

A germ is a d-tuple of complex power series with zero constant term, stored
sparsely as ``{multi-index: coefficient}`` and truncated at a fixed total
degree N.  All arithmetic (Cauchy products, composition, inversion) is exact
through degree N; higher-order terms are discarded.

Multi-indices are plain int tuples of length d, ordered graded-lex where an
ordering is needed.  Values are immutable after construction and all
operations are pure, so germs can be shared freely across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np

from .errors import DimensionMismatch, OrderOutOfRange, SingularLinearPart

MultiIndex = tuple  # tuple[int, ...]

#: relative pruning threshold: coefficients below EPS_PRUNE * (largest
#: coefficient of the same total degree) are dropped on construction.
EPS_PRUNE = 1e-15

#: maximum condition number accepted for the linear part in `invert`.
KAPPA_MAX = 1e12


def _as_multi_index(alpha, dim: int) -> MultiIndex:
    if isinstance(alpha, int):
        alpha = (alpha,)
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != dim:
        raise DimensionMismatch(f"multi-index {alpha} has length {len(alpha)}, expected {dim}")
    if any(a < 0 for a in alpha):
        raise OrderOutOfRange(f"negative entry in multi-index {alpha}")
    return alpha


def _graded_key(alpha: MultiIndex):
    return (sum(alpha), alpha)


@lru_cache(maxsize=None)
def _monomials(dim: int, trunc: int):
    """All multi-indices with 1 <= |alpha| <= trunc in graded-lex order."""
    alphas = []
    for total in range(1, trunc + 1):
        level = []

        def gen(prefix, remaining, left):
            if remaining == 0:
                if left == 0:
                    level.append(tuple(prefix))
                return
            for a in range(left + 1):
                gen(prefix + [a], remaining - 1, left - a)

        gen([], dim, total)
        level.sort()
        alphas.extend(level)
    index = {a: i for i, a in enumerate(alphas)}
    orders = np.array([sum(a) for a in alphas], dtype=np.int64)
    return tuple(alphas), index, orders


@lru_cache(maxsize=None)
def _mul_table(dim: int, trunc: int):
    """Index triples (ia, ib, iout) realizing the truncated Cauchy product."""
    alphas, index, _ = _monomials(dim, trunc)
    ia, ib, iout = [], [], []
    for i, a in enumerate(alphas):
        na = sum(a)
        if na + 1 > trunc:
            continue
        for j, b in enumerate(alphas):
            if na + sum(b) > trunc:
                continue
            c = tuple(x + y for x, y in zip(a, b))
            ia.append(i)
            ib.append(j)
            iout.append(index[c])
    return (np.array(ia, dtype=np.int64),
            np.array(ib, dtype=np.int64),
            np.array(iout, dtype=np.int64))


def _vec_mul(u: np.ndarray, v: np.ndarray, dim: int, trunc: int) -> np.ndarray:
    ia, ib, iout = _mul_table(dim, trunc)
    prod = u[ia] * v[ib]
    n = u.shape[0]
    re = np.bincount(iout, weights=prod.real, minlength=n)
    im = np.bincount(iout, weights=prod.imag, minlength=n)
    return re + 1j * im


def _prune_dict(dim: int, trunc: int, coeffs: Mapping[MultiIndex, complex]) -> dict:
    by_degree: dict[int, float] = {}
    for a, c in coeffs.items():
        if c == 0:
            continue
        n = sum(a)
        m = abs(c)
        if m > by_degree.get(n, 0.0):
            by_degree[n] = m
    out = {}
    for a, c in coeffs.items():
        if c == 0:
            continue
        if abs(c) < EPS_PRUNE * by_degree[sum(a)]:
            continue
        out[a] = complex(c)
    return out


@dataclass(frozen=True)
class TruncatedSeries:
    """One scalar series: sparse coefficients with 1 <= |alpha| <= trunc."""

    dim: int
    trunc: int
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1 or self.trunc < 1:
            raise OrderOutOfRange(f"need dim >= 1 and trunc >= 1, got ({self.dim}, {self.trunc})")
        clean = {}
        for a, c in self.coeffs.items():
            a = _as_multi_index(a, self.dim)
            n = sum(a)
            if n == 0 or n > self.trunc:
                raise OrderOutOfRange(f"|alpha| = {n} outside [1, {self.trunc}] for {a}")
            clean[a] = clean.get(a, 0j) + complex(c)
        object.__setattr__(self, "coeffs", _prune_dict(self.dim, self.trunc, clean))

    def __getitem__(self, alpha) -> complex:
        return self.coeffs.get(_as_multi_index(alpha, self.dim), 0j)

    def items_graded(self):
        return sorted(self.coeffs.items(), key=lambda kv: _graded_key(kv[0]))

    def to_vector(self) -> np.ndarray:
        alphas, index, _ = _monomials(self.dim, self.trunc)
        v = np.zeros(len(alphas), dtype=complex)
        for a, c in self.coeffs.items():
            v[index[a]] = c
        return v

    @staticmethod
    def from_vector(dim: int, trunc: int, v: np.ndarray) -> "TruncatedSeries":
        alphas, _, _ = _monomials(dim, trunc)
        coeffs = {a: v[i] for i, a in enumerate(alphas) if v[i] != 0}
        return TruncatedSeries(dim, trunc, coeffs)

    def max_abs(self) -> float:
        return max((abs(c) for c in self.coeffs.values()), default=0.0)


@dataclass(frozen=True)
class TruncatedGerm:
    """d components sharing (dim, trunc); the universal object of the package.

    ``exact_angles`` is optional caller metadata: entry j, when present, is a
    Fraction p/q asserting the j-th multiplier equals exp(2*pi*i*p/q) times
    its modulus.  It rides along serialization and feeds the exact-arithmetic
    resonance channel.
    """

    dim: int
    trunc: int
    components: tuple
    exact_angles: tuple | None = None

    def __post_init__(self):
        if len(self.components) != self.dim:
            raise DimensionMismatch(
                f"{len(self.components)} components for dim {self.dim}")
        for s in self.components:
            if s.dim != self.dim or s.trunc != self.trunc:
                raise DimensionMismatch("component (dim, trunc) mismatch")
        object.__setattr__(self, "components", tuple(self.components))
        if self.exact_angles is not None:
            ang = tuple(None if a is None else Fraction(a) for a in self.exact_angles)
            if len(ang) != self.dim:
                raise DimensionMismatch("exact_angles length must equal dim")
            object.__setattr__(self, "exact_angles", ang)

    def coefficient(self, j: int, alpha) -> complex:
        """Coefficient of z^alpha in component j (1-based)."""
        return self.components[j - 1][alpha]

    def max_abs(self) -> float:
        return max(s.max_abs() for s in self.components)

    def support(self):
        """All (alpha, j) with a stored coefficient, j 1-based, graded order."""
        out = []
        for j, s in enumerate(self.components, start=1):
            out.extend((a, j) for a in s.coeffs)
        out.sort(key=lambda aj: (_graded_key(aj[0]), aj[1]))
        return out

    def __call__(self, z):
        return evaluate(self, z)


def make_germ(dim: int, trunc: int, coeff_list: Iterable) -> TruncatedGerm:
    """Build a germ from (component j, multi-index, coefficient) triples.

    Components are 1-based; duplicate (j, alpha) entries are summed.
    """
    rows: list[dict] = [dict() for _ in range(dim)]
    for j, alpha, c in coeff_list:
        j = int(j)
        if not 1 <= j <= dim:
            raise DimensionMismatch(f"component index {j} outside 1..{dim}")
        a = _as_multi_index(alpha, dim)
        n = sum(a)
        if n == 0 or n > trunc:
            raise OrderOutOfRange(f"|alpha| = {n} outside [1, {trunc}] for {a}")
        rows[j - 1][a] = rows[j - 1].get(a, 0j) + complex(c)
    comps = tuple(TruncatedSeries(dim, trunc, r) for r in rows)
    return TruncatedGerm(dim, trunc, comps)


def zero_germ(dim: int, trunc: int) -> TruncatedGerm:
    return TruncatedGerm(dim, trunc, tuple(TruncatedSeries(dim, trunc, {}) for _ in range(dim)))


def identity_germ(dim: int, trunc: int) -> TruncatedGerm:
    return linear_germ(np.eye(dim, dtype=complex), trunc)


def linear_germ(L, trunc: int) -> TruncatedGerm:
    L = np.asarray(L, dtype=complex)
    d = L.shape[0]
    if L.shape != (d, d):
        raise DimensionMismatch(f"linear part must be square, got {L.shape}")
    comps = []
    for j in range(d):
        coeffs = {}
        for i in range(d):
            if L[j, i] != 0:
                e = tuple(1 if t == i else 0 for t in range(d))
                coeffs[e] = L[j, i]
        comps.append(TruncatedSeries(d, trunc, coeffs))
    return TruncatedGerm(d, trunc, tuple(comps))


def linear_part(F: TruncatedGerm) -> np.ndarray:
    """Matrix M with M[j][i] = coefficient of z_i in component j (0-based)."""
    d = F.dim
    M = np.zeros((d, d), dtype=complex)
    for j, s in enumerate(F.components):
        for i in range(d):
            e = tuple(1 if t == i else 0 for t in range(d))
            M[j, i] = s.coeffs.get(e, 0j)
    return M


def _check_same_space(a, b):
    if a.dim != b.dim or a.trunc != b.trunc:
        raise DimensionMismatch(
            f"operands live in different spaces: ({a.dim},{a.trunc}) vs ({b.dim},{b.trunc})")


def multiply(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    """Truncated Cauchy product of two scalar series."""
    _check_same_space(a, b)
    v = _vec_mul(a.to_vector(), b.to_vector(), a.dim, a.trunc)
    return TruncatedSeries.from_vector(a.dim, a.trunc, v)


def _needed_monomials(germ: TruncatedGerm):
    """Support closure under alpha -> alpha - e_l, down to order 1."""
    alphas, index, _ = _monomials(germ.dim, germ.trunc)
    needed = set()
    stack = [a for s in germ.components for a in s.coeffs if sum(a) >= 1]
    while stack:
        a = stack.pop()
        if a in needed or sum(a) <= 1:
            if sum(a) == 1:
                needed.add(a)
            continue
        needed.add(a)
        l = next(i for i, x in enumerate(a) if x > 0)
        parent = tuple(x - (1 if i == l else 0) for i, x in enumerate(a))
        stack.append(parent)
    return sorted(needed, key=_graded_key)


def compose(outer: TruncatedGerm, inner: TruncatedGerm) -> TruncatedGerm:
    """outer o inner, exact through the shared truncation degree.

    Monomials z^alpha of the outer germ are evaluated at the inner tuple by
    a graded product recursion (each monomial costs one truncated product on
    top of its parent), then accumulated per component.
    """
    _check_same_space(outer, inner)
    d, N = outer.dim, outer.trunc
    _, index, _ = _monomials(d, N)
    inner_vecs = [s.to_vector() for s in inner.components]

    mono_vals: dict = {}
    for a in _needed_monomials(outer):
        n = sum(a)
        if n == 1:
            i = a.index(1)
            mono_vals[a] = inner_vecs[i]
        else:
            l = next(i for i, x in enumerate(a) if x > 0)
            parent = tuple(x - (1 if i == l else 0) for i, x in enumerate(a))
            mono_vals[a] = _vec_mul(mono_vals[parent], inner_vecs[l], d, N)

    comps = []
    T = len(index)
    for s in outer.components:
        acc = np.zeros(T, dtype=complex)
        for a, c in s.coeffs.items():
            acc += c * mono_vals[a]
        comps.append(TruncatedSeries.from_vector(d, N, acc))
    return TruncatedGerm(d, N, tuple(comps))


def invert(H: TruncatedGerm) -> TruncatedGerm:
    """Compositional inverse K with H o K = K o H = id + O(degree N+1)."""
    L = linear_part(H)
    if np.linalg.cond(L) > KAPPA_MAX:
        raise SingularLinearPart(f"condition number exceeds {KAPPA_MAX:g}")
    d, N = H.dim, H.trunc
    Linv = np.linalg.inv(L)
    # nonlinear part of H
    h_nl = TruncatedGerm(d, N, tuple(
        TruncatedSeries(d, N, {a: c for a, c in s.coeffs.items() if sum(a) >= 2})
        for s in H.components))
    K = linear_germ(Linv, N)
    ident = identity_germ(d, N)
    for n in range(2, N + 1):
        # K <- L^{-1} (id - h o K); degree-n coefficients become final at step n
        C = compose(truncate(h_nl, n), truncate(K, n))
        comps = []
        for j in range(d):
            coeffs = dict(K.components[j].coeffs)
            for a in _monomials(d, n)[0]:
                if sum(a) != n:
                    continue
                rhs = np.array([ident.components[i][a] - C.components[i][a] for i in range(d)])
                val = (Linv @ rhs)[j]
                if val != 0:
                    coeffs[a] = val
            comps.append(TruncatedSeries(d, N, coeffs))
        K = TruncatedGerm(d, N, tuple(comps))
    return K


def truncate(F: TruncatedGerm, n: int) -> TruncatedGerm:
    """Restrict to degree <= n (n may equal trunc; must be >= 1)."""
    if n >= F.trunc:
        if n == F.trunc:
            return F
        raise OrderOutOfRange(f"cannot extend truncation {F.trunc} to {n}")
    comps = tuple(
        TruncatedSeries(F.dim, n, {a: c for a, c in s.coeffs.items() if sum(a) <= n})
        for s in F.components)
    return TruncatedGerm(F.dim, n, comps, exact_angles=F.exact_angles)


def add(a: TruncatedGerm, b: TruncatedGerm) -> TruncatedGerm:
    _check_same_space(a, b)
    comps = []
    for sa, sb in zip(a.components, b.components):
        coeffs = dict(sa.coeffs)
        for k, c in sb.coeffs.items():
            coeffs[k] = coeffs.get(k, 0j) + c
        comps.append(TruncatedSeries(a.dim, a.trunc, coeffs))
    return TruncatedGerm(a.dim, a.trunc, tuple(comps))


def subtract(a: TruncatedGerm, b: TruncatedGerm) -> TruncatedGerm:
    return add(a, scale(b, -1))


def scale(a: TruncatedGerm, c: complex) -> TruncatedGerm:
    comps = tuple(TruncatedSeries(a.dim, a.trunc, {k: c * v for k, v in s.coeffs.items()})
                  for s in a.components)
    return TruncatedGerm(a.dim, a.trunc, comps)


def max_coeff_diff(a: TruncatedGerm, b: TruncatedGerm) -> float:
    """Largest coefficient magnitude of a - b; the workhorse of residual checks."""
    _check_same_space(a, b)
    worst = 0.0
    for sa, sb in zip(a.components, b.components):
        keys = set(sa.coeffs) | set(sb.coeffs)
        for k in keys:
            worst = max(worst, abs(sa.coeffs.get(k, 0j) - sb.coeffs.get(k, 0j)))
    return worst


def evaluate(F: TruncatedGerm, z):
    """Evaluate the polynomial representative at z (shape (..., d) or (d,))."""
    z = np.asarray(z, dtype=complex)
    squeeze = False
    if z.ndim == 1:
        z = z[None, :]
        squeeze = True
    if z.shape[-1] != F.dim:
        raise DimensionMismatch(f"point has dimension {z.shape[-1]}, germ has {F.dim}")
    out = np.zeros(z.shape, dtype=complex)
    for j, s in enumerate(F.components):
        acc = np.zeros(z.shape[:-1], dtype=complex)
        for a, c in s.coeffs.items():
            term = np.full(z.shape[:-1], c, dtype=complex)
            for i, p in enumerate(a):
                if p:
                    term = term * z[..., i] ** p
            acc += term
        out[..., j] = acc
    return out[0] if squeeze else out


# ---------------------------------------------------------------------------
# canonical germ JSON
# ---------------------------------------------------------------------------

def germ_to_dict(F: TruncatedGerm) -> dict:
    comps = []
    for s in F.components:
        comps.append([
            {"alpha": list(a), "re": c.real, "im": c.imag}
            for a, c in s.items_graded()
        ])
    d = {"dim": F.dim, "trunc": F.trunc, "components": comps}
    if F.exact_angles is not None:
        d["exact_angles"] = [
            None if a is None else [a.numerator, a.denominator] for a in F.exact_angles]
    return d


def germ_from_dict(d: Mapping) -> TruncatedGerm:
    dim = int(d["dim"])
    trunc = int(d["trunc"])
    comps = []
    for row in d["components"]:
        coeffs = {}
        for ent in row:
            a = _as_multi_index(ent["alpha"], dim)
            n = sum(a)
            if n == 0 or n > trunc:
                raise OrderOutOfRange(f"|alpha| = {n} outside [1, {trunc}] for {a}")
            coeffs[a] = coeffs.get(a, 0j) + complex(ent["re"], ent["im"])
        comps.append(TruncatedSeries(dim, trunc, coeffs))
    angles = None
    if d.get("exact_angles") is not None:
        angles = tuple(None if a is None else Fraction(int(a[0]), int(a[1]))
                       for a in d["exact_angles"])
    return TruncatedGerm(dim, trunc, tuple(comps), exact_angles=angles)


def germ_to_json(F: TruncatedGerm) -> str:
    return json.dumps(germ_to_dict(F), sort_keys=True)


def germ_from_json(text: str) -> TruncatedGerm:
    return germ_from_dict(json.loads(text))
