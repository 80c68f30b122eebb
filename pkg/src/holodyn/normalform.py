"""Finite-order normalization: Poincare-Dulac, formal linearization, the
Brjuno-set selective elimination, and 1-D parabolic normal forms.

All operations solve the homological equation F o H = H o G degree by
degree.  The degree-n right-hand side is obtained by recomposing the
truncated germs (correct by construction); the unknown coefficients enter
linearly and are solved per multi-index (diagonal linear part) or by a
degree-block linear system (Jordan/triangular linear part).
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable

import numpy as np

from . import mvps, smalldiv
from .errors import (ConditionViolation, InsufficientTruncation, IsIdentityIterate,
                     NotTangentToIdentity, NotTriangular, QuadratureNonConvergent,
                     SmallDivisor)
from .mvps import TruncatedGerm, compose, linear_germ, linear_part, truncate
from .spectrum import EPS_JORDAN, EPS_RES, MultiplierTuple

EPS_HOMOL = 1e-9
EPS_DIV = 1e-12


@dataclass(frozen=True)
class NormalizationResult:
    normal_form: TruncatedGerm
    conjugacy: TruncatedGerm
    resonant_support: tuple      # (alpha, j) slots kept in the normal form, j 1-based
    residual: float              # max coeff of F o H - H o G through degree N

    def to_dict(self) -> dict:
        return {
            "normal_form": mvps.germ_to_dict(self.normal_form),
            "conjugacy": mvps.germ_to_dict(self.conjugacy),
            "resonant_support": [{"alpha": list(a), "j": j}
                                 for a, j in self.resonant_support],
            "residual": self.residual,
        }


@dataclass(frozen=True)
class ResonanceObstruction:
    """First resonance blocking formal linearization (not an error)."""
    alpha: tuple
    j: int

    def to_dict(self) -> dict:
        return {"obstruction": {"alpha": list(self.alpha), "j": self.j}}


def _positional_multipliers(F: TruncatedGerm, L: np.ndarray) -> MultiplierTuple:
    """Diagonal entries in coordinate order, with germ exact angles attached."""
    return MultiplierTuple(values=tuple(np.diag(L)), exact_angles=F.exact_angles)


def _require_jordan_upper(L: np.ndarray):
    d = L.shape[0]
    scale = max(1.0, float(np.max(np.abs(L))))
    for j in range(d):
        for i in range(d):
            if i < j and abs(L[j, i]) > 1e-12 * scale:
                raise NotTriangular(f"entry below diagonal at ({j + 1},{i + 1})")
            if i > j + 1 and abs(L[j, i]) > 1e-12 * scale:
                raise NotTriangular(f"entry above the super-diagonal at ({j + 1},{i + 1})")
    for j in range(d - 1):
        e = L[j, j + 1]
        if abs(e) > 1e-12 * scale and abs(e - 1.0) > 1e-12:
            raise NotTriangular(f"super-diagonal entry {e} not in {{0,1}}")
        if abs(e - 1.0) <= 1e-12 and abs(L[j, j] - L[j + 1, j + 1]) > EPS_JORDAN:
            raise NotTriangular("Jordan coupling between distinct eigenvalues")


def _degree_defect(F: TruncatedGerm, H: TruncatedGerm, G: TruncatedGerm, n: int) -> dict:
    """Coefficients of (F o H - H o G) at total degree n, as alpha -> C^d."""
    FH = compose(truncate(F, n), truncate(H, n))
    HG = compose(truncate(H, n), truncate(G, n))
    diff = mvps.subtract(FH, HG)
    out: dict = {}
    for j, s in enumerate(diff.components):
        for a, c in s.coeffs.items():
            if sum(a) == n:
                out.setdefault(a, np.zeros(F.dim, dtype=complex))[j] = c
    return out


def _spread_matrix(L: np.ndarray, betas: list, trunc: int) -> np.ndarray:
    """S[a_idx, b_idx] = coefficient of z^alpha in (Lz)^beta for |alpha| = |beta| = n."""
    d = L.shape[0]
    Lg = linear_germ(L, trunc)
    comp_vecs = [s.to_vector() for s in Lg.components]
    _, idx_all, _ = mvps._monomials(d, trunc)
    S = np.zeros((len(betas), len(betas)), dtype=complex)
    for bi, beta in enumerate(betas):
        vec = None
        for i in range(d):
            for _ in range(beta[i]):
                vec = comp_vecs[i] if vec is None else mvps._vec_mul(vec, comp_vecs[i], d, trunc)
        for ai, alpha in enumerate(betas):
            S[ai, bi] = vec[idx_all[alpha]]
    return S


def poincare_dulac(F: TruncatedGerm) -> NormalizationResult:
    """Poincare-Dulac normal form through the truncation degree.

    Requires the linear part upper-triangular with Jordan super-diagonal
    entries in {0,1}.  The canonical conjugacy has zero coefficients on all
    resonant slots; resonant right-hand sides are absorbed into the normal
    form.
    """
    d, N = F.dim, F.trunc
    L = linear_part(F)
    _require_jordan_upper(L)
    lam = _positional_multipliers(F, L)
    diagonal = all(abs(L[j, j + 1]) <= 1e-12 for j in range(d - 1))

    H = mvps.identity_germ(d, N)
    G = linear_germ(L, N)
    support: list = []
    h_coeffs = [dict(s.coeffs) for s in H.components]
    g_coeffs = [dict(s.coeffs) for s in G.components]

    for n in range(2, N + 1):
        T = _degree_defect(F, H, G, n)
        alphas_n = [a for a in mvps._monomials(d, N)[0] if sum(a) == n]
        res_slots = {(a, j) for a in alphas_n for j in range(1, d + 1)
                     if lam.is_resonant_pair(a, j)}
        if diagonal:
            for a in alphas_n:
                t = T.get(a)
                for j in range(1, d + 1):
                    tj = 0j if t is None else t[j - 1]
                    if (a, j) in res_slots:
                        support.append((a, j))
                        if tj != 0:
                            g_coeffs[j - 1][a] = tj
                    elif tj != 0:
                        h_coeffs[j - 1][a] = tj / (lam.power(a) - lam.values[j - 1])
        else:
            _solve_block(L, lam, alphas_n, res_slots, T, h_coeffs, g_coeffs, N)
            support.extend(sorted(res_slots, key=lambda aj: (aj[0], aj[1])))
        H = _rebuild(d, N, h_coeffs, F.exact_angles)
        G = _rebuild(d, N, g_coeffs, F.exact_angles)

    residual = mvps.max_coeff_diff(compose(F, H), compose(H, G))
    support = sorted(set(support), key=lambda aj: (sum(aj[0]), aj[0], aj[1]))
    return NormalizationResult(G, H, tuple(support), residual)


def _rebuild(d: int, N: int, coeff_dicts: list, exact_angles) -> TruncatedGerm:
    comps = tuple(mvps.TruncatedSeries(d, N, c) for c in coeff_dicts)
    return TruncatedGerm(d, N, comps, exact_angles=exact_angles)


def _solve_block(L, lam, alphas_n, res_slots, T, h_coeffs, g_coeffs, trunc):
    """Coupled degree-n solve for triangular/Jordan linear parts.

    Unknowns pack as X[(alpha, j)]; the operator is
    M(H_n) = L . H_n - H_n o (L z) and the slots in `res_slots` are forced
    to zero in H_n, their equations defining the normal-form coefficients.
    """
    d = L.shape[0]
    index = {a: i for i, a in enumerate(alphas_n)}
    S = _spread_matrix(L, alphas_n, trunc)
    m = len(alphas_n)
    dim_total = m * d

    def flat(ai, j):
        return ai * d + j

    M = np.zeros((dim_total, dim_total), dtype=complex)
    for ai in range(m):
        for j in range(d):
            row = flat(ai, j)
            for i in range(d):
                M[row, flat(ai, i)] += L[j, i]
            for bi in range(m):
                M[row, flat(bi, j)] -= S[ai, bi]

    rhs = np.zeros(dim_total, dtype=complex)
    for a, vec in T.items():
        ai = index[a]
        for j in range(d):
            rhs[flat(ai, j)] = vec[j]

    free = [flat(index[a], j - 1) for a in alphas_n for j in range(1, d + 1)
            if (a, j) not in res_slots]
    X = np.zeros(dim_total, dtype=complex)
    if free:
        A = M[np.ix_(free, free)]
        X[free] = np.linalg.solve(A, -rhs[free])
    G_full = rhs + M @ X
    for a in alphas_n:
        ai = index[a]
        for j in range(1, d + 1):
            if (a, j) in res_slots:
                val = G_full[flat(ai, j - 1)]
                if val != 0:
                    g_coeffs[j - 1][a] = val
            else:
                val = X[flat(ai, j - 1)]
                if val != 0:
                    h_coeffs[j - 1][a] = val


def linearize_formal(F: TruncatedGerm):
    """Formal linearization H with F o H = H o dF_0 through degree N, or the
    first obstructing resonance (alpha, j) as a ResonanceObstruction."""
    d, N = F.dim, F.trunc
    L = linear_part(F)
    tri = all(abs(L[j, i]) < 1e-300 for j in range(d) for i in range(j))
    if tri:
        lam = _positional_multipliers(F, L)
    else:
        lam = MultiplierTuple(values=tuple(np.linalg.eigvals(L)))
    for a in mvps._monomials(d, N)[0]:
        if sum(a) < 2:
            continue
        for j in range(1, d + 1):
            if lam.is_resonant_pair(a, j):
                return ResonanceObstruction(alpha=a, j=j)

    diagonal = np.max(np.abs(L - np.diag(np.diag(L)))) <= 1e-12 * max(1.0, np.max(np.abs(L)))
    H = mvps.identity_germ(d, N)
    G = linear_germ(L, N)
    h_coeffs = [dict(s.coeffs) for s in H.components]
    g_dummy = [dict(s.coeffs) for s in G.components]
    for n in range(2, N + 1):
        T = _degree_defect(F, H, G, n)
        alphas_n = [a for a in mvps._monomials(d, N)[0] if sum(a) == n]
        if diagonal:
            for a, vec in T.items():
                for j in range(1, d + 1):
                    if vec[j - 1] != 0:
                        h_coeffs[j - 1][a] = vec[j - 1] / (lam.power(a) - lam.values[j - 1])
        else:
            _solve_block(L, lam, alphas_n, set(), T, h_coeffs, g_dummy, N)
        H = _rebuild(d, N, h_coeffs, F.exact_angles)
    return H


def _as_index_set(pred, d: int, N: int) -> set:
    """Normalize a predicate or collection to a set of order >= 2 indices."""
    alphas = [a for a in mvps._monomials(d, N)[0] if sum(a) >= 2]
    if callable(pred):
        return {a for a in alphas if pred(a)}
    coll = {tuple(int(x) for x in a) for a in pred}
    return {a for a in alphas if a in coll}


def selective_eliminate(F: TruncatedGerm, A0, A) -> NormalizationResult:
    """Eliminate exactly the A-supported monomials, keeping A0 untouched.

    A0 and A are multi-index predicates (callables) or explicit collections,
    evaluated on 2 <= |alpha| <= N; indices of order <= 1 count as A0.
    Validates the ordering and product conditions of the elimination theorem
    on the truncation and refuses divisors below EPS_DIV.
    """
    d, N = F.dim, F.trunc
    L = linear_part(F)
    if np.max(np.abs(L - np.diag(np.diag(L)))) > 1e-12 * max(1.0, np.max(np.abs(L))):
        raise NotTriangular("selective_eliminate requires a diagonal linear part")
    lam = _positional_multipliers(F, L)

    A0_set = _as_index_set(A0, d, N)
    A_set = _as_index_set(A, d, N)
    overlap = A0_set & A_set
    if overlap:
        raise ConditionViolation("disjointness", sorted(overlap)[0])

    _check_condition1(A0_set, A_set, d, N)
    _check_condition2(F, A0_set, A_set, d, N)

    for a in sorted(A_set, key=lambda a: (sum(a), a)):
        for j in range(1, d + 1):
            div = abs(lam.power(a) - lam.values[j - 1])
            if div <= EPS_DIV:
                raise SmallDivisor(a, j, value=div)

    H = mvps.identity_germ(d, N)
    G = linear_germ(L, N)
    h_coeffs = [dict(s.coeffs) for s in H.components]
    g_coeffs = [dict(s.coeffs) for s in G.components]
    for n in range(2, N + 1):
        T = _degree_defect(F, H, G, n)
        for a, vec in T.items():
            if a in A_set:
                for j in range(1, d + 1):
                    if vec[j - 1] != 0:
                        h_coeffs[j - 1][a] = vec[j - 1] / (lam.power(a) - lam.values[j - 1])
            else:
                for j in range(1, d + 1):
                    if vec[j - 1] != 0:
                        g_coeffs[j - 1][a] = vec[j - 1]
        H = _rebuild(d, N, h_coeffs, F.exact_angles)
        G = _rebuild(d, N, g_coeffs, F.exact_angles)

    residual = mvps.max_coeff_diff(compose(F, H), compose(H, G))
    support = []
    for j in range(1, d + 1):
        for a, c in g_coeffs[j - 1].items():
            if sum(a) >= 2 and c != 0:
                support.append((a, j))
    support.sort(key=lambda aj: (sum(aj[0]), aj[0], aj[1]))
    return NormalizationResult(G, H, tuple(support), residual)


def _check_condition1(A0_set: set, A_set: set, d: int, N: int):
    def below(alpha):
        for beta in itertools.product(*[range(x + 1) for x in alpha]):
            if beta != alpha and sum(beta) >= 2:
                yield beta

    for a in A0_set:
        for b in below(a):
            if b not in A0_set:
                raise ConditionViolation("condition1", (list(a), list(b)))
    for a in A_set:
        for b in below(a):
            if b not in A0_set and b not in A_set:
                raise ConditionViolation("condition1", (list(a), list(b)))


def _check_condition2(F: TruncatedGerm, A0_set: set, A_set: set, d: int, N: int):
    """No product of A0-supported nonzero coefficients may point back into A:
    if beta_1..beta_l are atom indices (A0 or order 1) with at least one of
    order >= 2, their sum lands in A0 u A, and f^{j_1}_{beta_1}...f^{j_l}_{beta_l}
    is nonzero, then e_{j_1}+...+e_{j_l} must avoid A."""
    atoms = []
    for b in sorted(A0_set, key=lambda a: (sum(a), a)):
        for j in range(1, d + 1):
            if F.components[j - 1][b] != 0:
                atoms.append((b, j, True))
    for i in range(d):
        e = tuple(1 if t == i else 0 for t in range(d))
        for j in range(1, d + 1):
            if F.components[j - 1][e] != 0:
                atoms.append((e, j, False))

    target = A0_set | A_set

    def dfs(start, total, e_J, count, has_big):
        if sum(total) > N:
            return
        if count >= 2 and has_big and tuple(total) in target:
            if tuple(e_J) in A_set:
                raise ConditionViolation(
                    "condition2", {"sum": list(total), "e_J": list(e_J)})
        if sum(total) >= N:
            return
        for idx in range(start, len(atoms)):
            b, j, big = atoms[idx]
            if sum(total) + sum(b) > N:
                continue
            dfs(idx,
                tuple(x + y for x, y in zip(total, b)),
                tuple(x + (1 if t == j - 1 else 0) for t, x in enumerate(e_J)),
                count + 1, has_big or big)

    zero = tuple(0 for _ in range(d))
    dfs(0, zero, zero, 0, False)


def brjuno_set_check(lam: MultiplierTuple, A: Iterable, K: int) -> smalldiv.BrjunoReport:
    """Partial sum sum_{k<=K} 2^{-k} log(1/omega_A(2^k)) with per-level values;
    delegates the restricted divisor function to smalldiv."""
    return smalldiv.brjuno_series(lam, K, "setbased", A=list(A))


def germ_order(F: TruncatedGerm):
    """Smallest degree >= 2 with a nonzero homogeneous layer; None if all
    layers vanish through the truncation (reported as "> trunc").

    In dimension >= 2 the germ must be tangent to the identity.
    """
    d = F.dim
    if d >= 2:
        L = linear_part(F)
        if np.max(np.abs(L - np.eye(d))) > EPS_RES:
            raise NotTangentToIdentity("linear part is not the identity")
    orders = [sum(a) for s in F.components for a in s.coeffs if sum(a) >= 2]
    return min(orders) if orders else None


# ---------------------------------------------------------------------------
# 1-D parabolic normal form and index
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParabolicNF1D:
    multiplier: complex
    p: int                  # exact order of the root of unity
    k: int
    b: complex
    resit: complex          # (k p + 1)/2 - b

    def to_dict(self) -> dict:
        return {"multiplier": {"re": self.multiplier.real, "im": self.multiplier.imag},
                "p": self.p, "k": self.k,
                "b": {"re": self.b.real, "im": self.b.imag},
                "resit": {"re": self.resit.real, "im": self.resit.imag}}


def parabolic_nf_1d(f: TruncatedGerm, angle: Fraction | None = None) -> ParabolicNF1D:
    """Formal normal form lambda z + z^{pk+1} + b z^{2pk+1} of a 1-D parabolic
    germ whose multiplier is an exact root of unity.

    The rational angle comes from the germ metadata or the `angle` argument;
    a bit-exact multiplier 1.0 counts as angle 0 (root-of-unity-ness is not
    tolerance-decidable, so nothing else is inferred).  b is produced by the
    finite conjugation chain h(z) = z + c z^{pj+1} suppressing, for j != k,
    the coefficient at degree p(k+j)+1.
    """
    if f.dim != 1:
        raise ValueError("parabolic_nf_1d expects a 1-D germ")
    lam = f.components[0][(1,)]
    if angle is None and f.exact_angles is not None:
        angle = f.exact_angles[0]
    if angle is None:
        if lam == 1.0:
            angle = Fraction(0)
        else:
            raise ValueError("exact-angle parabolicity required: supply angle=p/q")
    angle = Fraction(angle) % 1
    p = angle.denominator
    if abs(lam) < 1e-12 or abs(lam / abs(lam) - cmath.exp(2j * math.pi * float(angle))) > 1e-10:
        raise ValueError(f"multiplier {lam} inconsistent with angle {angle}")
    if abs(abs(lam) - 1.0) > EPS_RES:
        raise ValueError("parabolic multiplier must have |lambda| = 1")

    N = f.trunc
    work = TruncatedGerm(1, N, f.components, exact_angles=(angle,))
    g = poincare_dulac(work).normal_form  # only exponents = 1 mod p survive

    k = None
    for kk in range(1, (N - 1) // p + 1):
        if abs(g.components[0][(p * kk + 1,)]) > 0:
            k = kk
            break
    if k is None:
        raise IsIdentityIterate(f"f^{p} = id through the truncation {N}")
    if N < 2 * p * k + 1:
        raise InsufficientTruncation(
            f"need trunc >= {2 * p * k + 1} to determine b (got {N})")

    # scale a_k to 1
    a_k = g.components[0][(p * k + 1,)]
    s = a_k ** (-1.0 / (p * k))
    g = _conjugate_linear_1d(g, s)

    # kill a_{k+j} for j != k by h = z + c z^{pj+1}
    j = 1
    while p * (k + j) + 1 <= N:
        if j != k:
            m = p * (k + j) + 1
            c_cur = g.components[0][(m,)]
            if c_cur != 0:
                c = -c_cur / (p * (k - j))
                h = mvps.make_germ(1, N, [(1, (1,), 1.0), (1, (p * j + 1,), c)])
                g = compose(mvps.invert(h), compose(g, h))
        j += 1

    b = g.components[0][(2 * p * k + 1,)]
    resit = (k * p + 1) / 2 - b
    return ParabolicNF1D(multiplier=lam, p=p, k=k, b=b, resit=resit)


def _conjugate_linear_1d(g: TruncatedGerm, s: complex) -> TruncatedGerm:
    """sigma^{-1} o g o sigma for sigma(z) = s z: coefficient j scales by s^{j-1}."""
    coeffs = {a: c * s ** (sum(a) - 1) for a, c in g.components[0].coeffs.items()}
    return TruncatedGerm(1, g.trunc, (mvps.TruncatedSeries(1, g.trunc, coeffs),),
                         exact_angles=g.exact_angles)


@dataclass(frozen=True)
class ParabolicIndexResult:
    b: complex
    resit: complex | None
    m_used: int
    est_error: float

    def to_dict(self) -> dict:
        d = {"b": {"re": self.b.real, "im": self.b.imag},
             "m_used": self.m_used, "est_error": self.est_error}
        if self.resit is not None:
            d["resit"] = {"re": self.resit.real, "im": self.resit.imag}
        return d


def parabolic_index(f: Callable, *, lam: complex = 1.0, radius: float = 0.1,
                    m0: int = 64, m_cap: int = 1 << 20,
                    p: int = 1, k: int | None = None) -> ParabolicIndexResult:
    """Index b = (1/2 pi i) contour integral of dz / (lam z - f(z)) over
    |z| = radius, by trapezoidal quadrature with doubling node counts.

    The caller guarantees f is evaluable on the circle and 0 is the only
    fixed point inside.  Doubling must move the estimate by <= 1e-8, else
    QuadratureNonConvergent.  With k supplied, also reports
    resit = (k p + 1)/2 - b.
    """
    def estimate(m: int) -> complex:
        nodes = radius * np.exp(2j * np.pi * np.arange(m) / m)
        vals = np.asarray(f(nodes), dtype=complex)
        denom = lam * nodes - vals
        if not np.all(np.isfinite(denom)) or np.min(np.abs(denom)) < 1e-300:
            raise QuadratureNonConvergent("denominator vanished on the contour")
        return complex(np.mean(nodes / denom))

    m = m0
    prev = estimate(m)
    while m <= m_cap:
        m *= 2
        cur = estimate(m)
        err = abs(cur - prev)
        if err <= 1e-8:
            resit = None if k is None else (k * p + 1) / 2 - cur
            return ParabolicIndexResult(b=cur, resit=resit, m_used=m, est_error=err)
        prev = cur
    raise QuadratureNonConvergent(f"no convergence up to {m_cap} nodes")
