"""Small-divisor arithmetic: continued fractions, Brjuno-type sums,
Diophantine/Cremer indicators, and the sigma/delta majorant diagnostics.

Finite data cannot decide convergence of a Brjuno-type series; every report
carries an explicit verdict (converges / diverges numerically, or undecided)
produced by fixed tail rules, never a limit claim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import mvps
from .errors import ZeroDivisor
from .spectrum import MultiplierTuple

#: stop the Gauss map once the convergent residual drops below this
CF_RESIDUAL_FLOOR = 1e-15

#: tail rules for verdicts (see BrjunoReport)
_TAIL_LEN = 5
_DIVERGE_TERM = 1.0
_DECAY_RATIO = 0.9


# ---------------------------------------------------------------------------
# continued fractions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContinuedFraction:
    """Partial quotients a_1.. and convergents (p_j, q_j), j = 0..len-1,
    with (p_0, q_0) = (0, 1).

    ``rational`` marks exact termination of the expansion; ``exhausted``
    marks an early stop because the convergent residual fell below the
    double-precision floor (the remaining quotients would be float noise).
    """

    theta: float
    partial_quotients: tuple
    convergents: tuple
    rational: bool = False
    exhausted: bool = False

    def denominators(self):
        return [q for _, q in self.convergents]


def continued_fraction(theta: float, J: int) -> ContinuedFraction:
    """First J partial quotients of theta in (0,1) via the exact Gauss map.

    The input double is treated as an exact rational, so no precision is
    lost stepping the map; instead the expansion stops (flagged) when the
    approximation error falls below CF_RESIDUAL_FLOOR, i.e. when further
    quotients would only reflect the binary representation of theta.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0,1), got {theta}")
    if J < 1:
        raise ValueError("J must be >= 1")
    x = Fraction(theta)
    target = x
    quotients: list[int] = []
    ps, qs = [0], [1]
    p_prev, q_prev = 1, 0      # (p_{-1}, q_{-1})
    rational = False
    exhausted = False
    for _ in range(J):
        if x == 0:
            rational = True
            break
        inv = 1 / x
        a = int(inv)  # floor; inv > 0
        x = inv - a
        quotients.append(a)
        p = a * ps[-1] + p_prev
        q = a * qs[-1] + q_prev
        p_prev, q_prev = ps[-1], qs[-1]
        ps.append(p)
        qs.append(q)
        residual = abs(target - Fraction(p, q))
        if residual == 0:
            rational = True
            break
        if residual < CF_RESIDUAL_FLOOR:
            exhausted = True
            break
    return ContinuedFraction(
        theta=float(theta),
        partial_quotients=tuple(quotients),
        convergents=tuple(zip(ps, qs)),
        rational=rational,
        exhausted=exhausted,
    )


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BrjunoReport:
    kind: str                 # Classical | CF | CFweak | Partial | Reduced | SetBased
    depth: int
    per_level: tuple          # (level, omega_value, term)
    partial_sum: float
    verdict: str              # ConvergesNumerically | DivergesNumerically | Undecided
    flags: tuple = ()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "depth": self.depth,
            "per_level": [
                {"level": l, "omega": w, "term": t} for (l, w, t) in self.per_level],
            "partial_sum": self.partial_sum,
            "verdict": self.verdict,
            "flags": list(self.flags),
        }


def _verdict(terms: Sequence[float], force_diverge: bool = False) -> str:
    if force_diverge:
        return "DivergesNumerically"
    if len(terms) >= _TAIL_LEN:
        tail = [abs(t) for t in terms[-_TAIL_LEN:]]
        if all(t > _DIVERGE_TERM for t in tail):
            return "DivergesNumerically"
        ok = True
        for a, b in zip(tail, tail[1:]):
            if b >= _DECAY_RATIO * a and b > 1e-300:
                ok = False
                break
        if ok:
            return "ConvergesNumerically"
    return "Undecided"


def brjuno_sum_cf(theta: float, J: int, weak: bool = False) -> BrjunoReport:
    """Partial sums of B'(theta) = sum 1/q_j log q_{j+1} (or log log for the
    weak variant).  Rational theta yields DivergesNumerically by convention
    (parabolic territory), flagged."""
    cf = continued_fraction(theta, J)
    qs = cf.denominators()
    levels = []
    total = 0.0
    for j in range(min(J, len(qs) - 1)):
        qn = qs[j + 1]
        if weak:
            term = math.log(math.log(qn)) / qs[j] if qn >= 2 else 0.0
        else:
            term = math.log(qn) / qs[j]
        total += term
        levels.append((j, float(qn), term))
    flags = []
    if cf.rational:
        flags.append("rational-theta")
    if cf.exhausted:
        flags.append("float-precision-exhausted")
    verdict = _verdict([t for (_, _, t) in levels], force_diverge=cf.rational)
    return BrjunoReport(kind="CFweak" if weak else "CF", depth=J,
                        per_level=tuple(levels), partial_sum=total,
                        verdict=verdict, flags=tuple(flags))


# ---------------------------------------------------------------------------
# omega functions
# ---------------------------------------------------------------------------

def _exclusion_exact(lam: MultiplierTuple, alpha, j: int) -> bool:
    return lam.is_resonant_pair(alpha, j, eps=1e-15)


def _degree_minima(lam: MultiplierTuple, degrees: Iterable[int], *,
                   support: Sequence[int] | None = None,
                   exclude_resonant: bool = False):
    """Per-degree minima of |lambda^alpha - lambda_j| with witnesses.

    support: 0-based coordinate indices alpha may use (None = all).
    Yields (degree, value, alpha, j) with value = +inf for empty degrees.
    """
    d = lam.dim
    vals = np.array(lam.values, dtype=complex)
    sup = list(range(d)) if support is None else list(support)

    def compositions(total, pos):
        if pos == len(sup) - 1:
            yield (total,)
            return
        for p in range(total + 1):
            for rest in compositions(total - p, pos + 1):
                yield (p,) + rest

    for s in degrees:
        best = math.inf
        warg = (None, None)
        for parts in compositions(s, 0):
            alpha = [0] * d
            power = 1.0 + 0j
            for idx, p in zip(sup, parts):
                alpha[idx] = p
                if p:
                    power *= vals[idx] ** int(p)
            alpha = tuple(alpha)
            for j in range(d):
                v = abs(power - vals[j])
                if v < best:
                    if exclude_resonant and _exclusion_exact(lam, alpha, j + 1):
                        continue
                    best = float(v)
                    warg = (alpha, j + 1)
        yield s, best, warg[0], warg[1]


def _degree_minima_fast(lam: MultiplierTuple, s_max: int, *,
                        support: Sequence[int] | None = None,
                        exclude_resonant: bool = False) -> list:
    """Vectorized per-degree minima for dims 1 and 2 (the hot path for deep
    Brjuno scans); falls back to the generic enumerator otherwise."""
    d = lam.dim
    vals = np.array(lam.values, dtype=complex)
    sup = list(range(d)) if support is None else list(support)
    out = []
    with np.errstate(over="ignore", invalid="ignore"):
        if len(sup) == 1:
            idx = sup[0]
            js = np.arange(2, s_max + 1)
            powers = vals[idx] ** js
            for s, p in zip(js, powers):
                best, warg = math.inf, (None, None)
                for j in range(d):
                    v = abs(p - vals[j])
                    alpha = tuple(int(s) if i == idx else 0 for i in range(d))
                    if exclude_resonant and _exclusion_exact(lam, alpha, j + 1):
                        continue
                    if v < best:
                        best, warg = float(v), (alpha, j + 1)
                out.append((int(s), best, warg[0], warg[1]))
            return out
        if len(sup) == 2:
            i1, i2 = sup
            pow1 = np.concatenate([[1.0 + 0j], np.cumprod(np.full(s_max, vals[i1]))])
            pow2 = np.concatenate([[1.0 + 0j], np.cumprod(np.full(s_max, vals[i2]))])
            for s in range(2, s_max + 1):
                a = np.arange(s + 1)
                prods = pow1[a] * pow2[s - a]
                best, warg = math.inf, (None, None)
                for j in range(d):
                    dist = np.abs(prods - vals[j])
                    cand = np.argsort(dist) if exclude_resonant else [int(np.argmin(dist))]
                    for t in cand:
                        alpha = [0] * d
                        alpha[i1] = int(a[t])
                        alpha[i2] = int(s - a[t])
                        alpha = tuple(alpha)
                        if exclude_resonant and _exclusion_exact(lam, alpha, j + 1):
                            continue
                        if dist[t] < best:
                            best, warg = float(dist[t]), (alpha, j + 1)
                        break
                out.append((s, best, warg[0], warg[1]))
            return out
    return list(_degree_minima(lam, range(2, s_max + 1), support=support,
                               exclude_resonant=exclude_resonant))


def omega(lam: MultiplierTuple, m: int, *, with_witness: bool = False):
    """omega(lambda, m) = min |lambda^alpha - lambda_j| over 2 <= |alpha| <= m."""
    if m < 2:
        raise ValueError("m must be >= 2")
    best, wit = math.inf, (None, None)
    for _, v, alpha, j in _degree_minima_fast(lam, m):
        if v < best:
            best, wit = v, (alpha, j)
    return (best, *wit) if with_witness else best


def omega_A(lam: MultiplierTuple, A: Iterable, k: int) -> float:
    """Restricted divisor function min{|lambda^alpha - lambda_i| : alpha in A,
    2 <= |alpha| <= k} with 1 adjoined."""
    if k < 2:
        raise ValueError("k must be >= 2")
    best = 1.0
    for alpha in A:
        alpha = tuple(int(x) for x in alpha)
        if not 2 <= sum(alpha) <= k:
            continue
        p = lam.power(alpha)
        for v in lam.values:
            best = min(best, abs(p - v))
    return best


def brjuno_series(lam: MultiplierTuple, K: int, kind: str = "Classical", *,
                  subset: Sequence[int] | None = None,
                  A: Iterable | None = None) -> BrjunoReport:
    """Partial sums sum_{nu<=K} 2^{-nu} log(1/omega(2^nu)) for the classical,
    partial (subset of multipliers, 1-based), reduced (resonant pairs
    excluded), or set-based (explicit A) divisor function.

    Raises ZeroDivisor when an in-range divisor vanishes exactly (the sum is
    undefined); the reduced kind excludes such pairs instead.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    kind_l = kind.lower()
    if kind_l not in ("classical", "partial", "reduced", "setbased"):
        raise ValueError(f"unknown kind {kind!r}")
    m_max = 2 ** K

    levels = []
    total = 0.0
    if kind_l == "setbased":
        A_list = [tuple(int(x) for x in a) for a in (A or [])]
        for nu in range(1, K + 1):
            w = omega_A(lam, A_list, 2 ** nu)
            if w == 0.0:
                raise ZeroDivisor(f"omega_A vanished at level {nu}", level=nu)
            term = 2.0 ** (-nu) * math.log(1.0 / w)
            total += term
            levels.append((nu, w, term))
    else:
        support = None
        if kind_l == "partial":
            if not subset:
                raise ValueError("partial kind requires a multiplier subset")
            support = [i - 1 for i in subset]
        minima = _degree_minima_fast(lam, m_max, support=support,
                                     exclude_resonant=(kind_l == "reduced"))
        running = math.inf
        wit = (None, None)
        idx = 0
        for nu in range(1, K + 1):
            bound = 2 ** nu
            while idx < len(minima) and minima[idx][0] <= bound:
                s, v, alpha, j = minima[idx]
                if v < running:
                    running, wit = v, (alpha, j)
                idx += 1
            if running == 0.0:
                raise ZeroDivisor(
                    f"exact resonance in range at level {nu}",
                    level=nu, alpha=list(wit[0]) if wit[0] else None, j=wit[1])
            if not math.isfinite(running):
                raise ZeroDivisor(f"no divisors in range at level {nu}", level=nu)
            term = 2.0 ** (-nu) * math.log(1.0 / running)
            total += term
            levels.append((nu, running, term))

    kind_name = {"classical": "Classical", "partial": "Partial",
                 "reduced": "Reduced", "setbased": "SetBased"}[kind_l]
    return BrjunoReport(kind=kind_name, depth=K, per_level=tuple(levels),
                        partial_sum=total, verdict=_verdict([t for (_, _, t) in levels]))


# ---------------------------------------------------------------------------
# Diophantine and Cremer indicators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiophantineWitness:
    c_best: float
    m_fit: float
    table: tuple          # record rows (q, dist_to_nearest_rational)
    rational_q: int | None = None

    def to_dict(self) -> dict:
        return {"c_best": self.c_best, "m_fit": self.m_fit,
                "table": [{"q": q, "dist": d} for q, d in self.table],
                "rational_q": self.rational_q}


def diophantine_witness(theta: float, Q: int) -> DiophantineWitness:
    """Scan d_q = q * dist(q theta, Z) for q <= Q and fit |theta - p/q| > c/q^m.

    The fit runs over record minima of |theta - p/q| (log-log least squares).
    A vanishing d_q flags theta as rational at that q.
    """
    if Q < 2:
        raise ValueError("Q must be >= 2")
    qs = np.arange(1, Q + 1, dtype=np.float64)
    frac = qs * theta - np.rint(qs * theta)
    dist = np.abs(frac) / qs            # |theta - p/q|
    rational_q = None
    zero = np.nonzero(dist == 0.0)[0]
    if zero.size:
        rational_q = int(qs[zero[0]])
        dist = dist[: zero[0] + 1]
        qs = qs[: zero[0] + 1]

    records = []
    best = math.inf
    for q, dv in zip(qs, dist):
        if dv < best:
            best = dv
            if dv > 0:
                records.append((int(q), float(dv)))
    if len(records) >= 2:
        lq = np.log([q for q, _ in records])
        ld = np.log([dv for _, dv in records])
        slope, intercept = np.polyfit(lq, ld, 1)
        m_fit = -float(slope)
        c_best = float(np.exp(np.min(ld + m_fit * lq)))
    else:
        m_fit = math.nan
        c_best = math.nan
    return DiophantineWitness(c_best=c_best, m_fit=m_fit,
                              table=tuple(records), rational_q=rational_q)


@dataclass(frozen=True)
class CremerIndicator:
    values: np.ndarray        # |lambda^n - 1|^{-1/n}
    running_max: np.ndarray
    infinite_at: int | None   # first n with lambda^n = 1 exactly (exact channel)

    def to_dict(self) -> dict:
        return {"running_max": float(self.running_max[-1]),
                "infinite_at": self.infinite_at,
                "n_max": int(len(self.values))}


def cremer_indicator(lam: complex, n_max: int,
                     exact_angle: Fraction | None = None) -> CremerIndicator:
    """The sequence |lambda^n - 1|^{-1/n} and its running maximum (finite
    data, no limit claim).  An exact rational angle flags the first n with
    lambda^n = 1 as an infinite indicator."""
    lam = complex(lam)
    if abs(abs(lam) - 1.0) >= 1e-10:
        raise ValueError("cremer_indicator requires |lambda| = 1 within 1e-10")
    theta = np.angle(lam) / (2 * math.pi)
    n = np.arange(1, n_max + 1, dtype=np.float64)
    dist = np.abs(2.0 * np.sin(math.pi * n * theta))
    infinite_at = None
    if exact_angle is not None:
        q = Fraction(exact_angle).denominator
        if q <= n_max:
            infinite_at = q
            dist[q - 1 :: q] = 0.0
    with np.errstate(divide="ignore"):
        vals = np.where(dist > 0.0, np.exp(-np.log(np.where(dist > 0, dist, 1.0)) / n), np.inf)
    return CremerIndicator(values=vals, running_max=np.maximum.accumulate(vals),
                           infinite_at=infinite_at)


# ---------------------------------------------------------------------------
# sigma / delta majorant diagnostics
# ---------------------------------------------------------------------------

def sigma_recursion(d: int, r_max: int) -> list:
    """Integer sequence sigma_1..sigma_rmax counting homological summands:
    sigma_1 = 1, sigma_r = d * sum over compositions of r into k >= 2 parts
    of the product of the parts' sigmas.  Exact integer arithmetic."""
    sigma = [0] * (r_max + 1)
    sigma[1] = 1
    for r in range(2, r_max + 1):
        sigma[r] = d * _compositions_sum(sigma, r)
    return sigma[1:]


def _compositions_sum(sigma: list, r: int) -> int:
    """sum over k >= 2 and compositions r_1+..+r_k = r of prod sigma_{r_i}."""
    # P[n] = sum over k >= 1 parts; computed as a geometric-style DP
    P = [0] * (r + 1)
    P[0] = 1
    for n in range(1, r + 1):
        P[n] = sum(sigma[i] * P[n - i] for i in range(1, n + 1))
    # P[r] counts k >= 1; subtract the single-part term sigma_r (unknown, = 0 here)
    return P[r] - sigma[r]


@dataclass(frozen=True)
class DeltaWitnessNode:
    alpha: tuple
    eps: float
    j_min: int                     # 1-based minimizing component
    children: tuple = ()

    def flatten(self) -> list:
        """Root-first list of (alpha, eps, j_min) over all order >= 2 nodes."""
        out = [(self.alpha, self.eps, self.j_min)]
        for c in self.children:
            out.extend(c.flatten())
        return out


@dataclass(frozen=True)
class SigmaDeltaReport:
    sigma: tuple
    delta_log_sup: float
    sup_alpha: tuple
    witness: DeltaWitnessNode
    scale_factor: float

    def to_dict(self) -> dict:
        return {"sigma": list(self.sigma),
                "delta_log_sup": self.delta_log_sup,
                "sup_alpha": list(self.sup_alpha),
                "witness_chain": [
                    {"alpha": list(a), "eps": e, "j": j}
                    for a, e, j in self.witness.flatten()],
                "scale_factor": self.scale_factor}


def sigma_delta_diagnostics(F: mvps.TruncatedGerm, N: int) -> SigmaDeltaReport:
    """sigma_r by recursion and the small-divisor majorant
    log delta_alpha = -log eps_alpha + max over decompositions, in log space,
    with the maximizing decomposition tree for the sup attained.

    Requires a diagonal linear part; raises ZeroDivisor if some eps_alpha
    vanishes among the scanned indices.
    """
    d = F.dim
    if N < 2 or N > F.trunc:
        raise ValueError(f"need 2 <= N <= trunc, got N={N}")
    L = mvps.linear_part(F)
    if np.max(np.abs(L - np.diag(np.diag(L)))) > 1e-12:
        raise ValueError("sigma_delta_diagnostics requires a diagonal linear part")
    lam = MultiplierTuple(values=tuple(np.diag(L)), exact_angles=F.exact_angles)

    # scaling factor making ||f_alpha||_1 <= 1 after z -> s z
    s = 1.0
    for alpha, _j in F.support():
        n = sum(alpha)
        if n < 2:
            continue
        norm1 = sum(abs(F.components[i][alpha]) for i in range(d))
        if norm1 > 1.0:
            s = min(s, norm1 ** (-1.0 / (n - 1)))

    alphas, index, _ = mvps._monomials(d, N)
    eps = {}
    jmin = {}
    for alpha in alphas:
        if sum(alpha) < 2:
            continue
        vals = [abs(lam.power(alpha) - lam.values[j]) for j in range(d)]
        j = int(np.argmin(vals))
        if vals[j] == 0.0:
            raise ZeroDivisor(f"eps vanished at {alpha}", alpha=list(alpha), j=j + 1)
        eps[alpha] = vals[j]
        jmin[alpha] = j + 1

    # log-space recursion; T[alpha] = best over >=1-part decompositions
    logdelta = {}
    T = {}
    delta_split = {}   # alpha -> (beta, gamma) maximizing binary split
    T_choice = {}      # alpha -> None (take delta) or (beta, gamma)
    for alpha in alphas:
        n = sum(alpha)
        if n == 1:
            logdelta[alpha] = 0.0
            T[alpha] = 0.0
            T_choice[alpha] = None
            continue
        best = -math.inf
        bsplit = None
        for beta in alphas:
            if sum(beta) >= n or not all(b <= a for b, a in zip(beta, alpha)):
                continue
            gamma = tuple(a - b for a, b in zip(alpha, beta))
            if sum(gamma) < 1:
                continue
            cand = logdelta[beta] + T[gamma]
            if cand > best:
                best = cand
                bsplit = (beta, gamma)
        logdelta[alpha] = -math.log(eps[alpha]) + best
        delta_split[alpha] = bsplit
        if logdelta[alpha] >= best:
            T[alpha] = logdelta[alpha]
            T_choice[alpha] = None
        else:
            T[alpha] = best
            T_choice[alpha] = bsplit

    sup_alpha = max((a for a in alphas if sum(a) >= 2),
                    key=lambda a: logdelta[a] / sum(a))
    delta_log_sup = logdelta[sup_alpha] / sum(sup_alpha)

    def build_delta(alpha) -> DeltaWitnessNode:
        parts = _delta_parts(alpha, delta_split, T_choice)
        children = tuple(build_delta(p) for p in parts if sum(p) >= 2)
        return DeltaWitnessNode(alpha=alpha, eps=eps[alpha], j_min=jmin[alpha],
                                children=children)

    sigma = sigma_recursion(d, N)
    return SigmaDeltaReport(sigma=tuple(sigma), delta_log_sup=delta_log_sup,
                            sup_alpha=sup_alpha, witness=build_delta(sup_alpha),
                            scale_factor=s)


def _delta_parts(alpha, delta_split, T_choice) -> list:
    """Parts of the maximizing k-part decomposition of delta_alpha."""
    beta, gamma = delta_split[alpha]
    parts = [beta]
    g = gamma
    while True:
        choice = T_choice[g]
        if choice is None:
            parts.append(g)
            break
        b, g2 = choice
        parts.append(b)
        g = g2
    return parts


def theta_siegel(lam: MultiplierTuple) -> float:
    """theta from the Siegel-separation normalization: n theta = min(|lambda_i|, 1)
    with n the smallest integer satisfying n - 1 >= 2 min |lambda_i|."""
    mmin = min(abs(v) for v in lam.values)
    n = max(1, math.ceil(2 * mmin + 1))
    return min(mmin, 1.0) / n
