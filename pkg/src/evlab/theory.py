"""Closed-form extremal indices and cluster-size laws, exact annulus
decompositions of shrinking balls, and the finite-n block bound.

Everything is computed with ``Fraction`` when the inputs are rational.

Notation for non-simple points: each side s of zeta carries the mass
fraction alpha_s of a small ball, and, if the sided orbit returns, the
contraction factor a_s = 1/|Df^{p_s}| of that return and the side L(s) on
which it lands. Measured in units of mu(U), the set of points that return
kappa times has mass u_kappa; then theta = u_0 - u_1 and
pi(kappa) = (q_{kappa-1} - q_kappa)/q_0 with q_kappa = u_kappa - u_{kappa+1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .extremes import _records, annulus_events, cluster_sizes
from .intervals import IntervalSet, ball, preimage_iter
from .maps import (DOUBLY_RETURNING, MINUS, NONSIMPLE_APERIODIC, PLUS, SIMPLE_PERIODIC, SINGLY_RETURNING,
                   PiecewiseMap, PointClassification, as_rational)
from .stochastic import ThresholdSchedule

Number = object


def _frac(v):
    return v if isinstance(v, Fraction) else (Fraction(v) if isinstance(v, int) else v)


# ---------------------------------------------------------------------------
# periodic points
# ---------------------------------------------------------------------------


def ei_periodic_1d(deriv_product) -> Number:
    """theta = 1 - 1/|Df^p(zeta)| at a periodic point of a 1D expanding map."""
    d = _frac(deriv_product)
    if not d > 1:
        raise ValueError("|Df^p(zeta)| must exceed 1")
    return 1 - 1 / d


def ei_multidim_periodic(jacobian_det) -> Number:
    """theta = 1 - 1/|det Df^p(zeta)| for an expanding map of the torus."""
    d = _frac(jacobian_det)
    if not d > 1:
        raise ValueError("|det Df^p(zeta)| must exceed 1 (volume expanding)")
    return 1 - 1 / d


def geometric_multiplicity(theta) -> "MultiplicityLaw":
    """pi(kappa) = theta (1 - theta)^(kappa - 1), kappa >= 1."""
    theta = _frac(theta)
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    return MultiplicityLaw(SIMPLE, theta, {}, None, float(1 - theta))


# ---------------------------------------------------------------------------
# non-simple points
# ---------------------------------------------------------------------------

SIMPLE = "simple-periodic"
APERIODIC = "aperiodic"
RETURNING = "returning-periodic"
EVENTUAL = "eventually-aperiodic"
NO_SWITCH = "doubly-no-switch"
ONE_SWITCH = "doubly-one-switch"
TWO_SWITCH = "doubly-two-switch"


@dataclass(frozen=True)
class NonSimpleData:
    """Side data of a non-simple point. ``landing`` maps each returning side
    to the side it comes back on; a side without return has a = None."""

    a_plus: Optional[Number]
    a_minus: Optional[Number]
    alpha_plus: Number
    alpha_minus: Number
    landing: dict = field(default_factory=dict)
    classification: Optional[PointClassification] = None

    def __post_init__(self):
        for name in ("a_plus", "a_minus", "alpha_plus", "alpha_minus"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _frac(v))
        if self.alpha_plus + self.alpha_minus != 1 and abs(float(self.alpha_plus + self.alpha_minus) - 1) > 1e-12:
            raise ValueError("alpha_plus + alpha_minus must equal 1")
        for name in ("alpha_plus", "alpha_minus"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        for side, a in ((PLUS, self.a_plus), (MINUS, self.a_minus)):
            if a is not None:
                if not 0 < a < 1:
                    raise ValueError("return factors must lie in (0, 1)")
                if side not in self.landing:
                    raise ValueError(f"returning side {side} needs a landing side")
            elif side in self.landing:
                raise ValueError(f"side {side} has a landing side but no return factor")

    def a(self, side):
        return self.a_plus if side == PLUS else self.a_minus

    def alpha(self, side):
        return self.alpha_plus if side == PLUS else self.alpha_minus

    @property
    def returning(self) -> tuple:
        return tuple(s for s in (PLUS, MINUS) if self.a(s) is not None)

    @property
    def case(self) -> str:
        ret = self.returning
        if not ret:
            return APERIODIC
        if len(ret) == 1:
            s = ret[0]
            return RETURNING if self.landing[s] == s else EVENTUAL
        switches = sum(1 for s in ret if self.landing[s] != s)
        return (NO_SWITCH, ONE_SWITCH, TWO_SWITCH)[switches]


def nonsimple_data(cls: PointClassification, alpha_plus=Fraction(1, 2), alpha_minus=None) -> NonSimpleData:
    """Side data from an exact classification. alpha defaults to 1/2 (the
    invariant density is continuous at zeta, as for Lebesgue)."""
    if cls.simple:
        raise ValueError("point is simple")
    alpha_plus = _frac(alpha_plus)
    alpha_minus = 1 - alpha_plus if alpha_minus is None else _frac(alpha_minus)
    a, landing = {PLUS: None, MINUS: None}, {}
    for r in cls.sided:
        if r.period is not None:
            a[r.side] = r.factor
            landing[r.side] = r.landing
    return NonSimpleData(a[PLUS], a[MINUS], alpha_plus, alpha_minus, landing, cls)


@dataclass(frozen=True)
class SideMasses:
    alpha_plus: float
    alpha_minus: float
    se: float
    count: int                   # sample points inside the ball


def estimate_side_masses(points, zeta, radius: float, topology: str = "circle") -> SideMasses:
    """alpha_hat = mu_hat(U^+)/mu_hat(U) from points sampled from the invariant
    measure; zeta itself counts on the + side (right-branch convention)."""
    x = np.asarray(points, dtype=float)
    d = x - float(zeta)
    if topology == "circle":
        d = (d + 0.5) % 1.0 - 0.5
    inside = np.abs(d) < radius
    m = int(inside.sum())
    if m == 0:
        raise ValueError("no sample points inside the ball")
    ap = float(np.count_nonzero(d[inside] >= 0)) / m
    return SideMasses(ap, 1.0 - ap, math.sqrt(ap * (1 - ap) / m), m)


def ei_nonsimple(data: NonSimpleData) -> Number:
    """theta = 1 - sum over returning sides s of alpha_{L(s)} a_s.

    This covers all cases: a periodic sided return (1 - alpha_s a_s), an
    eventually aperiodic return (1 - alpha_{-s} a_s), two returns without
    switch (1 - alpha+ a+ - alpha- a-), one switch landing on L
    (1 - alpha_L (a+ + a-)) and two switches (1 - alpha- a+ - alpha+ a-).
    """
    if data.classification is not None:
        cls = data.classification
        expected = {NONSIMPLE_APERIODIC: 0, SINGLY_RETURNING: 1, DOUBLY_RETURNING: 2}.get(cls.kind)
        if expected is None or expected != len(data.returning):
            raise ValueError("side data inconsistent with the classification")
    theta = 1 - sum((data.alpha(data.landing[s]) * data.a(s) for s in data.returning), Fraction(0))
    if not 0 < theta <= 1:
        raise ValueError(f"closed form gives theta = {theta}, outside (0, 1]: the side masses "
                         "violate the nesting the formula assumes; use chain_measures")
    return theta


def _law_term(case: str, prm: dict, k: int):
    """pi(k) for the closed-form laws; ``prm`` holds theta and side data."""
    th = prm["theta"]
    if case == APERIODIC:
        return th ** 0 if k == 1 else th * 0
    if case == SIMPLE:
        return th * (1 - th) ** (k - 1)
    if case == RETURNING:
        a, al = prm["a"], prm["alpha"]
        return (th - (1 - th) * (1 - a)) / th if k == 1 else al * (1 - a) ** 2 * a ** (k - 1) / th
    if case == EVENTUAL:
        return (2 * th - 1) / th if k == 1 else (1 - th) / th
    if case == NO_SWITCH:
        ap, am, lp, lm = prm["a_plus"], prm["a_minus"], prm["alpha_plus"], prm["alpha_minus"]
        if k == 1:
            return (2 * th - 1 + lm * am ** 2 + lp * ap ** 2) / th
        return (lm * (1 - am) ** 2 * am ** (k - 1) + lp * (1 - ap) ** 2 * ap ** (k - 1)) / th
    if case == ONE_SWITCH:
        a = prm["a"]
        return (2 * th - 1 + a * (1 - th)) / th if k == 1 else (1 - th) * a ** (k - 2) * (1 - a) ** 2 / th
    P = prm["P"]
    if k == 1:
        return (1 - 2 * (1 - th) + P) / th
    j = k // 2
    if k % 2 == 0:
        return P ** (j - 1) * ((1 - th) * (1 + P) - 2 * P) / th
    return P ** j * (1 - 2 * (1 - th) + P) / th


@dataclass(frozen=True)
class MultiplicityLaw:
    """Cluster-size pmf pi(kappa), kappa >= 1, of one of the closed-form cases.

    Calls return exact values for rational parameters; ``array`` evaluates
    the same formulas in floating point.
    """

    case: str
    theta: Number
    params: dict = field(default_factory=dict, repr=False)
    support_max: Optional[int] = None      # finite support bound
    decay: float = 0.0                     # geometric decay rate of the tail

    def __call__(self, kappa: int):
        if kappa < 1:
            raise ValueError("cluster sizes start at 1")
        if self.support_max is not None and kappa > self.support_max:
            return self.theta * 0
        return _law_term(self.case, dict(self.params, theta=self.theta), kappa)

    def cutoff(self, tol: float = 1e-18) -> int:
        if self.support_max is not None:
            return self.support_max
        if self.decay <= 0:
            return 2
        return max(2, int(math.ceil(math.log(tol) / math.log(self.decay))) + 4)

    def array(self, kmax: Optional[int] = None) -> np.ndarray:
        kmax = self.cutoff() if kmax is None else kmax
        prm = {key: float(v) for key, v in self.params.items()}
        prm["theta"] = float(self.theta)
        top = kmax if self.support_max is None else min(kmax, self.support_max)
        out = np.zeros(kmax)
        out[:top] = [_law_term(self.case, prm, k) for k in range(1, top + 1)]
        return out

    def total(self) -> float:
        return float(math.fsum(self.array()))

    def mean(self) -> float:
        arr = self.array()
        return float(math.fsum(arr * np.arange(1, arr.size + 1)))


def multiplicity_nonsimple(data: NonSimpleData, theta=None) -> MultiplicityLaw:
    """Cluster-size law at a non-simple point (closed forms)."""
    th = ei_nonsimple(data)
    if theta is not None and abs(float(_frac(theta)) - float(th)) > 1e-12:
        raise ValueError("theta inconsistent with the side data")
    case = data.case
    if case == APERIODIC:
        law = MultiplicityLaw(case, th, {}, 1)
    elif case == RETURNING:
        s = data.returning[0]
        law = MultiplicityLaw(case, th, {"a": data.a(s), "alpha": data.alpha(s)}, None, float(data.a(s)))
    elif case == EVENTUAL:
        law = MultiplicityLaw(case, th, {}, 2)
    elif case == NO_SWITCH:
        prm = {"a_plus": data.a_plus, "a_minus": data.a_minus,
               "alpha_plus": data.alpha_plus, "alpha_minus": data.alpha_minus}
        law = MultiplicityLaw(case, th, prm, None, float(max(data.a_plus, data.a_minus)))
    elif case == ONE_SWITCH:
        loop = [s for s in data.returning if data.landing[s] == s][0]
        law = MultiplicityLaw(case, th, {"a": data.a(loop)}, None, float(data.a(loop)))
    else:
        P = data.a_plus * data.a_minus
        law = MultiplicityLaw(case, th, {"P": P}, None, float(P) ** 0.5)
    total = law.total()
    if abs(total - 1) > 1e-12:
        raise ArithmeticError(f"multiplicity pmf sums to {total!r}")
    return law


@dataclass(frozen=True)
class ChainMeasures:
    """u_kappa (in units of mu(U)) for the sided return chain, computed with
    the exact nesting constraints m_s^(k) = min(alpha_s, a_s m_{L(s)}^(k-1))."""

    u: tuple
    complete: bool                       # True when u reaches 0

    @property
    def theta(self):
        return self.u[0] - self.u[1]

    def pmf(self) -> list:
        q = [self.u[k] - self.u[k + 1] for k in range(len(self.u) - 1)]
        return [(q[k - 1] - (q[k] if k < len(q) else 0)) / q[0] for k in range(1, len(q) + 1)]


def chain_measures(data: NonSimpleData, kmax: int = 200) -> ChainMeasures:
    m = {PLUS: data.alpha_plus, MINUS: data.alpha_minus}
    u = [m[PLUS] + m[MINUS]]
    for _ in range(kmax):
        m = {s: (min(data.alpha(s), data.a(s) * m[data.landing[s]]) if data.a(s) is not None else 0 * m[s])
             for s in (PLUS, MINUS)}
        u.append(m[PLUS] + m[MINUS])
        if u[-1] == 0:
            return ChainMeasures(tuple(u), True)
    return ChainMeasures(tuple(u), False)


def regime_ok(data: NonSimpleData) -> bool:
    """Whether the closed forms apply: every one-step constraint binds on the
    landing side, a_s alpha_{L(s)} <= alpha_s, and no landing side receives
    more than its own mass, sum_{s: L(s) = t} a_s <= 1 (invariance)."""
    nested = all(data.a(s) * data.alpha(data.landing[s]) <= data.alpha(s) for s in data.returning)
    balanced = all(sum((data.a(s) for s in data.returning if data.landing[s] == t), Fraction(0)) <= 1
                   for t in (PLUS, MINUS))
    return nested and balanced


# ---------------------------------------------------------------------------
# annulus decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnulusFamily:
    U: IntervalSet
    levels: tuple              # U^(0), U^(1), ...
    annuli: tuple              # Q^0, Q^1, ...
    remainder: IntervalSet     # U^(K) when the family was truncated
    complete: bool

    @property
    def Q_p(self) -> IntervalSet:
        return self.annuli[0]

    @property
    def mu_U(self) -> Fraction:
        return self.U.measure()

    @property
    def mu_annuli(self) -> list:
        return [q.measure() for q in self.annuli]

    @property
    def mu_remainder(self) -> Fraction:
        return self.remainder.measure()


def side_split(fmap: PiecewiseMap, cls: PointClassification, U: IntervalSet) -> dict:
    """U^s = U intersected with f^{-ell}(Y_s), Y_s the branch interval on side s of f^ell(zeta)."""
    z = cls.zeta
    for _ in range(int(cls.ell)):
        z, _ = fmap.step(z)
    out = {}
    for side in (PLUS, MINUS):
        i = fmap.side_branch(z, side)
        br = fmap.branches[i]
        out[side] = U.intersect(preimage_iter(fmap, IntervalSet(((br.a, br.b),)), int(cls.ell)))
    return out


def annulus_family(fmap: PiecewiseMap, zeta, p=None, u=None, *, radius=None,
                   classification: Optional[PointClassification] = None, kappa_max: int = 64) -> AnnulusFamily:
    """Exact U^(kappa) and Q^kappa for U = B_r(zeta), r = -u.

    Simple points use U^(k) = f^{-p}(U^(k-1)) & U. Non-simple points (pass
    ``classification``) use U^(k) = union over returning sides s of
    U^s & f^{-p_s}(U^(k-1)).
    """
    if not fmap.exact_affine:
        raise ValueError("annulus family needs an exact-affine map")
    r = as_rational(radius if radius is not None else -as_rational(u))
    if not r > 0:
        raise ValueError("need a positive radius (u < 0)")
    z = as_rational(zeta)
    U = ball(z, r, fmap.topology)
    if classification is not None and not classification.simple:
        parts = side_split(fmap, classification, U)
        rules = [(parts[w.side], w.period) for w in classification.sided if w.period is not None]
    else:
        if p is None:
            if classification is None or classification.period is None:
                raise ValueError("period p required")
            p = classification.period
        rules = [(U, int(p))]
    levels = [U]
    cur = U
    for _ in range(kappa_max):
        nxt = IntervalSet()
        for part, per in rules:
            nxt = nxt.union(part.intersect(preimage_iter(fmap, cur, per)))
        levels.append(nxt)
        cur = nxt
        if nxt.is_empty:
            break
    annuli = tuple(levels[k].difference(levels[k + 1]) for k in range(len(levels) - 1))
    complete = levels[-1].is_empty
    return AnnulusFamily(U, tuple(levels), annuli, levels[-1], complete)


def ei_from_annulus(muQ, muU):
    if muU == 0:
        raise ZeroDivisionError("mu(U) = 0")
    return _frac(muQ) / _frac(muU) if isinstance(muQ, (Fraction, int)) else muQ / muU


def multiplicity_from_annuli(muQ: Sequence, complete: bool = False) -> list:
    """pi(kappa) = (mu(Q^{kappa-1}) - mu(Q^kappa)) / mu(Q^0).

    With ``complete`` the annuli after the list are empty, giving one more
    term; otherwise len(muQ) - 1 terms are returned.
    """
    q = list(muQ)
    if not q or q[0] == 0:
        raise ZeroDivisionError("mu(Q^0) = 0")
    if complete:
        q.append(0 * q[0])
    return [(q[k - 1] - q[k]) / q[0] for k in range(1, len(q))]


# ---------------------------------------------------------------------------
# finite-n block bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockBound:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    kappa: int
    s: int

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 3 * math.hypot(self.lhs_se, self.rhs_se)


def _chain_lengths(times: np.ndarray, p: int) -> np.ndarray:
    """For each exceedance i, the largest m with i + l p exceedances for l <= m."""
    members = set(times.tolist())
    out = np.zeros(times.size, dtype=np.int64)
    for idx in range(times.size - 1, -1, -1):
        i = int(times[idx])
        m = 0
        while i + (m + 1) * p in members:
            m += 1
        out[idx] = m
    return out


def block_bound_residual(samples, sched: ThresholdSchedule, p: int, s: int, kappa: int,
                         const: float = 1.0) -> BlockBound:
    """Both sides of the block bound relating P(N^{s+1} = kappa) to the annuli.

    kappa > 0: |P(N = k) - s (P(Q^{k-1}) - P(Q^k))| <= 4 s S + 2 C P(X_0 > u)
    kappa = 0: |P(N = 0) - (1 - s P(Q^0))|           <= 2 s S + C P(X_0 > u)
    with S = sum_{j=p+1}^{s} P(Q^0 & {X_j > u}) and N the number of
    exceedances among X_0..X_s. ``const`` is the unspecified constant C.
    """
    n, times = _records(samples)
    T = len(times)
    if s < 0 or kappa < 0 or p < 1:
        raise ValueError("need s >= 0, kappa >= 0, p >= 1")
    block = s + 1
    nblocks = n // block
    if nblocks < 1:
        raise ValueError("block longer than the series")

    hist = np.zeros(max(kappa, 1) + 2)
    q_counts = np.zeros(kappa + 2)
    cross = np.zeros(max(s, 1) + 1)
    total_exc = 0
    for tt in times:
        total_exc += tt.size
        idx = tt[tt < nblocks * block] // block
        per_block = np.bincount(idx, minlength=nblocks)
        hist[0] += np.count_nonzero(per_block == 0)
        for k in range(1, hist.size):
            hist[k] += np.count_nonzero(per_block == k)
        if tt.size:
            chains = _chain_lengths(tt, p)
            for k in range(kappa + 2):
                ok = (chains == k) & (tt + (k + 1) * p < n)
                q_counts[k] += np.count_nonzero(ok)
            ann = annulus_events(tt, n, p)
            if ann.size and s > p:
                d = tt[None, :] - ann[:, None]
                d = d[(d > p) & (d <= s)]
                np.add.at(cross, d, 1)
    B = T * nblocks
    P_N = hist[kappa] / B
    PQ = [q_counts[k] / (T * (n - (k + 1) * p)) for k in range(kappa + 2)]
    P_exc = total_exc / (T * n)
    S = sum(cross[j] / (T * (n - j)) for j in range(p + 1, s + 1))
    se_N = math.sqrt(P_N * (1 - P_N) / B)
    se_Q = [math.sqrt(max(q, 0) / (T * n)) for q in PQ]
    if kappa > 0:
        lhs = abs(P_N - s * (PQ[kappa - 1] - PQ[kappa]))
        lhs_se = math.sqrt(se_N ** 2 + (s * se_Q[kappa - 1]) ** 2 + (s * se_Q[kappa]) ** 2)
        rhs = 4 * s * S + 2 * const * P_exc
        rhs_se = 4 * s * math.sqrt(S / (T * n)) + 2 * const * math.sqrt(P_exc / (T * n))
    else:
        lhs = abs(P_N - (1 - s * PQ[0]))
        lhs_se = math.sqrt(se_N ** 2 + (s * se_Q[0]) ** 2)
        rhs = 2 * s * S + const * P_exc
        rhs_se = 2 * s * math.sqrt(S / (T * n)) + const * math.sqrt(P_exc / (T * n))
    return BlockBound(lhs, lhs_se, rhs, rhs_se, kappa, s)


def prediction_record(value) -> dict:
    """Exact and decimal renderings of a prediction."""
    if isinstance(value, Fraction):
        return {"exact": str(value), "decimal": float(value)}
    return {"exact": None, "decimal": float(value)}
