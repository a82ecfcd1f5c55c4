"""Deterministic and randomly perturbed dynamics.

Piecewise maps of [0, 1) (circle or interval topology), linear expanding
torus maps, additive noise models, orbit generation and exact classification
of target points with respect to the discontinuity set.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np

Number = Union[Fraction, float, int]

PLAIN, PLUS, MINUS = "plain", "plus", "minus"
_SIGN = {PLUS: 1, MINUS: -1}
_SIDE = {1: PLUS, -1: MINUS}


def as_rational(v) -> Fraction:
    """Parse ints, Fractions, "p/q" strings and decimal strings exactly."""
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, (float, np.floating)):
        return Fraction(float(v))
    raise TypeError(f"cannot read {v!r} as a rational")


def _is_exact(v) -> bool:
    return isinstance(v, (Fraction, int)) and not isinstance(v, bool)


# ---------------------------------------------------------------------------
# piecewise maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Branch:
    """One branch f_i on [a, b). Affine when slope/intercept are given."""

    a: Number
    b: Number
    slope: Optional[Number] = None
    intercept: Optional[Number] = None
    func: Optional[Callable] = field(default=None, compare=False)
    deriv: Optional[Callable] = field(default=None, compare=False)

    @property
    def affine(self) -> bool:
        return self.slope is not None

    def value(self, x):
        if self.affine:
            return self.slope * x + self.intercept
        return self.func(x)

    def derivative(self, x=None):
        if self.affine:
            return self.slope
        return self.deriv(x)


@dataclass(frozen=True)
class PiecewiseMap:
    """Piecewise monotone expanding map of [0, 1).

    ``branches`` must partition [0, 1) in order. For affine branches the
    expansion bounds are computed from the slopes; for general branches they
    must be supplied.
    """

    branches: tuple
    topology: str = "circle"
    beta: Optional[float] = None
    eta: Optional[float] = None

    def __post_init__(self):
        brs = tuple(self.branches)
        object.__setattr__(self, "branches", brs)
        if self.topology not in ("circle", "interval"):
            raise ValueError(f"unknown topology {self.topology!r}")
        if not brs:
            raise ValueError("map needs at least one branch")
        if brs[0].a != 0 or brs[-1].b != 1:
            raise ValueError("branches must cover [0, 1)")
        for left, right in zip(brs, brs[1:]):
            if left.b != right.a:
                raise ValueError("branch intervals must be contiguous")
        for br in brs:
            if not br.b > br.a:
                raise ValueError("empty branch interval")
        if all(br.affine for br in brs):
            slopes = [abs(float(br.slope)) for br in brs]
            if self.beta is None:
                object.__setattr__(self, "beta", min(slopes))
            if self.eta is None:
                object.__setattr__(self, "eta", max(slopes))
        elif self.beta is None or self.eta is None:
            raise ValueError("non-affine maps need explicit beta and eta")
        if not self.beta > 1:
            raise ValueError(f"map is not expanding (beta = {self.beta})")
        if self.eta < self.beta:
            raise ValueError("eta must be >= beta")

    # -- basic structure ---------------------------------------------------
    @property
    def exact_affine(self) -> bool:
        return all(
            br.affine and all(_is_exact(v) for v in (br.a, br.b, br.slope, br.intercept))
            for br in self.branches
        )

    @property
    def dim(self) -> int:
        return 1

    @property
    def starts(self) -> tuple:
        return tuple(br.a for br in self.branches)

    def branch_index(self, x) -> int:
        return bisect.bisect_right(self.starts, x) - 1

    def reduce(self, y):
        if self.topology == "circle":
            y = y % 1
            if not isinstance(y, Fraction) and y >= 1.0:
                y = 0.0 * y
            return y
        if y < 0 or y > 1:
            raise ValueError(f"image {y} leaves [0, 1]")
        return y

    def _check_domain(self, x):
        upper_ok = x < 1 or (self.topology == "interval" and x == 1)
        if not (x >= 0 and upper_ok):
            raise ValueError(f"point {x} outside the phase space")

    def step(self, x):
        self._check_domain(x)
        i = min(self.branch_index(x), len(self.branches) - 1)
        return self.reduce(self.branches[i].value(x)), i

    # -- boundary structure ------------------------------------------------
    def boundary_points(self) -> tuple:
        """Branch boundaries inside the phase space (0 included on the circle)."""
        pts = list(self.starts[1:])
        if self.topology == "circle":
            pts.insert(0, self.starts[0])
        return tuple(pts)

    def side_branch(self, x, side: str) -> int:
        """Branch used to evaluate the closure at boundary ``x`` from ``side``."""
        if side == PLUS:
            return self.branch_index(x)
        i = bisect.bisect_left(self.starts, x) - 1
        if i < 0:
            if self.topology != "circle":
                raise ValueError("no left branch at 0 on the interval")
            i = len(self.branches) - 1
        return i

    def _left_point(self, x, i):
        # on the circle the left neighbour of 0 is the right end 1
        return self.branches[i].b if x == 0 and i == len(self.branches) - 1 else x

    def closure(self, x, side: str):
        """One-sided limit of f at x, reduced."""
        i = self.side_branch(x, side)
        xx = self._left_point(x, i) if side == MINUS else x
        return self.reduce(self.branches[i].value(xx)), i

    def is_boundary(self, x) -> bool:
        return x in self.boundary_points()

    def is_discontinuity(self, x) -> bool:
        if not self.is_boundary(x):
            return False
        left, _ = self.closure(x, MINUS)
        right, _ = self.closure(x, PLUS)
        if self.topology == "circle":
            return (left - right) % 1 != 0
        return left != right

    def discontinuities(self) -> tuple:
        return tuple(x for x in self.boundary_points() if self.is_discontinuity(x))

    def preserves_lebesgue(self) -> bool:
        """Exact check that sum over preimages of 1/|slope| equals 1 everywhere."""
        if not self.exact_affine:
            return False
        cuts = {Fraction(0), Fraction(1)}
        images = []
        for br in self.branches:
            y0, y1 = br.value(br.a), br.value(br.b)
            lo, hi = min(y0, y1), max(y0, y1)
            images.append((lo, hi, Fraction(1) / abs(br.slope)))
            if self.topology == "circle":
                cuts.update({lo % 1, hi % 1})
            else:
                cuts.update({lo, hi})
        cuts = sorted(c for c in cuts if 0 <= c <= 1)
        for c0, c1 in zip(cuts, cuts[1:]):
            mid = (c0 + c1) / 2
            total = Fraction(0)
            for lo, hi, w in images:
                if self.topology == "circle":
                    first = math.ceil(lo - mid)
                    total += w * sum(1 for m in range(first, math.floor(hi - mid) + 1) if lo <= mid + m < hi)
                elif lo <= mid < hi:
                    total += w
            if total != 1:
                return False
        return True


def affine_map(spec: Sequence[tuple], topology: str = "circle") -> PiecewiseMap:
    """Build an exact affine map from ``(a, b, slope, intercept)`` tuples."""
    brs = tuple(Branch(*(as_rational(v) for v in item)) for item in spec)
    return PiecewiseMap(brs, topology)


def doubling() -> PiecewiseMap:
    return affine_map([(0, "1/2", 2, 0), ("1/2", 1, 2, -1)])


def times_m(m: int) -> PiecewiseMap:
    """x -> m x mod 1."""
    return affine_map([(Fraction(i, m), Fraction(i + 1, m), m, -i) for i in range(m)])


# ---------------------------------------------------------------------------
# torus maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TorusLinearMap:
    """x -> A x mod 1 on the d-torus, A an invertible integer matrix.

    Construction accepts any such matrix so that plain evaluation works for
    e.g. hyperbolic automorphisms; ``expanding`` reports whether the limit
    theory applies.
    """

    matrix: tuple

    def __post_init__(self):
        mat = tuple(tuple(int(v) for v in row) for row in self.matrix)
        object.__setattr__(self, "matrix", mat)
        d = len(mat)
        if d not in (1, 2) or any(len(row) != d for row in mat):
            raise ValueError("matrix must be 1x1 or 2x2")
        for row, orig in zip(mat, self.matrix):
            if any(float(v) != float(o) for v, o in zip(row, orig)):
                raise ValueError("matrix entries must be integers")
        if round(np.linalg.det(np.array(mat, dtype=float))) == 0:
            raise ValueError("matrix must be invertible")

    topology = "circle"
    exact_affine = False

    @property
    def dim(self) -> int:
        return len(self.matrix)

    @property
    def det(self) -> int:
        return abs(int(round(np.linalg.det(np.array(self.matrix, dtype=float)))))

    @property
    def expanding(self) -> bool:
        """All eigenvalue moduli exceed 1 (needed by every limit law)."""
        eig = np.abs(np.linalg.eigvals(np.array(self.matrix, dtype=float)))
        return bool(np.all(eig > 1))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.matrix, dtype=np.int64)

    def step(self, x):
        pt = tuple(x) if np.ndim(x) else (x,)
        if len(pt) != self.dim:
            raise ValueError("point has the wrong dimension")
        for v in pt:
            if not 0 <= v < 1:
                raise ValueError(f"point {x} outside the torus")
        out = []
        for row in self.matrix:
            y = sum(a * v for a, v in zip(row, pt)) % 1
            if not isinstance(y, Fraction) and y >= 1.0:
                y = 0.0
            out.append(y)
        return tuple(out), 0

    def preserves_lebesgue(self) -> bool:
        return True


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------

UNIFORM, TRIANGULAR = "uniform", "symmetric-triangular"


@dataclass(frozen=True)
class NoiseModel:
    """Additive i.i.d. noise supported on the closed ball B_eps(0).

    ``symmetric-triangular`` is the tent g(w) proportional to 1 - |w|/(2 eps),
    cut at |w| = eps so that the density stays bounded below on the ball.
    """

    epsilon: float
    kind: str = UNIFORM
    dim: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.kind not in (UNIFORM, TRIANGULAR):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.dim not in (1, 2):
            raise ValueError("noise dimension must be 1 or 2")

    @property
    def _peak(self) -> float:
        e = self.epsilon
        if self.dim == 1:
            return 1 / (2 * e) if self.kind == UNIFORM else 2 / (3 * e)
        return 1 / (math.pi * e * e) if self.kind == UNIFORM else 3 / (2 * math.pi * e * e)

    @property
    def g_hi(self) -> float:
        return self._peak

    @property
    def g_lo(self) -> float:
        return self._peak if self.kind == UNIFORM else self._peak / 2

    def density(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        rho = np.abs(w) if self.dim == 1 else np.linalg.norm(w, axis=-1)
        inside = rho <= self.epsilon
        if self.kind == UNIFORM:
            return np.where(inside, self._peak, 0.0)
        return np.where(inside, self._peak * (1 - rho / (2 * self.epsilon)), 0.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` noise vectors; the uniform stream usage matches the
        compiled kernels draw for draw."""
        e = self.epsilon
        if self.dim == 1:
            u = rng.random(size)
            if self.kind == UNIFORM:
                return e * (2 * u - 1)
            sign = np.where(u < 0.5, 1.0, -1.0)
            v = np.where(u < 0.5, 2 * u, 2 * u - 1)
            return sign * e * (2 - 2 * np.sqrt(1 - 0.75 * v))
        out = np.empty((size, 2))
        for i in range(size):
            while True:
                w1 = e * (2 * rng.random() - 1)
                w2 = e * (2 * rng.random() - 1)
                rho = math.hypot(w1, w2)
                if rho > e:
                    continue
                if self.kind == TRIANGULAR and rng.random() >= 1 - rho / (2 * e):
                    continue
                break
            out[i] = (w1, w2)
        return out

    def _segments(self):
        e = self.epsilon
        if self.kind == UNIFORM:
            return [(-e, e, 1 / (2 * e), 0.0)]
        c0, c1 = 2 / (3 * e), 1 / (3 * e * e)
        return [(-e, 0.0, c0, c1), (0.0, e, c0, -c1)]

    def mean_positive_part(self, x: float) -> float:
        """E[(x - w)^+], the second antiderivative of the 1D density."""
        if self.dim != 1:
            raise ValueError("only defined for 1D noise")
        total = 0.0
        for w0, w1, c0, c1 in self._segments():
            if x <= w0:
                continue
            hi = min(w1, x)

            def prim(w):
                return x * c0 * w + (x * c1 - c0) * w * w / 2 - c1 * w ** 3 / 3

            total += prim(hi) - prim(w0)
        return total


# ---------------------------------------------------------------------------
# point-level operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SidedPoint:
    location: Number
    side: str = PLAIN

    def __post_init__(self):
        if self.side not in (PLAIN, PLUS, MINUS):
            raise ValueError(f"unknown side {self.side!r}")


def step(fmap, x):
    """(f(x), branch index)."""
    return fmap.step(x)


def step_sided(fmap: PiecewiseMap, p: SidedPoint) -> SidedPoint:
    """Evaluate the one-sided branch extension at a boundary point."""
    if p.side == PLAIN:
        return SidedPoint(fmap.step(p.location)[0], PLAIN)
    if not fmap.is_boundary(p.location):
        raise ValueError(f"sided evaluation at non-boundary point {p.location}")
    y, i = fmap.closure(p.location, p.side)
    orient = _SIGN[p.side] * (1 if fmap.branches[i].derivative() > 0 else -1)
    side = _SIDE[orient] if fmap.is_discontinuity(y) else PLAIN
    return SidedPoint(y, side)


def random_step(fmap, noise: Optional[NoiseModel], x, omega):
    y, _ = fmap.step(x)
    if noise is not None:
        lim = noise.epsilon * (1 + 1e-12)
        if np.any(np.abs(np.asarray(omega, dtype=float)) > lim):
            raise ValueError("noise outside the support ball")
    if fmap.dim == 1:
        return fmap.reduce(y + omega)
    return tuple(_wrap(v + w) for v, w in zip(y, omega))


def _wrap(y):
    y = y % 1
    if not isinstance(y, Fraction) and y >= 1.0:
        y = 0.0
    return y


def orbit(fmap, x0, n: int) -> list:
    if n < 0:
        raise ValueError("n must be non-negative")
    out = [x0]
    x = x0
    for _ in range(n):
        x, _ = fmap.step(x)
        out.append(x)
    return out


def random_orbit(fmap, noise: NoiseModel, x0, seed, n: int):
    """Noisy orbit x0, f_w1(x0), ... and the realised noise w_1..w_n."""
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = np.random.default_rng(seed)
    omegas = noise.sample(rng, n)
    out = [x0]
    x = x0
    for j in range(n):
        w = float(omegas[j]) if fmap.dim == 1 else tuple(omegas[j])
        x = random_step(fmap, noise, x, w)
        out.append(x)
    return out, omegas


def expansion_bounds(fmap) -> tuple[float, float]:
    if isinstance(fmap, TorusLinearMap):
        sv = np.linalg.svd(np.array(fmap.matrix, dtype=float), compute_uv=False)
        return float(sv.min()), float(sv.max())
    return float(fmap.beta), float(fmap.eta)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

SIMPLE_APERIODIC = "simple-aperiodic"
SIMPLE_PERIODIC = "simple-periodic"
NONSIMPLE_APERIODIC = "nonsimple-aperiodic"
SINGLY_RETURNING = "nonsimple-singly-returning"
DOUBLY_RETURNING = "nonsimple-doubly-returning"


@dataclass(frozen=True)
class SidedReturn:
    """Return data of one sided orbit zeta^s (sides labelled at f^ell(zeta))."""

    side: str
    period: Optional[int]          # None: no return found
    landing: Optional[str]         # side on which the orbit comes back
    factor: Optional[Fraction]     # 1/|Df^p| along the sided orbit
    certified_never: bool          # orbit entered a cycle avoiding zeta
    discontinuity_hits: int        # distinct discontinuities visited


@dataclass(frozen=True)
class PointClassification:
    zeta: Fraction
    kind: str
    ell: float                     # math.inf for simple points
    return_lower_bound: float
    period: Optional[int] = None
    deriv_product: Optional[Fraction] = None
    side: Optional[str] = None
    eventually_aperiodic: bool = False
    switches: Optional[int] = None
    sided: tuple = ()
    review: bool = False

    @property
    def simple(self) -> bool:
        return self.kind.startswith("simple")

    def sided_return(self, side: str) -> SidedReturn:
        for r in self.sided:
            if r.side == side:
                return r
        raise KeyError(side)

    @property
    def periods(self) -> dict:
        return {r.side: r.period for r in self.sided}

    @property
    def factors(self) -> dict:
        return {r.side: r.factor for r in self.sided}

    def to_dict(self) -> dict:
        def fmt(v):
            if isinstance(v, Fraction):
                return str(v)
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return v

        out = {
            "zeta": str(self.zeta),
            "kind": self.kind,
            "ell": fmt(self.ell),
            "return_lower_bound": fmt(self.return_lower_bound),
            "period": self.period,
            "deriv_product": fmt(self.deriv_product),
            "side": self.side,
            "eventually_aperiodic": self.eventually_aperiodic,
            "switches": self.switches,
            "review": self.review,
        }
        out["sided"] = [
            {k: fmt(getattr(r, k)) for k in ("side", "period", "landing", "factor",
                                              "certified_never", "discontinuity_hits")}
            for r in self.sided
        ]
        return out


def _sided_walk(fmap: PiecewiseMap, zeta: Fraction, z: Fraction, side: str, ell: int,
                sigma: int, prefix: Fraction, horizon: int) -> SidedReturn:
    pos, orient = z, _SIGN[side]
    factor = Fraction(1) / prefix
    seen = set()
    discs = {z}
    t = ell
    while t < horizon:
        if fmap.is_boundary(pos):
            i = fmap.side_branch(pos, _SIDE[orient])
            xx = fmap._left_point(pos, i) if orient < 0 else pos
        else:
            i = fmap.branch_index(pos)
            xx = pos
        br = fmap.branches[i]
        pos = fmap.reduce(br.value(xx))
        orient *= 1 if br.slope > 0 else -1
        factor /= abs(br.slope)
        t += 1
        if pos == zeta:
            return SidedReturn(side, t, _SIDE[orient * sigma], factor, False, len(discs))
        if fmap.is_discontinuity(pos):
            discs.add(pos)
        state = (pos, orient)
        if state in seen:
            return SidedReturn(side, None, None, None, True, len(discs))
        seen.add(state)
    return SidedReturn(side, None, None, None, False, len(discs))


def classify(fmap: PiecewiseMap, zeta, horizon: int = 10_000) -> PointClassification:
    """Classify ``zeta`` by iterating it in exact rational arithmetic.

    Returns are detected by exact equality. A revisit of an earlier orbit
    point that is not ``zeta`` certifies that ``zeta`` never returns, in which
    case the lower bound is infinite.
    """
    if not isinstance(fmap, PiecewiseMap) or not fmap.exact_affine:
        raise ValueError("classification requires an exact-affine piecewise map")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    z0 = as_rational(zeta)
    fmap._check_domain(z0)

    x = z0
    deriv = Fraction(1)
    seen = {z0}
    ell = None
    for j in range(horizon + 1):
        if j >= 1 and x == z0:
            return PointClassification(z0, SIMPLE_PERIODIC, math.inf, j, period=j,
                                       deriv_product=abs(deriv))
        if fmap.is_discontinuity(x):
            ell = j
            break
        if j == horizon:
            return PointClassification(z0, SIMPLE_APERIODIC, math.inf, horizon)
        y, i = fmap.step(x)
        deriv *= fmap.branches[i].slope
        if y != z0 and y in seen:
            return PointClassification(z0, SIMPLE_APERIODIC, math.inf, math.inf)
        seen.add(y)
        x = y

    sigma = 1 if deriv > 0 else -1
    walks = tuple(_sided_walk(fmap, z0, x, s, ell, sigma, abs(deriv), horizon) for s in (PLUS, MINUS))
    review = any(w.discontinuity_hits > 1 for w in walks)
    returning = [w for w in walks if w.period is not None]
    if all(w.certified_never for w in walks):
        bound = math.inf
    else:
        bound = horizon
    if not returning:
        return PointClassification(z0, NONSIMPLE_APERIODIC, ell, bound, sided=walks, review=review)
    if len(returning) == 1:
        w = returning[0]
        other = [v for v in walks if v is not w][0]
        lb = math.inf if other.certified_never else horizon
        return PointClassification(z0, SINGLY_RETURNING, ell, lb, period=w.period, side=w.side,
                                   eventually_aperiodic=w.landing != w.side,
                                   deriv_product=1 / w.factor, sided=walks, review=review)
    switches = sum(1 for w in walks if w.landing != w.side)
    return PointClassification(z0, DOUBLY_RETURNING, ell, max(w.period for w in walks),
                               switches=switches, sided=walks, review=review)


# ---------------------------------------------------------------------------
# JSON catalogue
# ---------------------------------------------------------------------------


def map_from_dict(spec: dict):
    kind = spec.get("type")
    if kind == "piecewise_affine":
        items = []
        for k, br in enumerate(spec["branches"]):
            try:
                items.append((br["a"], br["b"], br["slope"], br["intercept"]))
            except KeyError as exc:
                raise ValueError(f"map.branches[{k}]: missing key {exc}") from None
        return affine_map(items, spec.get("topology", "circle"))
    if kind == "torus_linear":
        return TorusLinearMap(tuple(tuple(r) for r in spec["matrix"]))
    raise ValueError(f"map.type: unknown map type {kind!r}")


def map_to_dict(fmap) -> dict:
    if isinstance(fmap, TorusLinearMap):
        return {"type": "torus_linear", "matrix": [list(r) for r in fmap.matrix]}
    if not fmap.exact_affine:
        raise ValueError("only exact-affine maps serialize")
    return {
        "type": "piecewise_affine",
        "branches": [
            {"a": str(br.a), "b": str(br.b), "slope": str(br.slope), "intercept": str(br.intercept)}
            for br in fmap.branches
        ],
        "topology": fmap.topology,
    }


def load_map(path) -> object:
    with open(path) as fh:
        return map_from_dict(json.load(fh))


def noise_from_dict(spec: Optional[dict]) -> Optional[NoiseModel]:
    if spec is None:
        return None
    return NoiseModel(float(as_rational(spec["epsilon"])), spec.get("kind", UNIFORM), int(spec.get("dim", 1)))


def noise_to_dict(noise: Optional[NoiseModel]) -> Optional[dict]:
    if noise is None:
        return None
    return {"epsilon": noise.epsilon, "kind": noise.kind, "dim": noise.dim}


def step_array(fmap, x: np.ndarray) -> np.ndarray:
    """Vectorised float evaluation of f (rows of ``x`` are torus points)."""
    x = np.asarray(x, dtype=float)
    if isinstance(fmap, TorusLinearMap):
        if fmap.dim == 1:
            y = (fmap.matrix[0][0] * x) % 1.0
        else:
            y = (x @ np.array(fmap.matrix, dtype=float).T) % 1.0
        return np.where(y >= 1.0, 0.0, y)
    starts = np.array([float(a) for a in fmap.starts])
    idx = np.clip(np.searchsorted(starts, x, side="right") - 1, 0, len(starts) - 1)
    if all(br.affine for br in fmap.branches):
        slope = np.array([float(br.slope) for br in fmap.branches])
        icpt = np.array([float(br.intercept) for br in fmap.branches])
        y = slope[idx] * x + icpt[idx]
    else:
        y = np.array([fmap.branches[i].value(v) for i, v in zip(idx, x)], dtype=float)
    if fmap.topology == "circle":
        y = y % 1.0
        return np.where(y >= 1.0, 0.0, y)
    return y
