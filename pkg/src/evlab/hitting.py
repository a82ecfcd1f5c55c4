"""Hitting and return time statistics, the maxima/hitting-time duality, exact
minimal return times of intervals, and short-return probabilities under
noise."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import _engine
from .intervals import IntervalSet, PieceBlowup, ball, image
from .maps import NoiseModel, TorusLinearMap, as_rational, step_array
from .stochastic import (ExceedanceBatch, MeasureModel, Observable, ProcessSample, ThresholdSchedule,
                         circle_distance)

AMBIENT, IN_TARGET = "stationary", "in_target"


@dataclass(frozen=True)
class Ball:
    center: object
    radius: float

    def mass(self, measure: Optional[MeasureModel] = None, dim: int = 1) -> float:
        if measure is None:
            measure = MeasureModel(dim=dim)
        return float(measure.ball_measure(self.center, self.radius))


@dataclass(frozen=True)
class HittingSample:
    r: Optional[int]          # None when censored
    scale: float              # 1 / mu(V)
    start_mode: str
    censored: bool


@dataclass
class HittingBatch:
    r: np.ndarray             # -1 marks censoring
    mass: float
    start_mode: str
    horizon: int

    @property
    def censored(self) -> np.ndarray:
        return self.r < 0

    @property
    def normalized(self) -> np.ndarray:
        """r * mu(V) for uncensored trials."""
        return self.r[self.r > 0] * self.mass


def default_horizon(mass: float) -> int:
    return int(math.ceil(50.0 / mass))


def _dist(fmap, x, c):
    if isinstance(x, tuple):
        return math.sqrt(sum(float(circle_distance(a, b)) ** 2 for a, b in zip(x, c)))
    if getattr(fmap, "topology", "circle") == "circle":
        return circle_distance(x, c)
    return abs(x - c)


def hitting_time(fmap, noise: Optional[NoiseModel], x0, seed, V: Ball, horizon: int,
                 measure: Optional[MeasureModel] = None) -> HittingSample:
    """First j in 1..horizon with the (noisy) orbit of x0 inside V."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    mass = V.mass(measure, fmap.dim)
    scale = 1.0 / mass if mass > 0 else math.inf
    if noise is None and isinstance(x0, Fraction) and getattr(fmap, "exact_affine", False):
        x = x0
        for j in range(1, horizon + 1):
            x, _ = fmap.step(x)
            if _dist(fmap, x, as_rational(V.center)) < V.radius:
                return HittingSample(j, scale, "fixed", False)
        return HittingSample(None, scale, "fixed", True)
    cs = _engine.compile_system(fmap, noise)
    r = _engine._hit_one(cs, np.random.default_rng(seed), x0, 0, horizon, V.center, V.radius)
    return HittingSample(None if r < 0 else int(r), scale, "fixed", r < 0)


def hitting_times(fmap, noise: Optional[NoiseModel], V: Ball, trials: int, seed: int,
                  start: str = AMBIENT, horizon: Optional[int] = None,
                  measure: Optional[MeasureModel] = None, burn_in=None, threads: int = 1) -> HittingBatch:
    """Hitting (``start='stationary'``) or return (``start='in_target'``) times.

    Return-time starts are uniform in V, i.e. the conditional stationary
    measure when that measure is Lebesgue.
    """
    cs = _engine.compile_system(fmap, noise)
    if start == IN_TARGET and not cs.lebesgue:
        raise ValueError("conditioned starts need a Lebesgue-stationary system")
    mass = V.mass(measure, fmap.dim)
    horizon = default_horizon(mass) if horizon is None else int(horizon)
    burn = _engine.default_burn(cs, burn_in) if start == AMBIENT else 0
    r = _engine.hit_trials(cs, trials, seed, start, burn, horizon, V.center, V.radius, threads)
    return HittingBatch(r, mass, start, horizon)


@dataclass(frozen=True)
class EmpiricalCDF:
    t: np.ndarray
    G: np.ndarray
    count: int
    censored_mass: float

    def se(self) -> np.ndarray:
        return np.sqrt(self.G * (1 - self.G) / self.count)


def _ecdf(batch: HittingBatch, t_grid, max_censored: float = 0.01) -> EmpiricalCDF:
    t = np.asarray(t_grid, dtype=float)
    if np.any(t < 0) or np.any(np.diff(t) < 0):
        raise ValueError("t grid must be nonnegative and increasing")
    cens = float(batch.censored.mean())
    if cens > max_censored:
        raise ValueError(f"censored mass {cens:.3%} exceeds {max_censored:.0%}")
    vals = np.sort(batch.normalized)
    G = np.searchsorted(vals, t, side="right") / batch.r.size
    return EmpiricalCDF(t, G, int(batch.r.size), cens)


def hts_cdf(batch: HittingBatch, t_grid) -> EmpiricalCDF:
    if batch.start_mode != AMBIENT:
        raise ValueError("hitting-time CDF needs ambient starts")
    return _ecdf(batch, t_grid)


def rts_cdf(batch: HittingBatch, t_grid) -> EmpiricalCDF:
    if batch.start_mode != IN_TARGET:
        raise ValueError("return-time CDF needs starts inside the target")
    return _ecdf(batch, t_grid)


def hts_from_rts(t, G_rts) -> np.ndarray:
    """G(t) = int_0^t (1 - G~(s)) ds by the trapezoidal rule."""
    t = np.asarray(t, dtype=float)
    g = np.asarray(G_rts, dtype=float)
    if t.shape != g.shape or t.size == 0:
        raise ValueError("t and G~ must have the same nonempty shape")
    if t[0] != 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t grid must start at 0 and increase")
    if np.any(np.diff(g) < 0) or g.min() < 0 or g.max() > 1:
        raise ValueError("G~ must be a nondecreasing CDF")
    return cumulative_trapezoid(1 - g, t, initial=0.0)


def kac_mean(batch: HittingBatch) -> tuple[float, float]:
    """Mean of r * mu(V) over return-time trials and its standard error."""
    if batch.censored.any():
        raise ValueError("censored trials bias the Kac mean")
    v = batch.r * batch.mass
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class DualityReport:
    agree: np.ndarray                 # per trial, among trials with X_0 <= u
    conditioned_trials: int
    unconditioned_discrepancy: float  # rate of {M_n <= u} != {r > n} over all trials

    @property
    def all_agree(self) -> bool:
        return bool(self.agree.all())


def duality_check(samples, sched: ThresholdSchedule, fmap=None, noise: Optional[NoiseModel] = None,
                  threads: int = 1) -> DualityReport:
    """Check {M_n <= u} = {r_U > n - 1} on trials with X_0 <= u.

    For an ``ExceedanceBatch`` the hitting times are recomputed by the
    hitting-time kernel on the very same orbits (same trial seeds), so both
    sides come from independent code paths. A list of samples carrying their
    values is checked by scanning the values.
    """
    n, u = sched.n, sched.u
    if isinstance(samples, ExceedanceBatch):
        if fmap is None:
            raise ValueError("batch duality needs the map")
        prov = samples.provenance
        cs = _engine.compile_system(fmap, noise)
        r = _engine.hit_trials(cs, samples.trials, prov["seed"], prov["start_point"], prov["burn"],
                               n + 1, _center_of(samples), sched.radius, threads)
        max_ok = samples.maxima <= u
        x0_exc = np.array([t.size > 0 and t[0] == 0 for t in samples.times])
    else:
        samples = list(samples)
        if any(s.values is None for s in samples):
            raise ValueError("samples need their values")
        r, max_ok, x0_exc = [], [], []
        for s in samples:
            vals = s.values
            later = [j for j in range(1, len(vals)) if vals[j] > u]
            r.append(later[0] if later else -1)
            max_ok.append(max(vals) <= u)
            x0_exc.append(vals[0] > u)
        r, max_ok, x0_exc = np.array(r), np.array(max_ok), np.array(x0_exc)
    no_hit = (r < 0) | (r > n - 1)
    cond = ~x0_exc
    agree = max_ok[cond] == no_hit[cond]
    literal = (r < 0) | (r > n)
    return DualityReport(agree, int(cond.sum()), float(np.mean(max_ok != literal)))


def _center_of(batch: ExceedanceBatch):
    c = batch.provenance.get("center")
    if c is None:
        raise ValueError("batch provenance lacks the target center")
    return c


# ---------------------------------------------------------------------------
# exact minimal return time
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FirstReturn:
    value: Optional[int]         # R(V) when found
    lower_bound: int             # certified: no return at any j <= lower_bound
    aborted: bool = False

    @property
    def found(self) -> bool:
        return self.value is not None


def first_return_min(fmap, V, horizon: int = 10_000, max_pieces: int = 10**6) -> FirstReturn:
    """min{j >= 1 : f^j(V) meets V} by exact interval propagation.

    ``V`` is an ``IntervalSet`` or a ``Ball`` with rational center/radius.
    """
    if isinstance(V, Ball):
        V = ball(as_rational(V.center), as_rational(V.radius), fmap.topology)
    if V.is_empty:
        raise ValueError("empty target")
    W = V
    for j in range(1, horizon + 1):
        try:
            W = image(fmap, W, max_pieces)
        except PieceBlowup:
            return FirstReturn(None, j - 1, aborted=True)
        if W.overlaps(V):
            return FirstReturn(j, j - 1)
    return FirstReturn(None, horizon)


# ---------------------------------------------------------------------------
# short returns under noise
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShortReturnReport:
    alpha_n: int
    p_hat: float
    se: float
    bound: float              # inf when no noise (bound not applicable)
    trials: int
    diameter: float

    @property
    def within_bound(self) -> bool:
        return self.p_hat <= self.bound + 3 * self.se


def default_alpha(n: int) -> int:
    return int(math.ceil(math.log(math.log(n)))) + 2


def short_return_bound(fmap, noise: Optional[NoiseModel], diameter: float, alpha_n: int) -> float:
    """sum_{j=1}^{alpha} g_hi * Leb(B_{2 eta^j |U|})."""
    if noise is None:
        return math.inf
    _, eta = (fmap.beta, fmap.eta) if not isinstance(fmap, TorusLinearMap) else \
        tuple(np.linalg.svd(np.array(fmap.matrix, dtype=float), compute_uv=False)[::-1])
    total = 0.0
    for j in range(1, alpha_n + 1):
        rho = 2 * eta ** j * diameter
        leb = min(2 * rho, 1.0) if fmap.dim == 1 else min(math.pi * rho * rho, 1.0)
        total += noise.g_hi * leb
    return total


def short_return_prob(fmap, noise: Optional[NoiseModel], zeta, sched: ThresholdSchedule,
                      alpha_n: Optional[int] = None, trials: int = 10**5, seed: int = 0) -> ShortReturnReport:
    """Monte Carlo over omega of {exists j <= alpha_n : f_omega^j(zeta) in B_{2 eta^j |U_n|}(zeta)}."""
    alpha_n = default_alpha(sched.n) if alpha_n is None else int(alpha_n)
    if alpha_n < 1:
        raise ValueError("alpha_n must be >= 1")
    diameter = 2 * sched.radius
    eta = fmap.eta if not isinstance(fmap, TorusLinearMap) else \
        float(np.linalg.svd(np.array(fmap.matrix, dtype=float), compute_uv=False).max())
    rng = np.random.default_rng(seed)
    dim = fmap.dim
    z = np.array(zeta, dtype=float) if dim == 2 else float(zeta)
    x = np.tile(z, (trials, 1)) if dim == 2 else np.full(trials, z)
    hit = np.zeros(trials, dtype=bool)
    for j in range(1, alpha_n + 1):
        x = step_array(fmap, x)
        if noise is not None:
            w = noise.sample(rng, trials)
            x = x + w
            if getattr(fmap, "topology", "circle") == "circle":
                x = x % 1.0
                x = np.where(x >= 1.0, 0.0, x)
            elif np.any((x < 0) | (x > 1)):
                raise ValueError("noisy orbit left [0, 1]")
        d = np.abs(x - z)
        d = np.minimum(d, 1 - d)
        if dim == 2:
            d = np.sqrt((d ** 2).sum(axis=1))
        hit |= d < 2 * eta ** j * diameter
    p = float(hit.mean())
    return ShortReturnReport(alpha_n, p, math.sqrt(p * (1 - p) / trials),
                             short_return_bound(fmap, noise, diameter, alpha_n), trials, diameter)
