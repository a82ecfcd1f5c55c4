"""Observables, threshold schedules and stationary sampling of the
exceedance processes X_j = phi(f^j x) and X_j = phi(f_omega^j x)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from . import _engine
from .maps import NoiseModel, PiecewiseMap, SidedPoint, TorusLinearMap, random_step

NEG_DIST = "neg_dist"
NEG_LOG_DIST = "neg_log_dist"


def circle_distance(x, y):
    d = abs(x - y)
    return min(d, 1 - d)


# ---------------------------------------------------------------------------
# observables and measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Observable:
    """phi(x) = shape(dist(x, zeta)) with a strictly decreasing shape.

    ``NEG_DIST`` gives phi = -dist (phi(zeta) = 0); ``NEG_LOG_DIST`` gives
    phi = -log dist. Thresholds always go through the ball radius.
    """

    zeta: object
    shape: str = NEG_DIST
    topology: str = "circle"

    def __post_init__(self):
        if self.shape not in (NEG_DIST, NEG_LOG_DIST):
            raise ValueError(f"unknown observable shape {self.shape!r}")

    @property
    def center(self):
        z = self.zeta
        return z.location if isinstance(z, SidedPoint) else z

    @property
    def dim(self) -> int:
        return 2 if isinstance(self.center, (tuple, list, np.ndarray)) else 1

    def distance(self, x):
        c = self.center
        if self.dim == 2:
            return math.sqrt(sum(float(circle_distance(a, b)) ** 2 for a, b in zip(x, c)))
        if self.topology == "circle":
            return circle_distance(x, c)
        return abs(x - c)

    def level(self, r):
        """u = shape(r)."""
        if self.shape == NEG_DIST:
            return -r
        return math.inf if r == 0 else -math.log(r)

    def radius(self, u):
        """Inverse of ``level``."""
        if self.shape == NEG_DIST:
            return -u
        return 0.0 if u == math.inf else math.exp(-u)

    def __call__(self, x):
        return self.level(self.distance(x))

    def values(self, positions: np.ndarray) -> np.ndarray:
        return np.array([self(p) for p in positions]) if self.dim == 2 else \
            self._vec(np.asarray(positions, dtype=float))

    def _vec(self, xs: np.ndarray) -> np.ndarray:
        d = np.abs(xs - float(self.center))
        if self.topology == "circle":
            d = np.minimum(d, 1 - d)
        if self.shape == NEG_DIST:
            return -d
        with np.errstate(divide="ignore"):
            return -np.log(d)


LEBESGUE = "lebesgue-exact"
DENSITY_GRID = "density-grid"
EMPIRICAL = "empirical"


@dataclass(frozen=True)
class MeasureModel:
    """Ball-measure oracle for mu(B_r(zeta))."""

    kind: str = LEBESGUE
    dim: int = 1
    topology: str = "circle"
    density: Optional[np.ndarray] = field(default=None, compare=False)
    samples: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == DENSITY_GRID:
            h = np.asarray(self.density, dtype=float)
            if h.ndim != 1 or np.any(h < 0) or abs(h.sum() - 1) > 1e-9:
                raise ValueError("density-grid needs nonnegative cell masses summing to 1")
            object.__setattr__(self, "density", h)
        elif self.kind == EMPIRICAL:
            if self.samples is None or len(self.samples) == 0:
                raise ValueError("empirical model needs samples")
            object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))
        elif self.kind != LEBESGUE:
            raise ValueError(f"unknown measure kind {self.kind!r}")

    @classmethod
    def empirical_from(cls, fmap, noise=None, seed: int = 0, size: int = 10**6, burn_in=None):
        """Stationary positions, drawn directly when the measure is known."""
        cs = _engine.compile_system(fmap, noise)
        rng = np.random.default_rng(seed)
        if cs.lebesgue:
            pts = rng.random((size, cs.dim)) if cs.dim == 2 else rng.random(size)
        else:
            s = _engine.draw_start(cs, rng)
            pts = _engine.kernel_orbit(cs, s, size - 1, rng, burn=_engine.default_burn(cs, burn_in))
        return cls(EMPIRICAL, cs.dim, getattr(fmap, "topology", "circle"), samples=pts)

    def _max_radius(self, center):
        if self.dim == 2:
            return 0.5
        if self.topology == "circle":
            return 0.5
        c = float(center)
        return max(c, 1 - c)

    def ball_measure(self, center, r):
        if r <= 0:
            return 0.0
        if self.kind == LEBESGUE:
            if self.dim == 2:
                if r > 0.5:
                    raise ValueError("2D balls are only tracked up to radius 1/2")
                return math.pi * r * r
            if self.topology == "circle":
                return min(2 * r, 1)
            lo, hi = max(center - r, 0), min(center + r, 1)
            return hi - lo
        if self.kind == DENSITY_GRID:
            h = self.density
            k = h.size
            edges = np.arange(k + 1) / k
            c = float(center)
            total = 0.0
            shifts = (-1.0, 0.0, 1.0) if self.topology == "circle" else (0.0,)
            for s in shifts:
                lo, hi = c - r + s, c + r + s
                ov = np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0, None)
                total += float(np.dot(ov * k, h))
            return min(total, 1.0)
        return float(np.mean(self._sample_distances(center) < r))

    def _sample_distances(self, center) -> np.ndarray:
        pts = self.samples
        if self.dim == 2:
            d = np.abs(pts - np.asarray(center, dtype=float))
            d = np.minimum(d, 1 - d)
            return np.sqrt((d ** 2).sum(axis=1))
        d = np.abs(pts - float(center))
        return np.minimum(d, 1 - d) if self.topology == "circle" else d

    def radius_for(self, center, mass: float) -> float:
        if not mass > 0:
            raise ValueError("mass must be positive")
        if self.kind == LEBESGUE:
            if self.dim == 2:
                if mass > math.pi / 4:
                    raise ValueError("target mass exceeds the largest tracked 2D ball")
                return math.sqrt(mass / math.pi)
            if self.topology == "circle":
                if mass > 1:
                    raise ValueError("target mass exceeds total mass")
                return mass / 2
            c = float(center)
            near = min(c, 1 - c)
            if mass > 1:
                raise ValueError("target mass exceeds total mass")
            return mass / 2 if mass <= 2 * near else mass - near
        if self.kind == EMPIRICAL:
            size = len(self.samples)
            if mass < 10 / size:
                raise ValueError(f"target mass {mass:g} below the empirical resolution {10 / size:g}")
            d = self._sample_distances(center)
            return float(np.quantile(d, mass))
        rmax = self._max_radius(center)
        top = self.ball_measure(center, rmax)
        if mass > top:
            raise ValueError("target mass exceeds total mass near zeta")
        return brentq(lambda r: self.ball_measure(center, r) - mass, 0.0, rmax, xtol=1e-15, rtol=1e-14)


@dataclass(frozen=True)
class ThresholdSchedule:
    tau: float
    n: int
    u: float
    radius: float
    mass: float

    @property
    def v(self) -> float:
        """Kac scale 1/mu(U_n)."""
        return 1.0 / self.mass


def threshold_for(measure: MeasureModel, obs: Observable, tau: float, n: int) -> ThresholdSchedule:
    """Radius r_n with mu(B_{r_n}(zeta)) = tau/n and u_n = shape(r_n)."""
    if not tau > 0 or n < 1:
        raise ValueError("need tau > 0 and n >= 1")
    r = measure.radius_for(obs.center, tau / n)
    return ThresholdSchedule(float(tau), int(n), obs.level(r), float(r), float(measure.ball_measure(obs.center, r)))


def schedule_for_radius(measure: MeasureModel, obs: Observable, r: float, n: int, tau=None) -> ThresholdSchedule:
    """Schedule for an explicit ball (used for grid-snapped holes)."""
    mass = float(measure.ball_measure(obs.center, r))
    return ThresholdSchedule(float(tau if tau is not None else n * mass), int(n), obs.level(r), float(r), mass)


# ---------------------------------------------------------------------------
# samples
# ---------------------------------------------------------------------------


@dataclass
class ProcessSample:
    """One realisation X_0..X_{n-1}; ``values`` may be omitted in bulk runs."""

    n: int
    u: float
    exceedances: np.ndarray
    maximum: float
    values: Optional[Sequence] = None
    provenance: dict = field(default_factory=dict)


@dataclass
class ExceedanceBatch:
    """Exceedance times of many independent trials sharing (n, u_n)."""

    sched: ThresholdSchedule
    times: list
    maxima: np.ndarray
    starts: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.sched.n

    @property
    def trials(self) -> int:
        return len(self.times)

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(t) for t in self.times], dtype=np.int64)

    def samples(self) -> list:
        return [ProcessSample(self.n, self.sched.u, t, float(m), None, dict(self.provenance, trial=i))
                for i, (t, m) in enumerate(zip(self.times, self.maxima))]


def _sample_from_values(values, sched: ThresholdSchedule, provenance: dict) -> ProcessSample:
    exc = np.array([j for j, v in enumerate(values) if v > sched.u], dtype=np.int64)
    return ProcessSample(sched.n, sched.u, exc, max(values), list(values), provenance)


def _obs_values(obs: Observable, positions) -> list:
    if isinstance(positions, np.ndarray):
        return list(obs.values(positions))
    return [obs(p) for p in positions]


def sample_deterministic(fmap, obs: Observable, x0, sched: ThresholdSchedule) -> ProcessSample:
    """X_j = phi(f^j x0), j < n.

    Rational starts on exact-affine maps iterate exactly. Float starts on maps
    with integer slopes run on the exact grid engine (starting at the grid
    point nearest x0), other float starts in float64.
    """
    n = sched.n
    if isinstance(x0, Fraction) and getattr(fmap, "exact_affine", False):
        from .maps import orbit
        positions = orbit(fmap, x0, n - 1)
    else:
        cs = _engine.compile_system(fmap, None)
        s = _engine.draw_start(cs, None, x0)
        positions = _engine.kernel_orbit(cs, s, n - 1, np.random.default_rng(0))
    return _sample_from_values(_obs_values(obs, positions), sched,
                               {"noise": None, "x0": str(x0), "mode": "fixed"})


def sample_random(fmap, noise: NoiseModel, obs: Observable, seed, sched: ThresholdSchedule,
                  x0=None, omegas=None, burn_in=None) -> ProcessSample:
    """X_j = phi(f_omega^j x) for one noise realisation.

    With ``x0=None`` the start is stationary and drawn from the same stream
    as the noise, so ``sample_random(..., seed=[s, i])`` reproduces trial i of
    ``simulate(..., seed=s)``. An explicit ``omegas`` realisation bypasses the
    random draws (``omegas = 0`` reproduces the deterministic sample).
    """
    n = sched.n
    if omegas is not None:
        omegas = np.asarray(omegas, dtype=float)
        if len(omegas) < n - 1:
            raise ValueError("need n - 1 noise values")
        x = x0
        positions = [x]
        for j in range(n - 1):
            w = omegas[j] if fmap.dim == 1 else tuple(omegas[j])
            x = random_step(fmap, noise, x, w)
            positions.append(x)
        return _sample_from_values(_obs_values(obs, positions), sched,
                                   {"noise": noise.kind, "x0": str(x0), "mode": "given-omega"})
    cs = _engine.compile_system(fmap, noise)
    rng = np.random.default_rng(seed)
    start = "stationary" if x0 is None else x0
    s = _engine.draw_start(cs, rng, start)
    burn = _engine.default_burn(cs, burn_in) if x0 is None else 0
    positions = _engine.kernel_orbit(cs, s, n - 1, rng, burn=burn)
    return _sample_from_values(_obs_values(obs, positions), sched,
                               {"noise": noise.kind, "seed": _seed_repr(seed), "mode": str(start)})


def _seed_repr(seed):
    return list(seed) if isinstance(seed, (list, tuple)) else seed


def stationary_start(fmap, noise: Optional[NoiseModel] = None, burn_in: int = 1000, seed=0):
    """A draw from the invariant/stationary measure.

    Lebesgue-preserving systems are sampled directly; otherwise a uniform
    draw is pushed through ``burn_in`` (noisy) iterates.
    """
    cs = _engine.compile_system(fmap, noise)
    rng = np.random.default_rng(seed)
    if cs.lebesgue:
        if cs.dim == 2:
            return tuple(float(v) for v in rng.random(2))
        return float(rng.random())
    s = _engine.draw_start(cs, rng)
    return float(_engine.kernel_orbit(cs, s, 0, rng, burn=int(burn_in))[-1])


def simulate(fmap, noise: Optional[NoiseModel], obs: Observable, sched: ThresholdSchedule,
             trials: int, seed: int, start="stationary", burn_in=None, threads: int = 1) -> ExceedanceBatch:
    """Run ``trials`` independent stationary series of length n.

    Trial i uses the generator seeded by (seed, i); ``threads`` only changes
    the wall time, never the output.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cs = _engine.compile_system(fmap, noise)
    burn = _engine.default_burn(cs, burn_in) if start == "stationary" else 0
    times, dmin, x0 = _engine.run_trials(cs, sched.n, trials, seed, start, burn, obs.center,
                                         sched.radius, threads)
    maxima = np.array([obs.level(d) for d in dmin])
    prov = {"noise": None if noise is None else noise.kind, "seed": seed, "start": str(start),
            "engine": cs.mode, "center": obs.center, "start_point": start, "burn": burn}
    return ExceedanceBatch(sched, times, maxima, x0, prov)


def resolve_threads(threads=None) -> int:
    import os
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("EVLAB_THREADS")
    return max(1, int(env)) if env else 1
