"""Compiled orbit kernels used by the Monte Carlo estimators.

Maps with integer slopes (and torus maps) run on the exact grid
{k / Q : 0 <= k < Q}, where Q = L * P with L the lcm of the intercept
denominators and P a large prime. Float64 orbits of 2x mod 1 collapse onto 0
after ~53 steps; the grid orbit of 2x mod Q does not, since 2 has
multiplicative order ~2.8e15 modulo P. Other affine maps use float64.

On the grid, j steps of 2x act as x -> (2^j mod P) x mod 1. P is the first
prime above 2^53/phi, so 2^53 mod P is about 0.618 P and none of these
multipliers sits near a fraction with a small denominator; a prime just
below a power of two (2^50 - 27, say) would turn lag 50 into x -> 27x and
suppress returns at those lags.

Every trial owns a ``numpy.random.Generator`` seeded from (seed, trial); the
kernels consume it exactly like ``NoiseModel.sample`` does, so results do
not depend on how trials are split across threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numba import njit

from .maps import TRIANGULAR, NoiseModel, PiecewiseMap, TorusLinearMap, times_m

GRID_PRIME = 5566755282872657
_MAX_GRID = 2**58
_MAX_COEF = 15

NONE, UNIF, TRI = -1, 0, 1
_CENSORED = -1
_LEFT_DOMAIN = -2


@njit(cache=True, nogil=True)
def _draw1(rng, kind, eps):
    u = rng.random()
    if kind == 0:
        return eps * (2.0 * u - 1.0)
    if u < 0.5:
        return eps * (2.0 - 2.0 * np.sqrt(1.0 - 0.75 * (2.0 * u)))
    return -eps * (2.0 - 2.0 * np.sqrt(1.0 - 0.75 * (2.0 * u - 1.0)))


@njit(cache=True, nogil=True)
def _draw2(rng, kind, eps):
    while True:
        w1 = eps * (2.0 * rng.random() - 1.0)
        w2 = eps * (2.0 * rng.random() - 1.0)
        rho = np.sqrt(w1 * w1 + w2 * w2)
        if rho > eps:
            continue
        if kind == 1 and rng.random() >= 1.0 - rho / (2.0 * eps):
            continue
        return w1, w2


# -- 1D grid ----------------------------------------------------------------


@njit(cache=True, nogil=True)
def _gadv(k, Q, lo, slope, icpt, circle, nkind, eps, rng):
    i = lo.shape[0] - 1
    while i > 0 and k < lo[i]:
        i -= 1
    y = slope[i] * k + icpt[i]
    if nkind >= 0:
        y += np.int64(np.floor(_draw1(rng, nkind, eps) * Q + 0.5))
    if circle:
        return y % Q
    return y


@njit(cache=True, nogil=True)
def _gdist(k, Q, center, circle):
    d = abs(k / Q - center)
    if circle and d > 0.5:
        d = 1.0 - d
    return d


@njit(cache=True, nogil=True)
def grid1_run(k, n, burn, Q, lo, slope, icpt, circle, nkind, eps, rng, center, radius, times):
    for _ in range(burn):
        k = _gadv(k, Q, lo, slope, icpt, circle, nkind, eps, rng)
        if k < 0 or k > Q:
            return -1, 0.0
    cnt = 0
    dmin = np.inf
    for j in range(n):
        d = _gdist(k, Q, center, circle)
        if d < dmin:
            dmin = d
        if d < radius:
            times[cnt] = j
            cnt += 1
        if j < n - 1:
            k = _gadv(k, Q, lo, slope, icpt, circle, nkind, eps, rng)
            if k < 0 or k > Q:
                return -1, 0.0
    return cnt, dmin


@njit(cache=True, nogil=True)
def grid1_hit(k, burn, horizon, Q, lo, slope, icpt, circle, nkind, eps, rng, center, radius):
    for _ in range(burn):
        k = _gadv(k, Q, lo, slope, icpt, circle, nkind, eps, rng)
    for j in range(1, horizon + 1):
        k = _gadv(k, Q, lo, slope, icpt, circle, nkind, eps, rng)
        if k < 0 or k > Q:
            return -2
        if _gdist(k, Q, center, circle) < radius:
            return j
    return -1


@njit(cache=True, nogil=True)
def grid1_orbit(k, n, Q, lo, slope, icpt, circle, nkind, eps, rng):
    out = np.empty(n + 1, dtype=np.int64)
    out[0] = k
    for j in range(n):
        k = _gadv(k, Q, lo, slope, icpt, circle, nkind, eps, rng)
        out[j + 1] = k
    return out


# -- 1D float ---------------------------------------------------------------


@njit(cache=True, nogil=True)
def _fadv(x, lo, slope, icpt, circle, nkind, eps, rng):
    i = lo.shape[0] - 1
    while i > 0 and x < lo[i]:
        i -= 1
    y = slope[i] * x + icpt[i]
    if nkind >= 0:
        y += _draw1(rng, nkind, eps)
    if circle:
        y = y % 1.0
        if y >= 1.0:
            y = 0.0
    return y


@njit(cache=True, nogil=True)
def _fdist(x, center, circle):
    d = abs(x - center)
    if circle and d > 0.5:
        d = 1.0 - d
    return d


@njit(cache=True, nogil=True)
def float1_run(x, n, burn, lo, slope, icpt, circle, nkind, eps, rng, center, radius, times):
    for _ in range(burn):
        x = _fadv(x, lo, slope, icpt, circle, nkind, eps, rng)
        if x < 0.0 or x > 1.0:
            return -1, 0.0
    cnt = 0
    dmin = np.inf
    for j in range(n):
        d = _fdist(x, center, circle)
        if d < dmin:
            dmin = d
        if d < radius:
            times[cnt] = j
            cnt += 1
        if j < n - 1:
            x = _fadv(x, lo, slope, icpt, circle, nkind, eps, rng)
            if x < 0.0 or x > 1.0:
                return -1, 0.0
    return cnt, dmin


@njit(cache=True, nogil=True)
def float1_hit(x, burn, horizon, lo, slope, icpt, circle, nkind, eps, rng, center, radius):
    for _ in range(burn):
        x = _fadv(x, lo, slope, icpt, circle, nkind, eps, rng)
    for j in range(1, horizon + 1):
        x = _fadv(x, lo, slope, icpt, circle, nkind, eps, rng)
        if x < 0.0 or x > 1.0:
            return -2
        if _fdist(x, center, circle) < radius:
            return j
    return -1


@njit(cache=True, nogil=True)
def float1_orbit(x, n, lo, slope, icpt, circle, nkind, eps, rng):
    out = np.empty(n + 1)
    out[0] = x
    for j in range(n):
        x = _fadv(x, lo, slope, icpt, circle, nkind, eps, rng)
        out[j + 1] = x
    return out


# -- 2D torus grid ------------------------------------------------------------


@njit(cache=True, nogil=True)
def _tadv(k1, k2, Q, A, nkind, eps, rng):
    y1 = A[0, 0] * k1 + A[0, 1] * k2
    y2 = A[1, 0] * k1 + A[1, 1] * k2
    if nkind >= 0:
        w1, w2 = _draw2(rng, nkind, eps)
        y1 += np.int64(np.floor(w1 * Q + 0.5))
        y2 += np.int64(np.floor(w2 * Q + 0.5))
    return y1 % Q, y2 % Q


@njit(cache=True, nogil=True)
def _tdist(k1, k2, Q, c1, c2):
    d1 = abs(k1 / Q - c1)
    d2 = abs(k2 / Q - c2)
    if d1 > 0.5:
        d1 = 1.0 - d1
    if d2 > 0.5:
        d2 = 1.0 - d2
    return np.sqrt(d1 * d1 + d2 * d2)


@njit(cache=True, nogil=True)
def torus_run(k1, k2, n, burn, Q, A, nkind, eps, rng, c1, c2, radius, times):
    for _ in range(burn):
        k1, k2 = _tadv(k1, k2, Q, A, nkind, eps, rng)
    cnt = 0
    dmin = np.inf
    for j in range(n):
        d = _tdist(k1, k2, Q, c1, c2)
        if d < dmin:
            dmin = d
        if d < radius:
            times[cnt] = j
            cnt += 1
        if j < n - 1:
            k1, k2 = _tadv(k1, k2, Q, A, nkind, eps, rng)
    return cnt, dmin


@njit(cache=True, nogil=True)
def torus_hit(k1, k2, burn, horizon, Q, A, nkind, eps, rng, c1, c2, radius):
    for _ in range(burn):
        k1, k2 = _tadv(k1, k2, Q, A, nkind, eps, rng)
    for j in range(1, horizon + 1):
        k1, k2 = _tadv(k1, k2, Q, A, nkind, eps, rng)
        if _tdist(k1, k2, Q, c1, c2) < radius:
            return j
    return -1


@njit(cache=True, nogil=True)
def torus_orbit(k1, k2, n, Q, A, nkind, eps, rng):
    out = np.empty((n + 1, 2), dtype=np.int64)
    out[0, 0] = k1
    out[0, 1] = k2
    for j in range(n):
        k1, k2 = _tadv(k1, k2, Q, A, nkind, eps, rng)
        out[j + 1, 0] = k1
        out[j + 1, 1] = k2
    return out


# ---------------------------------------------------------------------------
# python side
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Compiled:
    mode: str                 # grid1 | float1 | torus | python
    fmap: object
    noise: object
    Q: int = 0
    lo: np.ndarray = None
    slope: np.ndarray = None
    icpt: np.ndarray = None
    circle: bool = True
    A: np.ndarray = None
    nkind: int = NONE
    eps: float = 0.0
    lebesgue: bool = False

    @property
    def dim(self) -> int:
        return 2 if self.mode == "torus" else 1

    def to_grid(self, x) -> int:
        k = int(math.floor(float(x) * self.Q))
        return min(max(k, 0), self.Q if not self.circle else self.Q - 1)


def _lcm_denominators(fmap: PiecewiseMap) -> int:
    L = 1
    for br in fmap.branches:
        c = br.intercept % 1 if fmap.topology == "circle" else br.intercept
        L = L * c.denominator // math.gcd(L, c.denominator)
    return L


@lru_cache(maxsize=64)
def compile_system(fmap, noise: NoiseModel | None) -> Compiled:
    nkind = NONE if noise is None else (TRI if noise.kind == TRIANGULAR else UNIF)
    eps = 0.0 if noise is None else float(noise.epsilon)
    if noise is not None and noise.dim != fmap.dim:
        raise ValueError("noise dimension does not match the map")
    if isinstance(fmap, TorusLinearMap):
        A = fmap.array
        if fmap.dim == 1:
            m = int(A[0, 0])
            if m < 2:
                raise ValueError("1D torus maps are simulated as x -> m x mod 1 with m >= 2")
            return compile_system(times_m(m), noise)
        if np.abs(A).sum(axis=1).max() > _MAX_COEF:
            raise ValueError("torus matrix entries too large for the grid kernel")
        return Compiled("torus", fmap, noise, Q=GRID_PRIME, A=A, nkind=nkind, eps=eps, lebesgue=True)
    circle = fmap.topology == "circle"
    lebesgue = fmap.preserves_lebesgue() and (noise is None or circle)
    if fmap.exact_affine and all(br.slope.denominator == 1 for br in fmap.branches):
        L = _lcm_denominators(fmap)
        coef = max(abs(int(br.slope)) + (abs(math.ceil(abs(br.intercept))) if not circle else 1)
                   for br in fmap.branches)
        if L * GRID_PRIME < _MAX_GRID and coef + 1 <= _MAX_COEF:
            Q = L * GRID_PRIME
            lo = np.array([math.ceil(br.a * Q) for br in fmap.branches], dtype=np.int64)
            slope = np.array([int(br.slope) for br in fmap.branches], dtype=np.int64)
            icpt = []
            for br in fmap.branches:
                c = br.intercept % 1 if circle else br.intercept
                icpt.append(int(c * Q))
            return Compiled("grid1", fmap, noise, Q=Q, lo=lo, slope=slope,
                            icpt=np.array(icpt, dtype=np.int64), circle=circle,
                            nkind=nkind, eps=eps, lebesgue=lebesgue)
    if all(br.affine for br in fmap.branches):
        lo = np.array([float(br.a) for br in fmap.branches])
        slope = np.array([float(br.slope) for br in fmap.branches])
        icpt = np.array([float(br.intercept) for br in fmap.branches])
        return Compiled("float1", fmap, noise, lo=lo, slope=slope, icpt=icpt, circle=circle,
                        nkind=nkind, eps=eps, lebesgue=lebesgue)
    return Compiled("python", fmap, noise, circle=circle, nkind=nkind, eps=eps, lebesgue=False)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(trial)])


def _draw_start(cs: Compiled, rng, start, center, radius):
    """Start point, in kernel coordinates."""
    if isinstance(start, str) and start == "stationary":
        if cs.mode in ("grid1",):
            hi = cs.Q if cs.circle else cs.Q + 1
            return int(rng.integers(0, hi))
        if cs.mode == "torus":
            return int(rng.integers(0, cs.Q)), int(rng.integers(0, cs.Q))
        return float(rng.random())
    if isinstance(start, str) and start == "in_target":
        if cs.dim == 1:
            x = float(center) + float(radius) * (2.0 * rng.random() - 1.0)
            if cs.circle:
                x %= 1.0
            else:
                x = min(max(x, 0.0), 1.0)
            return cs.to_grid(x) if cs.mode == "grid1" else x
        while True:
            v1, v2 = 2 * rng.random() - 1, 2 * rng.random() - 1
            if v1 * v1 + v2 * v2 < 1:
                break
        pts = ((center[0] + radius * v1) % 1.0, (center[1] + radius * v2) % 1.0)
        return cs.to_grid(pts[0]), cs.to_grid(pts[1])
    # explicit start point
    if cs.mode == "grid1":
        return cs.to_grid(start)
    if cs.mode == "torus":
        return cs.to_grid(start[0]), cs.to_grid(start[1])
    return float(start)


def default_burn(cs: Compiled, burn_in) -> int:
    if burn_in is not None:
        return int(burn_in)
    return 0 if cs.lebesgue else 1000


def _py_adv(cs: Compiled, x, rng):
    y, _ = cs.fmap.step(x)
    if cs.nkind >= 0:
        y = cs.fmap.reduce(y + float(cs.noise.sample(rng, 1)[0]))
    return y


def _run_one(cs: Compiled, rng, start, n, burn, center, radius, buf):
    s = _draw_start(cs, rng, start, center, radius)
    if cs.mode == "grid1":
        cnt, dmin = grid1_run(s, n, burn, cs.Q, cs.lo, cs.slope, cs.icpt, cs.circle, cs.nkind,
                              cs.eps, rng, float(center), float(radius), buf)
    elif cs.mode == "float1":
        cnt, dmin = float1_run(s, n, burn, cs.lo, cs.slope, cs.icpt, cs.circle, cs.nkind,
                               cs.eps, rng, float(center), float(radius), buf)
    elif cs.mode == "torus":
        cnt, dmin = torus_run(s[0], s[1], n, burn, cs.Q, cs.A, cs.nkind, cs.eps, rng,
                              float(center[0]), float(center[1]), float(radius), buf)
    else:
        x = s
        for _ in range(burn):
            x = _py_adv(cs, x, rng)
        cnt, dmin = 0, math.inf
        for j in range(n):
            d = abs(x - float(center))
            if cs.circle:
                d = min(d, 1 - d)
            dmin = min(dmin, d)
            if d < radius:
                buf[cnt] = j
                cnt += 1
            if j < n - 1:
                x = _py_adv(cs, x, rng)
    if cnt < 0:
        raise ValueError("orbit left [0, 1]: the noise needs a margin on the interval")
    return buf[:cnt].copy(), dmin, to_position(cs, s)


def _hit_one(cs: Compiled, rng, start, burn, horizon, center, radius):
    s = _draw_start(cs, rng, start, center, radius)
    if cs.mode == "grid1":
        r = grid1_hit(s, burn, horizon, cs.Q, cs.lo, cs.slope, cs.icpt, cs.circle, cs.nkind,
                      cs.eps, rng, float(center), float(radius))
    elif cs.mode == "float1":
        r = float1_hit(s, burn, horizon, cs.lo, cs.slope, cs.icpt, cs.circle, cs.nkind,
                       cs.eps, rng, float(center), float(radius))
    elif cs.mode == "torus":
        r = torus_hit(s[0], s[1], burn, horizon, cs.Q, cs.A, cs.nkind, cs.eps, rng,
                      float(center[0]), float(center[1]), float(radius))
    else:
        x = s
        for _ in range(burn):
            x = _py_adv(cs, x, rng)
        r = -1
        for j in range(1, horizon + 1):
            x = _py_adv(cs, x, rng)
            d = abs(x - float(center))
            if cs.circle:
                d = min(d, 1 - d)
            if d < radius:
                r = j
                break
    if r == _LEFT_DOMAIN:
        raise ValueError("orbit left [0, 1]: the noise needs a margin on the interval")
    return r


def _chunks(trials: int, threads: int):
    threads = max(1, min(int(threads), trials)) if trials else 1
    bounds = np.linspace(0, trials, threads + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds, bounds[1:])]


def run_trials(cs: Compiled, n, trials, seed, start, burn, center, radius, threads=1):
    """Exceedance times, minimal distances and start points for every trial."""

    def work(a, b):
        buf = np.empty(max(n, 1), dtype=np.int64)
        return [_run_one(cs, trial_rng(seed, i), start, n, burn, center, radius, buf)
                for i in range(a, b)]

    parts = _fan_out(work, trials, threads)
    times = [p[0] for p in parts]
    dmin = np.array([p[1] for p in parts], dtype=float)
    x0 = np.array([p[2] for p in parts], dtype=float)
    return times, dmin, x0


def hit_trials(cs: Compiled, trials, seed, start, burn, horizon, center, radius, threads=1):
    def work(a, b):
        return [_hit_one(cs, trial_rng(seed, i), start, burn, horizon, center, radius)
                for i in range(a, b)]

    return np.array(_fan_out(work, trials, threads), dtype=np.int64)


def _fan_out(work, trials, threads):
    chunks = _chunks(trials, threads)
    if len(chunks) == 1:
        return work(*chunks[0])
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        results = list(pool.map(lambda ab: work(*ab), chunks))
    return [item for part in results for item in part]


def kernel_orbit(cs: Compiled, s, n, rng, burn=0):
    """Positions (floats) of an orbit started at kernel coordinates ``s``."""
    if cs.mode == "grid1":
        ks = grid1_orbit(s, burn + n, cs.Q, cs.lo, cs.slope, cs.icpt, cs.circle, cs.nkind, cs.eps, rng)
        if ks.min() < 0 or ks.max() > cs.Q:
            raise ValueError("orbit left [0, 1]: the noise needs a margin on the interval")
        return ks[burn:] / cs.Q
    if cs.mode == "float1":
        xs = float1_orbit(s, burn + n, cs.lo, cs.slope, cs.icpt, cs.circle, cs.nkind, cs.eps, rng)
        if xs.min() < 0 or xs.max() > 1:
            raise ValueError("orbit left [0, 1]: the noise needs a margin on the interval")
        return xs[burn:]
    if cs.mode == "torus":
        ks = torus_orbit(s[0], s[1], burn + n, cs.Q, cs.A, cs.nkind, cs.eps, rng)
        return ks[burn:] / cs.Q
    x = s
    out = []
    for _ in range(burn):
        x = _py_adv(cs, x, rng)
    for j in range(n + 1):
        out.append(x)
        if j < n:
            x = _py_adv(cs, x, rng)
    return np.array(out, dtype=float)


def draw_start(cs: Compiled, rng, start="stationary", center=0.0, radius=0.0):
    return _draw_start(cs, rng, start, center, radius)


def to_position(cs: Compiled, s):
    if cs.mode == "grid1":
        return s / cs.Q
    if cs.mode == "torus":
        return (s[0] / cs.Q, s[1] / cs.Q)
    return s
