"""Ulam discretisation of the (random) transfer operator and the open
operator of a small hole.

Convention: a density is a vector of cell masses v (sum = total mass) and
evolves by v -> v M. The open operator masks its input, v -> (v E) M with E
the projection onto cells outside the hole, so survival after m steps is
the mass of h (E M)^m. Noise is applied after the map as a circulant cell
kernel, multiplied in Fourier space.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import fft

from .maps import NoiseModel, PiecewiseMap, step_array


class ResolutionWarning(UserWarning):
    """Noise amplitude below the Ulam cell width."""


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.residual = residual


# ---------------------------------------------------------------------------
# closed operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UlamOperator:
    """M[i, j] = Leb(I_i & f^-1 I_j) / Leb(I_i) on k equal cells, optionally
    followed by the noise kernel N (M_eps = M N)."""

    k: int
    M: sp.csr_matrix = field(repr=False)
    exact: bool
    rows_exact_stochastic: Optional[bool] = None   # exact rational row sums == 1
    kernel: Optional[np.ndarray] = field(default=None, repr=False)   # N[i, i + d] = kernel[d mod k]
    epsilon: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "_MT", self.M.T.tocsr())
        if self.kernel is not None:
            object.__setattr__(self, "_K", fft.rfft(self.kernel))

    @property
    def noisy(self) -> bool:
        return self.kernel is not None

    def apply(self, v: np.ndarray) -> np.ndarray:
        """v -> v M (then N)."""
        w = self._MT @ v
        if self.kernel is not None:
            w = fft.irfft(fft.rfft(w) * self._K, n=self.k)
        return w

    def apply_T(self, w: np.ndarray) -> np.ndarray:
        """w -> M N w (action on functions)."""
        if self.kernel is not None:
            w = fft.irfft(fft.rfft(w) * np.conj(self._K), n=self.k)
        return self.M @ w

    def row_sums(self) -> np.ndarray:
        s = np.asarray(self.M.sum(axis=1)).ravel()
        if self.kernel is not None:
            s = s * self.kernel.sum()
        return s

    def dense(self) -> np.ndarray:
        if self.k > 4096:
            raise ValueError("dense export limited to k <= 4096")
        D = self.M.toarray()
        if self.kernel is not None:
            N = np.array([np.roll(self.kernel, i) for i in range(self.k)])
            D = D @ N
        return D

    def to_csv(self, path, sparse: bool = True) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if sparse:
                if self.kernel is not None:
                    raise ValueError("sparse export covers the map part only; use dense")
                coo = self.M.tocoo()
                w.writerow(["row", "col", "value"])
                for i, j, v in zip(coo.row, coo.col, coo.data):
                    w.writerow([int(i), int(j), repr(float(v))])
            else:
                for row in self.dense():
                    w.writerow([repr(float(v)) for v in row])


def _exact_rows(fmap: PiecewiseMap, k: int):
    rows, cols, vals = [], [], []
    sums = [Fraction(0)] * k
    circle = fmap.topology == "circle"
    kk = Fraction(k)
    for br in fmap.branches:
        s, c = br.slope, br.intercept
        for i in range(math.floor(br.a * k), math.ceil(br.b * k)):
            x0, x1 = max(br.a, Fraction(i, k)), min(br.b, Fraction(i + 1, k))
            if x1 <= x0:
                continue
            if s == 0:
                y = c + 0 * x0
                if circle:
                    y -= math.floor(y)
                j = min(math.floor(y * k), k - 1)
                contrib = {j: (x1 - x0) * kk}
            else:
                y0, y1 = s * x0 + c, s * x1 + c
                lo, hi = min(y0, y1), max(y0, y1)
                if circle:
                    shift = math.floor(lo)
                    lo, hi = lo - shift, hi - shift
                elif lo < 0 or hi > 1:
                    raise ValueError("map leaves [0, 1]")
                w = kk / abs(s)
                contrib = {}
                for j in range(math.floor(lo * k), math.ceil(hi * k)):
                    ov = min(hi, Fraction(j + 1, k)) - max(lo, Fraction(j, k))
                    if ov > 0:
                        jj = j % k
                        contrib[jj] = contrib.get(jj, 0) + ov * w
            for j, v in contrib.items():
                rows.append(i)
                cols.append(j)
                vals.append(v)
                sums[i] += v
    return rows, cols, vals, sums


def ulam_build(fmap: PiecewiseMap, k: int, samples_per_cell: int = 2000, seed: int = 0) -> UlamOperator:
    """Ulam matrix on k cells; exact for exact-affine maps, Monte Carlo otherwise."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if getattr(fmap, "dim", 1) != 1:
        raise ValueError("Ulam discretisation is one-dimensional")
    if fmap.exact_affine:
        rows, cols, vals, sums = _exact_rows(fmap, k)
        M = sp.csr_matrix((np.array([float(v) for v in vals]), (rows, cols)), shape=(k, k))
        M.sum_duplicates()
        return UlamOperator(k, M, True, all(s == 1 for s in sums))
    rng = np.random.default_rng(seed)
    x = (np.arange(k)[:, None] + rng.random((k, samples_per_cell))) / k
    y = step_array(fmap, x.ravel())
    j = np.minimum((y * k).astype(np.int64), k - 1)
    i = np.repeat(np.arange(k), samples_per_cell)
    M = sp.csr_matrix((np.full(i.size, 1.0 / samples_per_cell), (i, j)), shape=(k, k))
    M.sum_duplicates()
    return UlamOperator(k, M, False, None)


def noise_kernel(noise: NoiseModel, k: int) -> np.ndarray:
    """Circulant cell-to-cell law of x + omega mod 1 with x uniform in a cell:
    w(d) = (G2(dh + h) - 2 G2(dh) + G2(dh - h)) / h, G2(x) = E[(x - omega)^+]."""
    h = 1.0 / k
    D = int(math.ceil(float(noise.epsilon) / h)) + 1
    ker = np.zeros(k)
    G2 = noise.mean_positive_part
    for d in range(-D, D + 1):
        wd = (G2(d * h + h) - 2 * G2(d * h) + G2(d * h - h)) / h
        ker[d % k] += max(wd, 0.0)
    return ker / ker.sum()


def ulam_random(fmap: PiecewiseMap, noise: NoiseModel, k: int, base: Optional[UlamOperator] = None) -> UlamOperator:
    """M_eps = M N_eps for additive noise mod 1."""
    if fmap.topology != "circle":
        raise ValueError("random Ulam operator needs circle topology")
    if noise.dim != 1:
        raise ValueError("one-dimensional noise required")
    if float(noise.epsilon) < 1.0 / k:
        warnings.warn(f"noise amplitude {float(noise.epsilon):g} below the cell width 1/{k}",
                      ResolutionWarning, stacklevel=2)
    base = ulam_build(fmap, k) if base is None else base
    return UlamOperator(k, base.M, False, base.rows_exact_stochastic, noise_kernel(noise, k), float(noise.epsilon))


# ---------------------------------------------------------------------------
# holes and open operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HoleSpec:
    k: int
    cells: tuple
    target_mass: Optional[float] = None

    def __post_init__(self):
        cells = tuple(sorted(set(int(c) % self.k for c in self.cells)))
        if not cells:
            raise ValueError("hole must contain at least one cell")
        if len(cells) >= self.k:
            raise ValueError("hole must be a proper subset of the cells")
        object.__setattr__(self, "cells", cells)

    @property
    def leb(self) -> float:
        return len(self.cells) / self.k

    @property
    def residual(self) -> Optional[float]:
        return None if self.target_mass is None else abs(self.leb - self.target_mass)

    @property
    def mask(self) -> np.ndarray:
        m = np.ones(self.k)
        m[list(self.cells)] = 0.0
        return m

    def ball(self) -> tuple:
        """(center, radius) of the snapped hole as a ball on the circle; the
        cells must be consecutive."""
        c = list(self.cells)
        n = len(c)
        if c[-1] - c[0] == n - 1:
            lo = c[0]
        else:
            # wraps through 0
            gap = next(i for i in range(1, n) if c[i] != c[i - 1] + 1)
            lo = c[gap]
            if (c[gap - 1] + self.k - lo) != n - 1:
                raise ValueError("hole cells are not consecutive")
        center = Fraction(2 * lo + n, 2 * self.k) % 1
        return center, Fraction(n, 2 * self.k)


def hole_around(zeta, k: int, ncells: int = 2, target_mass=None) -> HoleSpec:
    """``ncells`` consecutive cells centred at the grid point nearest zeta
    (even counts) or on the cell containing zeta (odd counts)."""
    if ncells < 1:
        raise ValueError("ncells must be >= 1")
    z = float(zeta) % 1.0
    if ncells % 2 == 0:
        b = int(round(z * k))
        cells = range(b - ncells // 2, b + ncells // 2)
    else:
        c = min(int(math.floor(z * k)), k - 1)
        cells = range(c - ncells // 2, c + ncells // 2 + 1)
    return HoleSpec(k, tuple(cells), target_mass)


def hole_for_mass(zeta, k: int, mass: float) -> HoleSpec:
    return hole_around(zeta, k, max(1, int(round(mass * k))), mass)


@dataclass(frozen=True)
class OpenOperator:
    closed: UlamOperator
    hole: HoleSpec

    def __post_init__(self):
        if self.hole.k != self.closed.k:
            raise ValueError("hole and operator use different grids")
        object.__setattr__(self, "_mask", self.hole.mask)

    @property
    def k(self) -> int:
        return self.closed.k

    def apply(self, v):
        return self.closed.apply(v * self._mask)

    def apply_T(self, w):
        return self._mask * self.closed.apply_T(w)

    def dense(self) -> np.ndarray:
        return self._mask[:, None] * self.closed.dense()


def open_operator(M: UlamOperator, hole: HoleSpec) -> OpenOperator:
    return OpenOperator(M, hole)


# ---------------------------------------------------------------------------
# eigen data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EigenTriple:
    lam: float
    phi: np.ndarray = field(repr=False)     # density, total mass 1
    nu: np.ndarray = field(repr=False)      # functional, nu(phi) = 1
    iterations: int
    residual: float


def _power(apply, v, tol, max_iter):
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = apply(v)
        mass = np.abs(w).sum()
        if mass == 0:
            return 0.0, v, it, 0.0
        w /= mass
        change = np.abs(w - v).sum()
        lam_new = mass
        done = change < tol and abs(lam_new - lam) <= tol * max(lam_new, 1e-300)
        v, lam = w, lam_new
        if done:
            return lam, v, it, change
    return lam, v, max_iter, change


def leading_eigen(op, tol: float = 1e-12, max_iter: int = 100_000, start: Optional[np.ndarray] = None) -> EigenTriple:
    """Leading eigenvalue with density phi (phi M = lam phi) and functional
    nu (M nu = lam nu), by power iteration."""
    k = op.k
    v0 = np.full(k, 1.0 / k) if start is None else np.asarray(start, dtype=float) / np.sum(start)
    lam, phi, it1, res1 = _power(op.apply, v0, tol, max_iter)
    if it1 >= max_iter and res1 >= tol:
        raise ConvergenceError("power iteration for the density did not converge", res1)
    lam2, nu, it2, res2 = _power(op.apply_T, np.full(k, 1.0 / k), tol, max_iter)
    if it2 >= max_iter and res2 >= tol:
        raise ConvergenceError("power iteration for the functional did not converge", res2)
    dot = float(nu @ phi)
    nu = nu / dot if dot else nu
    residual = float(np.abs(op.apply(phi) - lam * phi).sum())
    return EigenTriple(float(lam), phi, nu, it1 + it2, residual)


def stationary_density(M: UlamOperator, tol: float = 1e-13, max_iter: int = 100_000) -> np.ndarray:
    lam, h, it, res = _power(M.apply, np.full(M.k, 1.0 / M.k), tol, max_iter)
    if it >= max_iter and res >= tol:
        raise ConvergenceError("stationary density did not converge", res)
    return h / h.sum()


def survival(Mt: OpenOperator, h: np.ndarray, m: int) -> float:
    v = np.asarray(h, dtype=float)
    for _ in range(int(m)):
        v = Mt.apply(v)
    return float(v.sum())


def survival_curve(Mt: OpenOperator, h: np.ndarray, ms: Sequence[int]) -> np.ndarray:
    """Survival at several step counts, one sweep."""
    order = np.argsort(ms)
    out = np.empty(len(ms))
    v, done = np.asarray(h, dtype=float), 0
    for idx in order:
        for _ in range(int(ms[idx]) - done):
            v = Mt.apply(v)
        done = int(ms[idx])
        out[idx] = v.sum()
    return out


def delta(M: UlamOperator, Mt: OpenOperator, h: np.ndarray, both: bool = False):
    """Delta = mass of h (M - Mt); with ``both`` also the hole mass of h."""
    d = float((M.apply(h) - Mt.apply(h)).sum())
    if both:
        return d, float(h[list(Mt.hole.cells)].sum())
    return d


def qk_series(M: UlamOperator, Mt: OpenOperator, h: np.ndarray, Delta: float, K: int = 25) -> np.ndarray:
    """q_k = mass of h (M - Mt) Mt^k (M - Mt) / Delta, k = 0..K."""
    if K < 0:
        raise ValueError("K must be >= 0")
    v = M.apply(h) - Mt.apply(h)
    q = np.empty(K + 1)
    for kk in range(K + 1):
        q[kk] = float((M.apply(v) - Mt.apply(v)).sum()) / Delta
        if kk < K:
            v = Mt.apply(v)
    return q


def spectral_ei(lam: float, Delta: float) -> float:
    if not Delta > 0:
        raise ValueError("Delta must be positive")
    return (1.0 - lam) / Delta


def tail_estimate(q: np.ndarray) -> float:
    """Geometric tail sum_{k > K} q_k from the last ratio."""
    if q.size < 2 or q[-2] <= 0:
        return math.nan
    r = q[-1] / q[-2]
    return float(q[-1] * r / (1 - r)) if 0 <= r < 1 else math.inf


@dataclass(frozen=True)
class SpectralReport:
    k: int
    hole: HoleSpec
    lam: float
    h: np.ndarray = field(repr=False)
    Delta: float = 0.0
    q: np.ndarray = field(default=None, repr=False)
    theta_series: float = 0.0
    theta_ratio: float = 0.0
    tail: float = 0.0
    iterations: int = 0
    residual: float = 0.0
    stationarity: float = 0.0
    tol: float = 1e-12
    epsilon: float = 0.0

    @property
    def gap(self) -> float:
        return abs(self.theta_ratio - self.theta_series)

    def to_dict(self) -> dict:
        return {"k": self.k, "hole_cells": list(self.hole.cells), "epsilon": self.epsilon,
                "lambda": self.lam, "Delta": self.Delta, "q": [float(x) for x in self.q],
                "theta_series": self.theta_series, "theta_ratio": self.theta_ratio, "gap": self.gap,
                "tail_estimate": self.tail, "iterations": self.iterations,
                "eigen_residual": self.residual, "stationarity_residual": self.stationarity, "tol": self.tol}


def spectral_report(fmap: PiecewiseMap, noise: Optional[NoiseModel], zeta, k: int, ncells: int = 2,
                    K: int = 25, tol: float = 1e-12, hole: Optional[HoleSpec] = None,
                    M: Optional[UlamOperator] = None) -> SpectralReport:
    if M is None:
        M = ulam_build(fmap, k) if noise is None else ulam_random(fmap, noise, k)
    hole = hole_around(zeta, k, ncells) if hole is None else hole
    h = stationary_density(M)
    stat = float(np.abs(M.apply(h) - h).sum())
    Mt = open_operator(M, hole)
    eig = leading_eigen(Mt, tol=tol)
    D = delta(M, Mt, h)
    q = qk_series(M, Mt, h, D, K)
    return SpectralReport(k, hole, eig.lam, h, D, q, float(1 - q.sum()), spectral_ei(eig.lam, D),
                          tail_estimate(q), eig.iterations, eig.residual, stat, tol,
                          0.0 if noise is None else float(noise.epsilon))


def refinement_ladder(fmap, noise, zeta, ks: Sequence[int] = (2**10, 2**12, 2**14), ncells: int = 2,
                      K: int = 25, tol: float = 1e-12) -> list:
    return [spectral_report(fmap, noise, zeta, k, ncells, K, tol) for k in ks]


# ---------------------------------------------------------------------------
# operator closeness and finite-hole error profile
# ---------------------------------------------------------------------------


def dyadic_probes(k: int, max_level: int = 6) -> list:
    """Densities 1_I/|I| on dyadic intervals I, paired with their BV norms."""
    out = []
    levels = min(max_level, int(math.log2(k)))
    for L in range(levels + 1):
        n = 2 ** L
        width = k // n
        for j in range(n):
            v = np.zeros(k)
            v[j * width:(j + 1) * width] = 1.0 / n
            bv = 1.0 + (0.0 if L == 0 else 2.0 * n)
            out.append((v, bv))
    return out


@dataclass(frozen=True)
class Closeness:
    distance: float
    epsilon: float
    C: float


def closeness_check(M: UlamOperator, M_eps: UlamOperator, probes=None) -> Closeness:
    """max over probes of ||phi M - phi M_eps||_1 / ||phi||_BV."""
    if M.k != M_eps.k:
        raise ValueError("operators on different grids")
    probes = dyadic_probes(M.k) if probes is None else probes
    dist = 0.0
    for v, bv in probes:
        dist = max(dist, float(np.abs(M.apply(v) - M_eps.apply(v)).sum()) / bv)
    eps = M_eps.epsilon
    return Closeness(dist, eps, dist / eps if eps > 0 else math.nan)


def closeness_slope(fmap, epsilons: Sequence[float], k: int, kind: str = "uniform") -> tuple:
    """Log-log slope of the closeness distance against epsilon."""
    base = ulam_build(fmap, k)
    d = [closeness_check(base, ulam_random(fmap, NoiseModel(e, kind), k, base)).distance for e in epsilons]
    slope = np.polyfit(np.log(epsilons), np.log(d), 1)[0]
    return float(slope), d


@dataclass(frozen=True)
class ErrorProfile:
    t: np.ndarray
    steps: np.ndarray
    residual: np.ndarray
    envelope: np.ndarray
    C: float


def survival_error_profile(Mt: OpenOperator, h: np.ndarray, Delta: float, xi: float,
                           t_grid: Sequence[float]) -> ErrorProfile:
    """|survival(ceil(t / (xi Delta))) - e^{-t}| against (t v 1) e^{-t}."""
    t = np.asarray(t_grid, dtype=float)
    steps = np.ceil(t / (xi * Delta)).astype(np.int64)
    surv = survival_curve(Mt, h, steps)
    res = np.abs(surv - np.exp(-t))
    env = np.maximum(t, 1.0) * np.exp(-t)
    return ErrorProfile(t, steps, res, env, float(np.max(res / env)) if t.size else 0.0)
