"""Monte Carlo estimators for extreme value laws, extremal indices, rare
event point processes and their reference compound Poisson laws."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .stochastic import ExceedanceBatch, ProcessSample, ThresholdSchedule

log = logging.getLogger(__name__)


def _records(samples):
    """(n, list of exceedance-time arrays) for a batch or a list of samples."""
    if isinstance(samples, ExceedanceBatch):
        return samples.n, samples.times
    samples = list(samples)
    if not samples:
        raise ValueError("no samples")
    n = samples[0].n
    if any(s.n != n for s in samples):
        raise ValueError("samples must share n")
    return n, [np.asarray(s.exceedances, dtype=np.int64) for s in samples]


def _maxima_ok(samples):
    if isinstance(samples, ExceedanceBatch):
        return samples.maxima <= samples.sched.u
    samples = list(samples)
    if not samples:
        raise ValueError("no samples")
    u = samples[0].u
    if any(s.u != u for s in samples):
        raise ValueError("samples must share u_n")
    return np.array([s.maximum <= u for s in samples])


def _ratio(num: np.ndarray, den: np.ndarray):
    """Ratio estimator sum(num)/sum(den) with its linearised standard error."""
    a, b = float(num.sum()), float(den.sum())
    if b == 0:
        return math.nan, math.nan
    r = a / b
    t = len(num)
    resid = num - r * den
    se = math.sqrt(t / max(t - 1, 1) * float((resid ** 2).sum())) / b
    return r, se


# ---------------------------------------------------------------------------
# EVL and extremal index
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvlEstimate:
    tau: float
    n: int
    trials: int
    p_hat: float
    se: float


def evl_estimate(samples, sched: Optional[ThresholdSchedule] = None) -> EvlEstimate:
    """Fraction of trials with M_n <= u_n."""
    ok = _maxima_ok(samples)
    if ok.size == 0:
        raise ValueError("no samples")
    n, _ = _records(samples)
    if sched is None and isinstance(samples, ExceedanceBatch):
        sched = samples.sched
    p = float(ok.mean())
    return EvlEstimate(sched.tau if sched else math.nan, n, int(ok.size), p, math.sqrt(p * (1 - p) / ok.size))


@dataclass
class EiEstimate:
    theta_logratio: float
    se_logratio: float
    theta_annulus: Optional[float]
    se_annulus: Optional[float]
    theta_cluster: float
    se_cluster: float
    p: Optional[int]
    q: int
    clamped: list = field(default_factory=list)

    def values(self) -> dict:
        out = {"logratio": (self.theta_logratio, self.se_logratio),
               "cluster": (self.theta_cluster, self.se_cluster)}
        if self.theta_annulus is not None:
            out["annulus"] = (self.theta_annulus, self.se_annulus)
        return out


def default_gap(n: int, p: Optional[int] = None) -> int:
    return int(p) if p is not None else math.ceil(math.log(n))


def _clamp(name, v, clamped):
    if math.isnan(v):
        return v
    if v < 0 or v > 1:
        log.warning("extremal index estimate %s = %.6g clamped to [0, 1]", name, v)
        clamped.append(name)
        return min(max(v, 0.0), 1.0)
    return v


def cluster_sizes(times: np.ndarray, q: int) -> np.ndarray:
    """Sizes of maximal runs whose consecutive gaps are <= q."""
    if len(times) == 0:
        return np.zeros(0, dtype=np.int64)
    breaks = np.flatnonzero(np.diff(times) > q)
    edges = np.concatenate(([0], breaks + 1, [len(times)]))
    return np.diff(edges)


def _annulus_counts(times: np.ndarray, n: int, p: int):
    """(#{j in E: j+p < n, j+p not in E}, #{j in E: j+p < n})."""
    valid = times[times + p < n]
    if valid.size == 0:
        return 0, 0
    back = np.isin(valid + p, times)
    return int((~back).sum()), int(valid.size)


def ei_estimate(samples, sched: ThresholdSchedule, p: Optional[int] = None,
                q: Optional[int] = None) -> EiEstimate:
    """Log-ratio, annulus (period p) and runs (gap q) extremal index estimates."""
    n, times = _records(samples)
    counts = np.array([len(t) for t in times], dtype=float)
    t = len(times)
    clamped: list = []

    p_hat = float(np.mean(counts == 0))
    tau_hat = float(counts.mean())
    if p_hat == 0 or tau_hat == 0:
        lr, lr_se = (1.0 if tau_hat == 0 else 0.0), math.nan
        log.warning("log-ratio estimator undefined (p_hat = %g); clamped", p_hat)
        clamped.append("logratio")
    else:
        lr = -math.log(p_hat) / tau_hat
        se_logp = math.sqrt((1 - p_hat) / (p_hat * t))
        se_tau = float(counts.std(ddof=1)) / math.sqrt(t) if t > 1 else 0.0
        lr_se = math.sqrt((se_logp / tau_hat) ** 2 + (lr * se_tau / tau_hat) ** 2)
    lr = _clamp("logratio", lr, clamped)

    an = an_se = None
    if p is not None:
        pairs = np.array([_annulus_counts(tt, n, p) for tt in times], dtype=float).reshape(-1, 2)
        an, an_se = _ratio(pairs[:, 0], pairs[:, 1])
        an = _clamp("annulus", an, clamped)

    q = default_gap(n, p) if q is None else int(q)
    ncl = np.array([len(cluster_sizes(tt, q)) for tt in times], dtype=float)
    cl, cl_se = _ratio(ncl, counts)
    cl = _clamp("cluster", cl, clamped)
    return EiEstimate(lr, lr_se, an, an_se, cl, cl_se, p, q, clamped)


# ---------------------------------------------------------------------------
# point processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReppSample:
    times: np.ndarray            # j / v_n
    counts: tuple
    v: float


def _as_union(J):
    if len(J) == 2 and not isinstance(J[0], (tuple, list)):
        return [tuple(J)]
    return [tuple(piece) for piece in J]


def repp(sample: ProcessSample, sched: ThresholdSchedule, intervals: Sequence) -> ReppSample:
    """Counts N_n(J) = #{j in v_n J : X_j > u_n} for each union J of [a, b)."""
    v = sched.v
    exc = np.asarray(sample.exceedances, dtype=np.int64)
    counts = []
    for J in intervals:
        total = 0
        for a, b in _as_union(J):
            if a < 0 or b < a or v * b > sample.n * (1 + 1e-12):
                raise ValueError(f"interval [{a}, {b}) outside [0, n/v_n)")
            total += int(np.count_nonzero((exc >= v * a) & (exc < v * b)))
        counts.append(total)
    return ReppSample(exc / v, tuple(counts), v)


def window_counts(samples, window: float) -> np.ndarray:
    """Counts in consecutive disjoint windows [m w, (m+1) w) of raw time."""
    n, times = _records(samples)
    m = int(n // window)
    if m < 1:
        raise ValueError("window longer than the series")
    out = []
    for tt in times:
        idx = np.floor(tt / window).astype(np.int64)
        idx = idx[idx < m]
        out.append(np.bincount(idx, minlength=m))
    return np.concatenate(out)


def palm_gaps(samples, horizon: int) -> np.ndarray:
    """Gaps from each event in [0, horizon) to the next event.

    The caller leaves a margin n - horizon long enough that a missing next
    event has negligible probability; such events are dropped and counted by
    ``palm_censored``.
    """
    _, times = _records(samples)
    gaps = []
    for tt in times:
        if tt.size < 2:
            continue
        g = np.diff(tt)
        gaps.append(g[tt[:-1] < horizon])
    return np.concatenate(gaps) if gaps else np.zeros(0, dtype=np.int64)


def palm_censored(samples, horizon: int) -> int:
    _, times = _records(samples)
    return sum(1 for tt in times if tt.size and tt[-1] < horizon)


def ks_exponential(x: np.ndarray) -> float:
    """KS distance of a sample to Exp(1)."""
    return float(stats.kstest(np.asarray(x, dtype=float), "expon").statistic)


def dispersion_index(counts: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=float)
    return float(counts.var(ddof=1) / counts.mean())


@dataclass(frozen=True)
class MultiplicityHistogram:
    pi_hat: dict                 # kappa -> relative frequency
    clusters: int
    q: int

    def pmf(self, kmax: int) -> np.ndarray:
        """pi_hat(1..kmax) as an array (index 0 is kappa = 1)."""
        return np.array([self.pi_hat.get(k, 0.0) for k in range(1, kmax + 1)])

    def mean_size(self) -> float:
        return sum(k * v for k, v in self.pi_hat.items())


def cluster_histogram(samples, sched: Optional[ThresholdSchedule] = None, q: int = 1) -> MultiplicityHistogram:
    if q < 0:
        raise ValueError("gap must be >= 0")
    _, times = _records(samples)
    sizes = [cluster_sizes(tt, q) for tt in times]
    sizes = np.concatenate(sizes) if sizes else np.zeros(0, dtype=np.int64)
    if sizes.size == 0:
        return MultiplicityHistogram({}, 0, q)
    vals, cnt = np.unique(sizes, return_counts=True)
    return MultiplicityHistogram({int(k): c / sizes.size for k, c in zip(vals, cnt)}, int(sizes.size), q)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    m = max(len(p), len(q))
    p = np.pad(np.asarray(p, dtype=float), (0, m - len(p)))
    q = np.pad(np.asarray(q, dtype=float), (0, m - len(q)))
    return 0.5 * float(np.abs(p - q).sum())


# ---------------------------------------------------------------------------
# reference laws
# ---------------------------------------------------------------------------


def _check_theta_t(theta, t):
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    if not t > 0:
        raise ValueError("t must be positive")


def polya_aeppli_pmf(theta: float, t: float, k: int) -> float:
    """P(N = k) for a compound Poisson count with intensity theta*t and
    geometric multiplicities theta (1 - theta)^(kappa - 1)."""
    _check_theta_t(theta, t)
    if k < 0:
        raise ValueError("k must be >= 0")
    lam = theta * t
    if k == 0:
        return math.exp(-lam)
    total = 0.0
    for j in range(1, k + 1):
        if theta == 1 and j < k:
            continue
        logterm = (-lam + j * math.log(theta * lam) - math.lgamma(j + 1)
                   + math.lgamma(k) - math.lgamma(j) - math.lgamma(k - j + 1))
        total += math.exp(logterm) * (1 - theta) ** (k - j)
    return total


def polya_aeppli_pmf_array(theta: float, t: float, kmax: int) -> np.ndarray:
    return np.array([polya_aeppli_pmf(theta, t, k) for k in range(kmax + 1)])


def _as_pmf(pi) -> np.ndarray:
    """Multiplicity pmf as an array indexed by kappa (entry 0 unused, = 0)."""
    if isinstance(pi, dict):
        kmax = max(pi)
        arr = np.zeros(kmax + 1)
        for k, v in pi.items():
            if k < 1:
                raise ValueError("multiplicities must be positive integers")
            arr[k] = v
    else:
        arr = np.concatenate(([0.0], np.asarray(pi, dtype=float)))
    if np.any(arr < 0) or abs(arr.sum() - 1) > 1e-12:
        raise ValueError("multiplicity pmf must be nonnegative and sum to 1")
    return arr


def compound_poisson_pmf(theta: float, pi, t: float, k: int) -> float:
    """P(N = k) for intensity theta*t and multiplicity pmf ``pi``.

    ``pi`` is a dict kappa -> mass or a sequence for kappa = 1, 2, ...
    Because multiplicities are >= 1, only j <= k Poisson events contribute,
    so the series is finite and the truncation error is exactly zero.
    """
    _check_theta_t(theta, t)
    if k < 0:
        raise ValueError("k must be >= 0")
    arr = _as_pmf(pi)
    lam = theta * t
    if k == 0:
        return math.exp(-lam)
    base = np.zeros(k + 1)
    m = min(len(arr), k + 1)
    base[:m] = arr[:m]
    conv = np.zeros(k + 1)
    conv[0] = 1.0
    total = 0.0
    for j in range(1, k + 1):
        conv = np.convolve(conv, base)[: k + 1]
        total += math.exp(-lam + j * math.log(lam) - math.lgamma(j + 1)) * conv[k]
    return total


# ---------------------------------------------------------------------------
# short-range dependence diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticStat:
    value: float
    se: float
    window: int
    trials: int


def default_kn(n: int) -> int:
    return max(1, math.isqrt(n))


def _pair_counts(events: np.ndarray, s: int) -> np.ndarray:
    """Number of event pairs at each lag 1..s (index 0 is lag 1)."""
    out = np.zeros(s, dtype=np.int64)
    if events.size < 2 or s < 1:
        return out
    diffs = events[None, :] - events[:, None] if events.size < 2000 else None
    if diffs is not None:
        d = diffs[diffs > 0]
        d = d[d <= s]
        np.add.at(out, d - 1, 1)
        return out
    for i, e in enumerate(events):
        later = events[i + 1:]
        later = later[later - e <= s] - e
        np.add.at(out, later - 1, 1)
    return out


def _dsum(event_lists, n: int, s: int, span: int) -> DiagnosticStat:
    lags = np.arange(1, s + 1)
    npos = n - span - lags
    if np.any(npos <= 0):
        raise ValueError("window too long for the series")
    per = np.array([n * float((_pair_counts(ev, s) / npos).sum()) for ev in event_lists])
    se = float(per.std(ddof=1) / math.sqrt(per.size)) if per.size > 1 else math.nan
    return DiagnosticStat(float(per.mean()), se, s, int(per.size))


def dprime_stat(samples, sched: ThresholdSchedule, k_n: Optional[int] = None) -> DiagnosticStat:
    """Plug-in estimate of n * sum_{j=1}^{n/k_n} P(X_0 > u, X_j > u)."""
    n, times = _records(samples)
    k_n = default_kn(n) if k_n is None else k_n
    return _dsum(times, n, n // k_n, 0)


def annulus_events(times: np.ndarray, n: int, p: int) -> np.ndarray:
    """Times i with X_i > u and X_{i+p} <= u (i + p < n)."""
    valid = times[times + p < n]
    return valid[~np.isin(valid + p, times)]


def dp_prime_stat(samples, sched: ThresholdSchedule, p: int, k_n: Optional[int] = None) -> DiagnosticStat:
    """As ``dprime_stat`` with the annulus events {X_i > u, X_{i+p} <= u}."""
    n, times = _records(samples)
    k_n = default_kn(n) if k_n is None else k_n
    return _dsum([annulus_events(tt, n, p) for tt in times], n, n // k_n, p)
