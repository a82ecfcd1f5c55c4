"""Command line runner.

    evlab <command> [--config cfg.json] [--seed S] [--out DIR] [--threads N]

Every command writes ``report.json`` (fully determined by the resolved
configuration and seed), ``timing.json`` (wall time) and tidy CSV series to
the output directory. The exit code is 0 iff every verdict in the report
passes; configuration errors exit with 2.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from . import extremes as ex
from . import hitting as ht
from . import spectral as sp
from .experiments import (CATALOGUE, GOLDEN, Suite, _clean, discontinuous_map, expanding_torus,
                          inner_interval_map, measure_for, observable_for, predict)
from .maps import (NoiseModel, TorusLinearMap, as_rational, classify, doubling, map_from_dict, map_to_dict,
                   noise_to_dict, times_m)
from .stochastic import NEG_DIST, NEG_LOG_DIST, Observable, ThresholdSchedule, resolve_threads, simulate, threshold_for

COMMANDS = ("simulate", "ei", "repp", "hts", "rts", "spectral", "dichotomy", "short-return", "classify", "verify")
_RANDOM = set(COMMANDS) - {"classify", "verify"}

NAMED_MAPS = {
    "doubling": doubling,
    "tripling": lambda: times_m(3),
    "discontinuous": discontinuous_map,
    "inner-interval": inner_interval_map,
    "torus": expanding_torus,
}

OPTIONS = {
    "p": int, "q": int, "k_n": int, "alpha_n": int, "K": int, "ulam_k": int, "horizon": int,
    "ks": list, "tol": float, "mass": float, "t_max": float, "points": list, "criteria": list,
}

DEFAULT_TOL = {"simulate": 0.03, "ei": 0.05, "repp": 0.03, "hts": 0.03, "rts": 0.03, "spectral": 0.02,
               "dichotomy": 0.05}


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _parse_zeta(v, path="config.zeta"):
    if isinstance(v, bool):
        raise ConfigError(path, "expected a number, a rational string or a pair")
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError(path, "torus points have two coordinates")
        return tuple(_parse_zeta(c, f"{path}[{i}]") for i, c in enumerate(v))
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, float):
        return v
    if isinstance(v, str):
        if v == "golden":
            return GOLDEN
        try:
            return as_rational(v)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(path, f"cannot read {v!r} as a rational") from None
    raise ConfigError(path, "expected a number, a rational string or a pair")


def _zeta_repr(z):
    if isinstance(z, tuple):
        return [_zeta_repr(c) for c in z]
    return str(z) if isinstance(z, Fraction) else float(z)


def _positive(raw, key, kind, default):
    v = raw.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and int(v) != v):
        raise ConfigError(f"config.{key}", f"expected a positive {kind.__name__}")
    if not v > 0:
        raise ConfigError(f"config.{key}", "must be positive")
    return kind(v)


@dataclass
class ExperimentConfig:
    kind: str
    map_label: str
    fmap: object = field(repr=False)
    noise: Optional[NoiseModel]
    zeta: object
    tau: float = 1.0
    n: int = 10**4
    trials: int = 10**4
    seed: Optional[int] = None
    options: dict = field(default_factory=dict)
    shape: str = NEG_DIST

    def opt(self, key, default=None):
        return self.options.get(key, default)

    def canonical(self) -> dict:
        try:
            spec = map_to_dict(self.fmap)
        except ValueError:
            spec = self.map_label
        return {"command": self.kind, "map": self.map_label, "map_spec": spec,
                "noise": noise_to_dict(self.noise), "zeta": _zeta_repr(self.zeta), "tau": self.tau,
                "n": self.n, "trials": self.trials, "seed": self.seed, "observable": self.shape,
                "options": _clean(self.options)}

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _build_map(spec):
    if isinstance(spec, str):
        if spec in CATALOGUE:
            return spec, CATALOGUE[spec].fmap, CATALOGUE[spec]
        if spec in NAMED_MAPS:
            return spec, NAMED_MAPS[spec](), None
        raise ConfigError("config.map", f"unknown map or catalogue entry {spec!r}")
    if isinstance(spec, dict):
        try:
            return "custom", map_from_dict(spec), None
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError, ZeroDivisionError) as exc:
            msg = str(exc)
            if msg.startswith("map."):
                path, _, rest = msg.partition(": ")
                raise ConfigError("config." + path, rest) from None
            raise ConfigError("config.map", msg) from None
    raise ConfigError("config.map", "expected a name or a map object")


def _build_noise(spec, dim):
    if spec is None:
        return None
    if not isinstance(spec, dict) or "epsilon" not in spec:
        raise ConfigError("config.noise", "expected null or an object with 'epsilon'")
    try:
        eps = float(as_rational(spec["epsilon"]))
    except (TypeError, ValueError, ZeroDivisionError):
        raise ConfigError("config.noise.epsilon", "expected a number or rational string") from None
    try:
        return NoiseModel(eps, spec.get("kind", "uniform"), int(spec.get("dim", dim)))
    except ValueError as exc:
        raise ConfigError("config.noise", str(exc)) from None


def parse_config(raw: dict, kind: str, seed=None) -> ExperimentConfig:
    if kind not in COMMANDS:
        raise ConfigError("command", f"unknown command {kind!r}")
    if not isinstance(raw, dict):
        raise ConfigError("config", "expected a JSON object")
    known = {"map", "noise", "zeta", "tau", "n", "trials", "seed", "observable", "estimator"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"config.{key}", "unknown key")
    default_map = "doubling" if kind in ("dichotomy", "verify") else None
    if raw.get("map", default_map) is None:
        raise ConfigError("config.map", "required")
    label, fmap, entry = _build_map(raw.get("map", default_map))
    dim = fmap.dim
    if "noise" in raw:
        noise = _build_noise(raw["noise"], dim)
    else:
        noise = entry.noise if entry is not None else None
    if "zeta" in raw:
        zeta = _parse_zeta(raw["zeta"])
    elif entry is not None:
        zeta = entry.zeta
    elif kind in ("dichotomy", "verify"):
        zeta = Fraction(0)
    else:
        raise ConfigError("config.zeta", "required")
    if (dim == 2) != isinstance(zeta, tuple):
        raise ConfigError("config.zeta", f"expected a point of dimension {dim}")

    opts = raw.get("estimator", {})
    if not isinstance(opts, dict):
        raise ConfigError("config.estimator", "expected an object")
    options = {}
    for key, v in opts.items():
        if key not in OPTIONS:
            raise ConfigError(f"config.estimator.{key}", "unknown option")
        want = OPTIONS[key]
        if want is list:
            if not isinstance(v, list) or not v:
                raise ConfigError(f"config.estimator.{key}", "expected a nonempty list")
        elif isinstance(v, bool) or not isinstance(v, (int, float)) or (want is int and int(v) != v):
            raise ConfigError(f"config.estimator.{key}", f"expected {want.__name__}")
        elif not v >= 0:
            raise ConfigError(f"config.estimator.{key}", "must be nonnegative")
        options[key] = v if want is list else want(v)
    if "ks" in options and not all(isinstance(k, int) and k >= 2 for k in options["ks"]):
        raise ConfigError("config.estimator.ks", "expected integers >= 2")

    shape = raw.get("observable", NEG_DIST)
    if shape not in (NEG_DIST, NEG_LOG_DIST):
        raise ConfigError("config.observable", f"expected {NEG_DIST!r} or {NEG_LOG_DIST!r}")

    if seed is None:
        seed = raw.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64):
        raise ConfigError("config.seed", "expected an unsigned 64-bit integer")
    if seed is None and kind in _RANDOM:
        raise ConfigError("config.seed", "required (pass --seed or set 'seed')")

    return ExperimentConfig(kind, label, fmap, noise, zeta,
                            _positive(raw, "tau", float, 1.0), _positive(raw, "n", int, 10**4),
                            _positive(raw, "trials", int, 10**4), seed, options, shape)


def _sub(seed: int, tag: str) -> int:
    h = hashlib.sha256(f"{seed}:{tag}".encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------


@dataclass
class Outcome:
    results: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)     # name -> (header, rows)
    prediction: Optional[dict] = None
    spectral: Optional[dict] = None


def _prediction(cfg: ExperimentConfig, zeta=None):
    return predict(cfg.fmap, cfg.noise, cfg.zeta if zeta is None else zeta)


def _spectral_value(cfg: ExperimentConfig, zeta=None) -> dict:
    zeta = cfg.zeta if zeta is None else zeta
    k = int(cfg.opt("ulam_k", 2**12))
    try:
        if isinstance(cfg.fmap, TorusLinearMap):
            raise ValueError("Ulam discretisation is one-dimensional")
        rep = sp.spectral_report(cfg.fmap, cfg.noise, zeta, k, K=int(cfg.opt("K", 25)))
    except (ValueError, sp.ConvergenceError) as exc:
        return {"available": False, "reason": str(exc)}
    return {"available": True, "k": k, "hole_cells": 2, "theta_ratio": rep.theta_ratio,
            "theta_series": rep.theta_series, "lambda": rep.lam, "Delta": rep.Delta}


def _batch(cfg: ExperimentConfig, threads: int, zeta=None, tag="main"):
    zeta = cfg.zeta if zeta is None else zeta
    base = observable_for(cfg.fmap, zeta)
    obs = Observable(base.zeta, cfg.shape, base.topology)
    meas = measure_for(cfg.fmap, cfg.noise, _sub(cfg.seed, "measure"))
    sched = threshold_for(meas, obs, cfg.tau, cfg.n)
    return simulate(cfg.fmap, cfg.noise, obs, sched, cfg.trials, _sub(cfg.seed, tag), threads=threads)


def _period_hint(cfg, pred) -> int:
    return int(cfg.opt("p", pred.period or 1))


def _ei_rows(cfg, threads, zeta=None, tag="main"):
    pred = _prediction(cfg, zeta)
    b = _batch(cfg, threads, zeta, tag)
    est = ex.ei_estimate(b, b.sched, p=_period_hint(cfg, pred), q=cfg.opt("q"))
    return pred, b, est


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg, threads) -> Outcome:
    pred = _prediction(cfg)
    b = _batch(cfg, threads)
    evl = ex.evl_estimate(b, b.sched)
    target = math.exp(-float(pred.theta) * cfg.tau)
    tol = cfg.opt("tol", DEFAULT_TOL["simulate"])
    spec = _spectral_value(cfg)
    if spec["available"]:
        spec["survival_prediction"] = math.exp(-spec["theta_ratio"] * cfg.tau)
    rows = [(i, len(t), float(m), int(t[0]) if len(t) else -1) for i, (t, m) in enumerate(zip(b.times, b.maxima))]
    return Outcome(
        {"threshold": {"u": b.sched.u, "radius": b.sched.radius, "mass": b.sched.mass},
         "p_hat": evl.p_hat, "se": evl.se, "predicted": target, "mean_count": float(b.counts.mean())},
        {"evl": abs(evl.p_hat - target) <= tol + 3 * evl.se},
        {"trials": (("trial", "exceedances", "maximum", "first_exceedance"), rows)},
        pred.to_dict(), spec)


def cmd_ei(cfg, threads) -> Outcome:
    pred, b, est = _ei_rows(cfg, threads)
    tol = cfg.opt("tol", DEFAULT_TOL["ei"])
    theta = float(pred.theta)
    spec = _spectral_value(cfg)
    vals = est.values()
    rows = [(name, v, s, theta, spec.get("theta_ratio")) for name, (v, s) in vals.items()]
    return Outcome(
        {"estimates": {k: {"theta": v, "se": s} for k, (v, s) in vals.items()}, "p": est.p, "q": est.q,
         "clamped": est.clamped},
        {f"theta_{k}": abs(v - theta) <= tol for k, (v, _) in vals.items()},
        {"ei": (("estimator", "theta_hat", "se", "theta_predicted", "theta_spectral"), rows)},
        pred.to_dict(), spec)


def _predicted_counts(pred, tau, kmax):
    try:
        pi = pred.law.array(pred.law.cutoff()) if pred.law.support_max is None else pred.law.array()
        return [ex.compound_poisson_pmf(float(pred.theta), pi, tau, k) for k in range(kmax + 1)]
    except ValueError:
        return None


def cmd_repp(cfg, threads) -> Outcome:
    pred = _prediction(cfg)
    b = _batch(cfg, threads)
    tol = cfg.opt("tol", DEFAULT_TOL["repp"])
    counts = b.counts
    kmax = int(counts.max()) + 5
    emp = np.bincount(counts, minlength=kmax + 1) / counts.size
    cp = _predicted_counts(pred, cfg.tau, kmax)
    q = int(cfg.opt("q", pred.period or 1))
    hist = ex.cluster_histogram(b, b.sched, q=q)
    kc = max(max(hist.pi_hat, default=1), 10)
    pi_pred = pred.pi(kc)
    verdicts = {}
    res = {"events": int(counts.sum()), "clusters": hist.clusters, "q": q,
           "mean_cluster_size": hist.mean_size(), "predicted_mean_cluster_size": 1 / float(pred.theta)}
    if cp is not None:
        res["tv_counts"] = ex.total_variation(emp, cp)
        verdicts["counts"] = res["tv_counts"] < tol
    if hist.clusters:
        res["tv_cluster_sizes"] = ex.total_variation(hist.pmf(kc), pi_pred)
        verdicts["cluster_sizes"] = res["tv_cluster_sizes"] < tol
    count_rows = [(k, float(emp[k]), None if cp is None else cp[k]) for k in range(kmax + 1)]
    cl_rows = [(k + 1, float(v), pi_pred[k]) for k, v in enumerate(hist.pmf(kc))]
    spec = _spectral_value(cfg)
    return Outcome(res, verdicts,
                   {"counts": (("k", "empirical", "predicted"), count_rows),
                    "clusters": (("size", "empirical", "predicted"), cl_rows)},
                   pred.to_dict(), spec)


def cmd_hts(cfg, threads) -> Outcome:
    pred = _prediction(cfg)
    theta = float(pred.theta)
    mass = cfg.opt("mass", 1e-3)
    tol = cfg.opt("tol", DEFAULT_TOL["hts"])
    obs = observable_for(cfg.fmap, cfg.zeta)
    meas = measure_for(cfg.fmap, cfg.noise, _sub(cfg.seed, "measure"))
    V = ht.Ball(obs.center, meas.radius_for(obs.center, mass))
    t = np.linspace(0, cfg.opt("t_max", 6.0), 601)
    hts = ht.hitting_times(cfg.fmap, cfg.noise, V, cfg.trials, _sub(cfg.seed, "hts"), ht.AMBIENT,
                           horizon=cfg.opt("horizon"), measure=meas, threads=threads)
    G = ht.hts_cdf(hts, t)
    G_pred = 1 - np.exp(-theta * t)
    res = {"mass": hts.mass, "radius": V.radius, "hts_censored": G.censored_mass,
           "max_abs_hts_vs_prediction": float(np.max(np.abs(G.G - G_pred)))}
    verdicts = {"hts": res["max_abs_hts_vs_prediction"] <= tol}
    cols = [t, G.G, G_pred]
    header = ["t", "hts_empirical", "hts_predicted"]
    try:
        rts = ht.hitting_times(cfg.fmap, cfg.noise, V, cfg.trials, _sub(cfg.seed, "rts"), ht.IN_TARGET,
                               horizon=cfg.opt("horizon"), measure=meas, threads=threads)
    except ValueError as exc:
        res["rts"] = {"available": False, "reason": str(exc)}
    else:
        R = ht.rts_cdf(rts, t)
        R_pred = np.where(t > 0, 1 - theta * np.exp(-theta * t), 1 - theta)
        Gf = ht.hts_from_rts(t, R.G)
        band = 3 * (G.se() + t * R.se().max()) + (t[1] - t[0])
        kac, kse = ht.kac_mean(rts)
        res["rts"] = {"available": True, "censored": R.censored_mass, "kac_mean": kac, "kac_se": kse,
                      "max_abs_rts_vs_prediction": float(np.max(np.abs(R.G - R_pred)[1:])),
                      "max_abs_hts_vs_hts_from_rts": float(np.max(np.abs(G.G - Gf))),
                      "band_excess": float(np.max(np.abs(G.G - Gf) - band))}
        verdicts["rts"] = res["rts"]["max_abs_rts_vs_prediction"] <= tol
        verdicts["hts_from_rts"] = res["rts"]["band_excess"] <= 0
        verdicts["kac"] = 0.97 <= kac <= 1.03
        cols += [R.G, R_pred, Gf]
        header += ["rts_empirical", "rts_predicted", "hts_from_rts"]
    rows = [tuple(float(c[i]) for c in cols) for i in range(t.size)]
    return Outcome(res, verdicts, {"hts": (tuple(header), rows)}, pred.to_dict(), _spectral_value(cfg))


def cmd_spectral(cfg, threads) -> Outcome:
    pred = _prediction(cfg)
    ks = [int(k) for k in cfg.opt("ks", [2**10, 2**12])]
    tol = cfg.opt("tol", DEFAULT_TOL["spectral"])
    K = int(cfg.opt("K", 25))
    try:
        ladder = sp.refinement_ladder(cfg.fmap, cfg.noise, cfg.zeta, ks, K=K)
    except ValueError as exc:
        raise ConfigError("config.map", str(exc)) from None
    fin = ladder[-1]
    theta = float(pred.theta)
    verdicts = {"theta_ratio": abs(fin.theta_ratio - theta) <= tol, "ratio_vs_series": fin.gap <= 0.01}

    # Monte Carlo survival on the coarsest snapped hole
    k0 = ks[0]
    M = sp.ulam_build(cfg.fmap, k0) if cfg.noise is None else sp.ulam_random(cfg.fmap, cfg.noise, k0)
    hole = sp.hole_around(cfg.zeta, k0, 2)
    h = sp.stationary_density(M)
    Mt = sp.open_operator(M, hole)
    D = sp.delta(M, Mt, h)
    m = int(math.ceil(cfg.tau / D))
    surv = sp.survival(Mt, h, m)
    center, radius = hole.ball()
    obs = observable_for(cfg.fmap, center)
    sched = ThresholdSchedule(cfg.tau, m, -float(radius), float(radius), float(2 * radius))
    b = simulate(cfg.fmap, cfg.noise, obs, sched, cfg.trials, _sub(cfg.seed, "oracle"), threads=threads)
    evl = ex.evl_estimate(b, sched)
    allow = 3 * evl.se + 2 / k0
    verdicts["survival_vs_monte_carlo"] = abs(surv - evl.p_hat) <= allow
    ladder_rows = [(r.k, r.lam, r.Delta, r.theta_ratio, r.theta_series, r.gap, float(r.q.max()), r.tail)
                   for r in ladder]
    q_rows = [(r.k, j, float(v)) for r in ladder for j, v in enumerate(r.q)]
    return Outcome(
        {"ladder": [r.to_dict() for r in ladder],
         "oracle": {"k": k0, "m": m, "survival": surv, "p_hat": evl.p_hat, "se": evl.se, "allowance": allow}},
        verdicts,
        {"ladder": (("k", "lambda", "Delta", "theta_ratio", "theta_series", "gap", "max_q", "tail"), ladder_rows),
         "qk": (("k", "index", "q"), q_rows)},
        pred.to_dict(),
        {"available": True, "k": fin.k, "theta_ratio": fin.theta_ratio, "theta_series": fin.theta_series})


def cmd_dichotomy(cfg, threads) -> Outcome:
    points = cfg.opt("points") or ["0", "1/3", "golden"]
    tol = cfg.opt("tol", DEFAULT_TOL["dichotomy"])
    rows, results, verdicts, preds, specs = [], {}, {}, {}, {}
    for i, raw in enumerate(points):
        z = _parse_zeta(raw, f"config.estimator.points[{i}]")
        pred, _, est = _ei_rows(cfg, threads, z, tag=f"point{i}")
        spec = _spectral_value(cfg, z)
        theta = float(pred.theta)
        key = str(raw)
        results[key] = {k: {"theta": v, "se": s} for k, (v, s) in est.values().items()}
        preds[key] = pred.to_dict()
        specs[key] = spec
        for name, (v, s) in est.values().items():
            verdicts[f"{key}:{name}"] = abs(v - theta) <= tol
            rows.append((key, name, v, s, theta, spec.get("theta_ratio")))
    return Outcome({"estimates": results}, verdicts,
                   {"dichotomy": (("zeta", "estimator", "theta_hat", "se", "theta_predicted", "theta_spectral"), rows)},
                   preds, specs)


def cmd_short_return(cfg, threads) -> Outcome:
    if cfg.noise is None:
        raise ConfigError("config.noise", "short-return needs a noise model")
    pred = _prediction(cfg)
    obs = observable_for(cfg.fmap, cfg.zeta)
    sched = threshold_for(measure_for(cfg.fmap, cfg.noise, _sub(cfg.seed, "measure")), obs, cfg.tau, cfg.n)
    rep = ht.short_return_prob(cfg.fmap, cfg.noise, obs.center, sched, cfg.opt("alpha_n"), cfg.trials,
                               _sub(cfg.seed, "short"))
    res = {"alpha_n": rep.alpha_n, "p_hat": rep.p_hat, "se": rep.se, "bound": rep.bound,
           "diameter": rep.diameter}
    return Outcome(res, {"within_bound": rep.within_bound},
                   {"short_return": (("alpha_n", "p_hat", "se", "bound"),
                                     [(rep.alpha_n, rep.p_hat, rep.se, rep.bound)])},
                   pred.to_dict(), _spectral_value(cfg))


def cmd_classify(cfg, threads) -> Outcome:
    if not getattr(cfg.fmap, "exact_affine", False) or not isinstance(cfg.zeta, Fraction):
        raise ConfigError("config.zeta", "classification needs an exact-affine map and a rational point")
    cls = classify(cfg.fmap, cfg.zeta, int(cfg.opt("horizon", 10_000)))
    d = cls.to_dict()
    print(json.dumps(d, indent=2))
    return Outcome({"classification": d}, {}, {}, _prediction(cfg).to_dict(), None)


def cmd_verify(cfg, threads) -> Outcome:
    suite = Suite(seed=cfg.seed if cfg.seed is not None else 20240601, threads=threads)
    only = cfg.opt("criteria")
    results = suite.run_all(only, echo=print)
    rows = [(r.number, r.title, r.passed, r.summary) for r in results]
    return Outcome({"criteria": [r.to_dict() for r in results]},
                   {f"criterion{r.number}": r.passed for r in results},
                   {"criteria": (("number", "title", "passed", "summary"), rows)},
                   None, None), {f"criterion{r.number}": r.seconds for r in results}


HANDLERS = {
    "simulate": cmd_simulate, "ei": cmd_ei, "repp": cmd_repp, "hts": cmd_hts, "rts": cmd_hts,
    "spectral": cmd_spectral, "dichotomy": cmd_dichotomy, "short-return": cmd_short_return,
    "classify": cmd_classify, "verify": cmd_verify,
}


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for v in r])


def run(cfg: ExperimentConfig, out: Path, threads: int = 1) -> dict:
    """Run one command and write its report; returns the report dict."""
    t0 = time.perf_counter()
    got = HANDLERS[cfg.kind](cfg, threads)
    extra_timing = {}
    if isinstance(got, tuple):
        got, extra_timing = got
    wall = time.perf_counter() - t0
    report = {
        "command": cfg.kind,
        "config_hash": cfg.digest(),
        "config": cfg.canonical(),
        "results": got.results,
        "prediction": got.prediction,
        "spectral": got.spectral,
        "verdicts": got.verdicts,
        "passed": all(got.verdicts.values()),
    }
    report = _clean(report)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "timing.json", "w") as fh:
        json.dump({"config_hash": report["config_hash"], "wall_seconds": wall, "threads": threads,
                   "parts": extra_timing}, fh, indent=2)
        fh.write("\n")
    for name, (header, rows) in got.tables.items():
        _write_csv(out / f"{name}.csv", header, rows)
    return report


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evlab", description="Extreme value and hitting time experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", type=Path, default=Path("evlab-out"), help="output directory")
        p.add_argument("--threads", type=int, help="worker threads (default: $EVLAB_THREADS or 1)")
        p.add_argument("--map", help="catalogue entry or named map (overrides the config)")
        p.add_argument("--zeta", help="target point (overrides the config)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = {}
        if args.config is not None:
            try:
                raw = json.loads(args.config.read_text())
            except OSError as exc:
                raise ConfigError("--config", str(exc)) from None
            except json.JSONDecodeError as exc:
                raise ConfigError("config", f"invalid JSON ({exc})") from None
            if not isinstance(raw, dict):
                raise ConfigError("config", "expected a JSON object")
        if args.map is not None:
            raw = {k: v for k, v in raw.items() if k not in ("noise", "zeta")} if args.map in CATALOGUE else dict(raw)
            raw["map"] = args.map
        if args.zeta is not None:
            raw["zeta"] = args.zeta
        cfg = parse_config(raw, args.command, args.seed)
        report = run(cfg, args.out, resolve_threads(args.threads))
    except ConfigError as exc:
        print(f"evlab: configuration error: {exc}", file=sys.stderr)
        return 2
    for key, ok in report["verdicts"].items():
        print(f"{'PASS' if ok else 'FAIL'} {key}")
    print(f"report: {args.out / 'report.json'}")
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
