"""Band-structure drivers: empirical gaps, the sharp-coefficient squeeze, eigenvalue lifting."""
from __future__ import annotations

import math
import time

import numpy as np

from .. import spectral_engine as se
from ..random_medium import ConfigurationError, shift_radii
from .config import ExperimentConfig, ExperimentReport, InvariantViolation
from .harness import (
    lowest,
    loglog_fit,
    mean_ci,
    operator,
    realize,
    run_realizations,
    window_solve,
)


def _finish(report: ExperimentReport, started: float) -> ExperimentReport:
    report.wall_clock = time.perf_counter() - started
    if report.flags:
        raise InvariantViolation("; ".join(report.flags[:5]), report=report)
    return report


def empty_intervals(values, lo: float, hi: float) -> list[tuple[float, float]]:
    """Maximal open subintervals of (lo, hi) free of the given points."""
    pts = np.unique(np.asarray(values, dtype=float))
    pts = pts[(pts > lo) & (pts < hi)]
    edges = np.concatenate([[lo], pts, [hi]])
    return [(float(a), float(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


# --- gap scan ----------------------------------------------------------------


def _gap_realization(config: ExperimentConfig, index: int) -> list[dict]:
    out = []
    for L in config.box_sides:
        real = realize(config, L, index)
        A = operator(config, real)
        rec = {"realization": index, "L": L}
        try:
            es = window_solve(config, A, -1.0, config.e_max, L)
        except se.CertifiedFailure as err:
            rec.update(status="failed", error=str(err), count=-1, eigenvalues=[])
        else:
            rec.update(status="ok", count=es.count, eigenvalues=[float(v) for v in es.values])
        out.append(rec)
    return out


def gap_scan(config: ExperimentConfig) -> ExperimentReport:
    """Energy intervals below ``e_max`` that no finite-box spectrum enters."""
    started = time.perf_counter()
    records = [r for batch in run_realizations(_gap_realization, config) for r in batch]
    ok = [r for r in records if r["status"] == "ok"]
    failed = [(r["realization"], r["L"]) for r in records if r["status"] != "ok"]
    pooled = [v for r in ok for v in r["eigenvalues"]]
    intervals = empty_intervals(pooled, 0.0, config.e_max)
    below = intervals[0] if intervals and intervals[0][0] == 0.0 else None
    interior = [iv for iv in intervals if iv[0] > 0.0 and iv[1] < config.e_max]
    interior.sort(key=lambda iv: iv[1] - iv[0], reverse=True)

    per_L = []
    prev_width = None
    for L in config.box_sides:
        vals = [v for r in ok if r["L"] == L for v in r["eigenvalues"]]
        ivs = [iv for iv in empty_intervals(vals, 0.0, config.e_max) if iv[0] > 0 and iv[1] < config.e_max]
        widest = max(ivs, key=lambda iv: iv[1] - iv[0]) if ivs else None
        width = widest[1] - widest[0] if widest else 0.0
        lam_min = [r["eigenvalues"][0] for r in ok if r["L"] == L and r["eigenvalues"]]
        per_L.append(
            {
                "L": L,
                "widest_gap": widest,
                "widest_width": width,
                "shrinkage": None if prev_width is None else prev_width - width,
                "lambda_min_mean": float(np.mean(lam_min)) if lam_min else math.nan,
            }
        )
        prev_width = width

    e0 = None
    if interior:
        lo = interior[0][0]
        above = []
        for i in range(config.realizations):
            vals = [v for r in ok if r["realization"] == i for v in r["eigenvalues"] if v > lo]
            if vals:
                above.append(min(vals))
        if above:
            e0 = {
                "gap": interior[0],
                "mean": float(np.mean(above)),
                "spread": float(np.ptp(above)),
                "samples": len(above),
            }

    summary = {
        "gap_candidates": interior[:10],
        "below_spectrum": below,
        "per_L": per_L,
        "band_edge": e0,
        "failed_realizations": failed,
    }
    curves = [
        {
            "L": L,
            "sweep": "spectrum",
            "columns": ["realization", "eigenvalue"],
            "rows": [[r["realization"], v] for r in ok if r["L"] == L for v in r["eigenvalues"]],
            "fit": {},
        }
        for L in config.box_sides
    ]
    report = ExperimentReport("gap-scan", config.to_dict(), records, summary, curves)
    return _finish(report, started)


# --- squeeze -----------------------------------------------------------------


def _squeeze_realization(config: ExperimentConfig, index: int) -> list[dict]:
    K = config.n_eigs
    out = []
    for L in config.box_sides:
        real = realize(config, L, index)
        mid = lowest(config, operator(config, real), K)
        hi = lowest(config, operator(config, real, sharp=True), K)
        # growing radii by the layer thickness eps^gamma/4 is a shift of s0 in omega units
        lo = lowest(config, operator(config, real, sharp=True, dilation=config.s0), K)
        out.append(
            {
                "realization": index,
                "L": L,
                "lower": [float(v) for v in lo],
                "smooth": [float(v) for v in mid],
                "upper": [float(v) for v in hi],
                "violations": int(np.count_nonzero(lo > mid) + np.count_nonzero(mid > hi)),
            }
        )
    return out


def squeeze_check(config: ExperimentConfig) -> ExperimentReport:
    """lambda_k(sharp, dilated) <= lambda_k(smooth) <= lambda_k(sharp), zero tolerance."""
    if config.coefficient != "random":
        raise ConfigurationError("squeeze needs the random coefficient")
    started = time.perf_counter()
    records = [r for batch in run_realizations(_squeeze_realization, config) for r in batch]
    lower_margin = np.array([np.subtract(r["smooth"], r["lower"]) for r in records])
    upper_margin = np.array([np.subtract(r["upper"], r["smooth"]) for r in records])
    total = sum(r["violations"] for r in records)
    summary = {
        "violations": total,
        "lower_margin_min": float(lower_margin.min()),
        "upper_margin_min": float(upper_margin.min()),
        "lower_margin_mean_by_k": lower_margin.mean(axis=0).tolist(),
        "upper_margin_mean_by_k": upper_margin.mean(axis=0).tolist(),
        "k1_margins_positive": bool((lower_margin[:, 0] > 0).all() and (upper_margin[:, 0] > 0).all()),
    }
    curves = []
    for L in config.box_sides:
        rows = [
            [k + 1, float(np.mean([r["lower"][k] for r in records if r["L"] == L])),
             float(np.mean([r["smooth"][k] for r in records if r["L"] == L])),
             float(np.mean([r["upper"][k] for r in records if r["L"] == L]))]
            for k in range(config.n_eigs)
        ]
        curves.append({"L": L, "sweep": "k", "columns": ["k", "lower", "smooth", "upper"], "rows": rows, "fit": {}})
    report = ExperimentReport("squeeze", config.to_dict(), records, summary, curves)
    if total:
        report.flags.append(f"squeeze violated {total} times")
    return _finish(report, started)


# --- lifting -----------------------------------------------------------------


def _lifting_realization(config: ExperimentConfig, index: int) -> list[dict]:
    K = config.n_eigs
    out = []
    for L in config.box_sides:
        real = realize(config, L, index)
        base = lowest(config, operator(config, real), K)
        deltas = []
        for f in config.shift_fractions:
            s = f * config.s0
            if s == 0:
                deltas.append(np.zeros(K))
                continue
            shrunk = shift_radii(real.radii, -s)
            lam = lowest(config, operator(config, real, radii=shrunk), K)
            deltas.append(lam - base)
        deltas = np.array(deltas)  # (n_shifts, K)
        order = np.argsort(config.shift_fractions)
        d_sorted = deltas[order]
        neg = int(np.count_nonzero(deltas < 0))
        nonmono = int(np.count_nonzero(np.diff(d_sorted, axis=0) < 0))
        out.append(
            {
                "realization": index,
                "L": L,
                "base": [float(v) for v in base],
                "shifts": [f * config.s0 for f in config.shift_fractions],
                "deltas": [float(v) for v in deltas.ravel()],
                "negative": neg,
                "nonmonotone": nonmono,
            }
        )
    return out


def lifting_curve(config: ExperimentConfig) -> ExperimentReport:
    """Eigenvalue rise when all radii shrink by s, with a log-log fit of the exponent."""
    if config.coefficient != "random":
        raise ConfigurationError("lifting needs the random coefficient")
    started = time.perf_counter()
    records = [r for batch in run_realizations(_lifting_realization, config) for r in batch]
    K = config.n_eigs
    shifts = np.array([f * config.s0 for f in config.shift_fractions])
    per_k = []
    all_s, all_d = [], []
    curves = []
    for k in range(K):
        s_k, d_k = [], []
        for r in records:
            d = np.array(r["deltas"]).reshape(len(shifts), K)[:, k]
            s_k.extend(shifts)
            d_k.extend(d)
        fit = loglog_fit(s_k, d_k)
        per_k.append({"k": k + 1, **fit})
        all_s.extend(s_k)
        all_d.extend(d_k)
    pooled = loglog_fit(all_s, all_d)
    for L in config.box_sides:
        rows = []
        for j, s in enumerate(shifts):
            vals = [np.array(r["deltas"]).reshape(len(shifts), K)[j] for r in records if r["L"] == L]
            m, lo, hi = mean_ci(np.mean(vals, axis=1))
            rows.append([float(s), m, lo, hi])
        curves.append({"L": L, "sweep": "shift", "columns": ["s", "mean_delta", "ci_low", "ci_high"], "rows": rows, "fit": {"tau_hat": pooled["slope"], "ci": pooled["ci"]}})
    negative = sum(r["negative"] for r in records)
    nonmono = sum(r["nonmonotone"] for r in records)
    summary = {
        "tau_hat": pooled["slope"],
        "tau_ci": pooled["ci"],
        "per_k": per_k,
        "negative": negative,
        "nonmonotone": nonmono,
    }
    report = ExperimentReport("lifting", config.to_dict(), records, summary, curves)
    if negative:
        report.flags.append(f"{negative} negative lifts")
    if nonmono:
        report.flags.append(f"{nonmono} non-monotone lifts")
    return _finish(report, started)
