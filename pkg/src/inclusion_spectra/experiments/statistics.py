"""Monte Carlo drivers for window-count statistics and the initial-scale event."""
from __future__ import annotations

import math
import time
from dataclasses import replace

import numpy as np

from .. import spectral_engine as se
from ..random_medium import ConfigurationError
from .bands import _finish, lifting_curve
from .config import ExperimentConfig, ExperimentReport, InvariantViolation
from .harness import binomial_ci, loglog_fit, mean_ci, operator, realize, run_realizations


class _Counter:
    """Eigenvalue counting N(E) = #{lambda <= E} with cached inertias."""

    def __init__(self, A, dense: bool = False):
        self.A = A
        self.cache: dict[float, int] = {}
        self.floor, self.ceil = se.gershgorin(A)
        self.dense = se.dense_eigvalsh(A) if dense else None

    def below(self, E: float) -> int:
        if E < self.floor:
            return 0
        if E >= self.ceil:
            return self.A.n
        if E not in self.cache:
            self.cache[E] = se.count_below(self.A, E)
        return self.cache[E]

    def window(self, a: float, b: float) -> int:
        c = self.below(b) - self.below(a)
        if self.dense is not None:
            ref = se.dense_count(self.dense, a, b)
            if ref != c:
                raise InvariantViolation(f"inertia count {c} != dense count {ref} in ({a}, {b}]")
        return c


# --- Wegner ------------------------------------------------------------------


def _wegner_realization(config: ExperimentConfig, index: int) -> list[dict]:
    out = []
    for L in config.box_sides:
        real = realize(config, L, index)
        counter = _Counter(operator(config, real), dense=config.oracle_dense)
        for E in config.energies:
            counts = [counter.window(E - f * E, E + f * E) for f in config.delta_fractions]
            out.append({"realization": index, "L": L, "E": E, "counts": counts})
    return out


def wegner_mc(config: ExperimentConfig) -> ExperimentReport:
    """Mean eigenvalue count in (E - delta, E + delta] against delta and L."""
    started = time.perf_counter()
    records = [r for batch in run_realizations(_wegner_realization, config) for r in batch]
    R = config.realizations
    fr = np.asarray(config.delta_fractions)
    order = np.argsort(fr)
    table = []
    curves = []
    flags = []
    delta_fits = {}
    for L in config.box_sides:
        for E in config.energies:
            C = np.array([r["counts"] for r in records if r["L"] == L and r["E"] == E], dtype=float)
            stats_ = [mean_ci(C[:, j]) for j in range(len(fr))]
            means = np.array([s[0] for s in stats_])
            deltas = fr * E
            if np.any(np.diff(means[order]) < 0):
                flags.append(f"mean count decreases in delta at L={L}, E={E}")
            usable = means >= 1.0 / R
            fit = loglog_fit(deltas[usable], means[usable])
            delta_fits[f"L={L:g},E={E:g}"] = fit
            rows = []
            for j in order:
                m, lo, hi = stats_[j]
                rows.append([float(deltas[j]), m, lo, hi])
                table.append({"L": L, "E": E, "delta": float(deltas[j]), "mean": m, "ci_low": lo, "ci_high": hi})
            curves.append({"L": L, "sweep": f"delta-E{E:g}", "columns": ["delta", "mean_count", "ci_low", "ci_high"], "rows": rows, "fit": {"delta_slope": fit["slope"], "ci": fit["ci"]}})
    L_fits = {}
    if len(config.box_sides) > 1:
        for E in config.energies:
            for f in config.delta_fractions:
                means = [next(t["mean"] for t in table if t["L"] == L and t["E"] == E and t["delta"] == f * E) for L in config.box_sides]
                if np.any(np.diff(means) < 0):
                    flags.append(f"mean count decreases in L at E={E}, delta={f * E}")
                L_fits[f"E={E:g},delta={f * E:g}"] = loglog_fit(config.box_sides, means)
    summary = {"table": table, "delta_fits": delta_fits, "L_fits": L_fits, "noise_floor": 1.0 / R}
    report = ExperimentReport("wegner", config.to_dict(), records, summary, curves)
    report.flags.extend(flags)
    return _finish(report, started)


# --- initial scale estimate --------------------------------------------------


def event_probability_closed_form(config: ExperimentConfig, L: float, s: float) -> float:
    """P[every omega_z < omega_+ - s] over the (L/eps)^d cells of the box."""
    p = config.model
    n_cells = round(L / p.epsilon) ** p.d
    tail = p.density.upper_tail(s, p.omega_minus, p.omega_plus)
    return (1.0 - tail) ** n_cells


def union_bound(config: ExperimentConfig, L: float, s: float, constant: float = 1.0) -> float:
    p = config.model
    kappa = p.density.kappa if p.density.kappa is not None else 1.0
    return 1.0 - (L / p.epsilon) ** p.d * constant * s**kappa


def _scales(config: ExperimentConfig, tau: float, L: float) -> list[float]:
    return [L ** (-c3 / tau) for c3 in config.c3_list]


def _ise_realization(config: ExperimentConfig, index: int, tau: float) -> list[dict]:
    out = []
    E0 = config.e0
    for L in config.box_sides:
        real = realize(config, L, index)
        counter = _Counter(operator(config, real), dense=config.oracle_dense)
        a = E0 - 1e-12 * max(1.0, abs(E0))  # closed at E0
        hits = [int(counter.window(a, E0 + L ** (-c3)) > 0) for c3 in config.c3_list]
        vmax = float(real.radii.values.max())
        thresholds = list(config.s_list) + _scales(config, tau, L)
        events = [int(vmax < config.model.omega_plus - s) for s in thresholds]
        out.append({"realization": index, "L": L, "hits": hits, "max_radius": vmax, "events": events})
    return out


def _ise_task(args):
    config, index, tau = args
    return _ise_realization(config, index, tau)


def ise_mc(config: ExperimentConfig) -> ExperimentReport:
    """Probability that the box spectrum meets [E0, E0 + L^-C3], plus the radius event."""
    if config.e0 is None:
        raise ConfigurationError("ise needs e0 (a lower band edge)")
    if config.coefficient != "random":
        raise ConfigurationError("ise needs the random coefficient")
    started = time.perf_counter()
    tau = config.tau
    tau_source = "config"
    if tau is None:
        sub = replace(config, realizations=min(config.realizations, 5), box_sides=config.box_sides[:1], n_eigs=min(config.n_eigs, 5))
        tau = lifting_curve(sub).summary["tau_hat"]
        tau_source = "lifting fit"
    if not tau > 0:
        raise InvariantViolation(f"fitted lifting exponent {tau} is not positive")
    if config.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            batches = list(pool.map(_ise_task, [(config, i, tau) for i in range(config.realizations)]))
    else:
        batches = [_ise_realization(config, i, tau) for i in range(config.realizations)]
    records = [r for b in batches for r in b]
    R = config.realizations
    p = config.model
    hit_table, event_table, curves, flags = [], [], [], []
    for L in config.box_sides:
        H = np.array([r["hits"] for r in records if r["L"] == L])
        probs = []
        for j, c3 in enumerate(config.c3_list):
            k = int(H[:, j].sum())
            lo, hi = binomial_ci(k, R)
            probs.append(k / R)
            hit_table.append({"L": L, "C3": c3, "probability": k / R, "ci_low": lo, "ci_high": hi, "target": L ** (-config.c4)})
        order = np.argsort(config.c3_list)
        if np.any(np.diff(np.asarray(probs)[order]) > 0):
            flags.append(f"ISE probability increases with C3 at L={L}")
        curves.append({"L": L, "sweep": "c3", "columns": ["C3", "probability"], "rows": [[c, q] for c, q in zip(config.c3_list, probs)], "fit": {"tau": tau}})
        Ev = np.array([r["events"] for r in records if r["L"] == L])
        thresholds = list(config.s_list) + _scales(config, tau, L)
        labels = ["s_list"] * len(config.s_list) + [f"s_L(C3={c})" for c in config.c3_list]
        rows = []
        for j, (s, lab) in enumerate(zip(thresholds, labels)):
            k = int(Ev[:, j].sum())
            exact = event_probability_closed_form(config, L, s)
            sigma = math.sqrt(exact * (1 - exact) / R)
            z = (k / R - exact) / sigma if sigma > 0 else (0.0 if k / R == exact else math.inf)
            C = p.density.thinness_constant(p.omega_minus, p.omega_plus)
            event_table.append(
                {"L": L, "s": s, "source": lab, "empirical": k / R, "closed_form": exact, "z": z,
                 "union_bound": union_bound(config, L, s), "union_bound_with_constant": union_bound(config, L, s, C if math.isfinite(C) else 1.0)}
            )
            rows.append([s, k / R, exact])
        curves.append({"L": L, "sweep": "event", "columns": ["s", "empirical", "closed_form"], "rows": rows, "fit": {}})
    summary = {"tau": tau, "tau_source": tau_source, "hit_probability": hit_table, "event_probability": event_table, "max_abs_z": max((abs(e["z"]) for e in event_table), default=0.0)}
    report = ExperimentReport("ise", config.to_dict(), records, summary, curves)
    report.flags.extend(flags)
    return _finish(report, started)
