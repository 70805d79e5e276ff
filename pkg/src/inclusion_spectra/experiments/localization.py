"""Localization probes: resolvent decay, suitability events, projector kernels, wave-packet moments."""
from __future__ import annotations

import math
import time

import numpy as np

from .. import spectral_engine as se
from ..discretization import OpenBox, belt, centered_box, mask_for_region
from .bands import _finish
from .config import ExperimentConfig, ExperimentReport, InvariantViolation
from .harness import lowest, mean_ci, operator, realize, run_realizations, window_solve


def _cell_box(config: ExperimentConfig, cell) -> OpenBox:
    eps = config.model.epsilon
    return OpenBox(tuple(float(c) * eps for c in cell), eps, tag="cell")


def _axis_cells(config: ExperimentConfig, L: float) -> list[tuple[int, ...]]:
    n = round(L / config.model.epsilon)
    mid = n // 2
    d = config.model.d
    return [(j,) + (mid,) * (d - 1) for j in range(n)]


def _block_norm(config, A, F, rows, cols, E):
    tol = 1e-10 if config.oracle_dense else 1e-6
    val = se.block_resolvent_norm(A, F, rows, cols, tol=tol)
    if config.oracle_dense:
        ref = se.dense_block_norm(A, E, rows, cols)
        if abs(val - ref) > 1e-6 * max(ref, 1e-300):
            raise InvariantViolation(f"block norm {val} != dense {ref}")
    return val


def slope_fit(x, y) -> dict:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return {"slope": float(coef[0]), "intercept": float(coef[1])}


# --- Combes-Thomas -----------------------------------------------------------


def _ct_realization(config: ExperimentConfig, index: int) -> list[dict]:
    out = []
    for L in config.box_sides:
        real = realize(config, L, index)
        A = operator(config, real)
        lam_min = float(lowest(config, A, 1)[0])
        cells = _axis_cells(config, L)
        masks = [mask_for_region(real.grid, _cell_box(config, c)).indices for c in cells]
        dist = [abs(c[0] - cells[0][0]) * config.model.epsilon for c in cells]
        slopes = []
        for f in config.g_fractions:
            g = f * lam_min
            E = lam_min - g
            F = se.factor(A, E)
            norms = [_block_norm(config, A, F, masks[0], m, E) for m in masks]
            fit = slope_fit(dist, np.log(norms))
            slopes.append(fit["slope"])
            out.append(
                {"realization": index, "L": L, "g_fraction": f, "g": g, "E": E, "lambda_min": lam_min,
                 "distances": dist, "norms": [float(v) for v in norms], "slope": fit["slope"],
                 "C_CT_linear": abs(fit["slope"]) / g, "C_CT_sqrt": abs(fit["slope"]) / math.sqrt(g)}
            )
    return out


def combes_thomas_probe(config: ExperimentConfig) -> ExperimentReport:
    """Decay of cell-to-cell resolvent blocks below the spectrum."""
    started = time.perf_counter()
    records = [r for batch in run_realizations(_ct_realization, config) for r in batch]
    flags = []
    order = np.argsort(config.g_fractions)
    by_real: dict[tuple, list] = {}
    for r in records:
        by_real.setdefault((r["realization"], r["L"]), []).append(r)
        if not r["slope"] < 0:
            flags.append(f"non-negative decay slope at realization {r['realization']}, g={r['g']}")
    for key, recs in by_real.items():
        s = np.array([x["slope"] for x in recs])[order]
        if np.any(np.diff(s) >= 0):
            flags.append(f"slope not steeper for larger g at realization {key[0]}, L={key[1]}")
    fits, curves = [], []
    for L in config.box_sides:
        for j, f in enumerate(config.g_fractions):
            recs = [x for x in records if x["L"] == L and x["g_fraction"] == f]
            m, lo, hi = mean_ci([x["slope"] for x in recs])
            fits.append({"L": L, "g_fraction": f, "slope_mean": m, "ci": [lo, hi],
                         "C_CT_linear_mean": float(np.mean([x["C_CT_linear"] for x in recs]))})
            dist = recs[0]["distances"]
            mean_log = np.mean([np.log(x["norms"]) for x in recs], axis=0)
            curves.append({"L": L, "sweep": f"g{f:g}", "columns": ["distance", "log_norm"], "rows": [[a, float(b)] for a, b in zip(dist, mean_log)], "fit": {"slope": m}})
    report = ExperimentReport("combes-thomas", config.to_dict(), records, {"fits": fits}, curves)
    report.flags.extend(flags)
    return _finish(report, started)


# --- suitability -------------------------------------------------------------


def _suit_realization(config: ExperimentConfig, index: int) -> list[dict]:
    out = []
    eps = config.model.epsilon
    for L in config.box_sides:
        real = realize(config, L, index)
        A = operator(config, real)
        rows = mask_for_region(real.grid, belt(real.grid.box, eps)).indices
        cols = mask_for_region(real.grid, centered_box(real.grid.box, L / 3.0)).indices
        if config.e0 is None:
            e0 = float(lowest(config, A, 1)[0]) - 1.0
        else:
            e0 = config.e0
        energies = np.linspace(e0, e0 + 0.5 * L**-0.5, config.n_energy)
        norms, skipped = [], []
        for E in energies:
            try:
                F = se.factor_perturbed(A, float(E))
            except se.UnresolvedShiftError:
                skipped.append(float(E))
                continue
            norms.append(_block_norm(config, A, F, rows, cols, F.shift))
        worst = max(norms) if norms else math.nan
        good = [int(bool(norms) and worst <= L ** (-th)) for th in config.theta_list]
        out.append({"realization": index, "L": L, "e0": e0, "norms": [float(v) for v in norms], "max_norm": worst, "suitable": good, "skipped": skipped})
    return out


def suitability_mc(config: ExperimentConfig) -> ExperimentReport:
    """P[ ||chi_belt (A - E)^-1 chi_centre|| <= L^-theta on the whole energy grid ]."""
    started = time.perf_counter()
    records = [r for batch in run_realizations(_suit_realization, config) for r in batch]
    R = config.realizations
    table, curves, flags = [], [], []
    for j, th in enumerate(config.theta_list):
        rows = []
        for L in config.box_sides:
            k = sum(r["suitable"][j] for r in records if r["L"] == L)
            table.append({"L": L, "theta": th, "probability": k / R})
            rows.append([L, k / R])
        curves.append({"L": "all", "sweep": f"theta{th:g}", "columns": ["L", "probability"], "rows": rows, "fit": {}})
    th_order = np.argsort(config.theta_list)
    for L in config.box_sides:
        probs = np.array([t["probability"] for t in table if t["L"] == L])[th_order]
        if np.any(np.diff(probs) > 0):
            flags.append(f"suitability probability grows with theta at L={L}")
    summary = {"table": table, "skipped_energies": sum(len(r["skipped"]) for r in records)}
    report = ExperimentReport("suitability", config.to_dict(), records, summary, curves)
    report.flags.extend(flags)
    return _finish(report, started)


# --- projector kernel decay --------------------------------------------------


def _window_pairs(config: ExperimentConfig, A, L: float):
    if config.window is not None:
        es = window_solve(config, A, config.window[0], config.window[1], L)
    else:
        es = se.lowest_eigenpairs(A, config.n_eigs, tol_eig=config.tol_eig)
    return es


def _unit_boxes(config: ExperimentConfig, L: float) -> tuple[list, list]:
    """Unit boxes along axis 0 at lattice offsets, and a disjoint tiling for the sum rule."""
    eps = config.model.epsilon
    d = config.model.d
    n_off = round((L - 1.0) / eps)
    mid = round((L - 1.0) / 2.0 / eps) * eps
    row = [OpenBox((j * eps,) + (mid,) * (d - 1), 1.0, tag="unit") for j in range(n_off + 1)]
    m = int(math.floor(L + 1e-12))
    grids = np.meshgrid(*[np.arange(m)] * d, indexing="ij")
    tiles = [OpenBox(tuple(float(g.ravel()[i]) for g in grids), 1.0, tag="tile") for i in range(m**d)]
    return row, tiles


def stretched_fit(r, y) -> dict:
    """Fit log y = b - c r^zeta by scanning zeta in (0, 2]."""
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (r > 0) & (y > 0)
    r, ly = r[keep], np.log(y[keep])
    if r.size < 3:
        return {"zeta": math.nan, "rate": math.nan, "intercept": math.nan}
    best = None
    for zeta in np.linspace(0.05, 2.0, 40):
        X = np.vstack([np.ones_like(r), -(r**zeta)]).T
        coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
        sse = float(((X @ coef - ly) ** 2).sum())
        if best is None or sse < best[0]:
            best = (sse, zeta, coef)
    _, zeta, coef = best
    return {"zeta": float(zeta), "rate": float(coef[1]), "intercept": float(coef[0])}


def _proj_realization(config: ExperimentConfig, index: int) -> list[dict]:
    out = []
    for L in config.box_sides:
        real = realize(config, L, index)
        A = operator(config, real)
        es = _window_pairs(config, A, L)
        V = es.vectors
        row, tiles = _unit_boxes(config, L)
        grams = []
        for bx in row:
            idx = mask_for_region(real.grid, bx, allow_empty=True).indices
            grams.append(V[idx].T @ V[idx])
        hs2 = [float(np.sum(grams[0] * G)) for G in grams]
        diag_sum = 0.0
        for bx in tiles:
            idx = mask_for_region(real.grid, bx, allow_empty=True).indices
            G = V[idx].T @ V[idx]
            diag_sum += float(np.sum(G * G))
        eps = config.model.epsilon
        out.append({"realization": index, "L": L, "rank": int(V.shape[1]), "distances": [j * eps for j in range(len(row))], "hs2": hs2, "diag_sum": diag_sum})
    return out


def projector_decay(config: ExperimentConfig) -> ExperimentReport:
    """Hilbert-Schmidt norms of unit-box blocks of the window spectral projector."""
    started = time.perf_counter()
    records = [r for batch in run_realizations(_proj_realization, config) for r in batch]
    flags = [f"diagonal HS sum {r['diag_sum']} exceeds rank {r['rank']}" for r in records if r["diag_sum"] > r["rank"] + 1e-9]
    fits, curves = [], []
    for L in config.box_sides:
        recs = [r for r in records if r["L"] == L]
        dist = recs[0]["distances"]
        mean_hs = np.mean([r["hs2"] for r in recs], axis=0)
        fit = stretched_fit(dist, mean_hs)
        fits.append({"L": L, **fit, "empty_window": all(r["rank"] == 0 for r in recs)})
        curves.append({"L": L, "sweep": "distance", "columns": ["distance", "mean_hs2"], "rows": [[a, float(b)] for a, b in zip(dist, mean_hs)], "fit": fit})
    summary = {"fits": fits, "proxy": "f = 1 (window projector); sup over Borel f not computed"}
    report = ExperimentReport("projector-decay", config.to_dict(), records, summary, curves)
    report.flags.extend(flags)
    return _finish(report, started)


# --- dynamics ----------------------------------------------------------------


def centre_cell_state(config: ExperimentConfig, grid) -> np.ndarray:
    eps = config.model.epsilon
    n = round(grid.side / eps)
    cell = tuple(float(o) + (n // 2) * eps for o in grid.box.origin)
    idx = mask_for_region(grid, OpenBox(cell, eps, tag="cell")).indices
    psi = np.zeros(grid.n)
    psi[idx] = 1.0
    return psi / np.linalg.norm(psi)


def _dyn_realization(config: ExperimentConfig, index: int) -> list[dict]:
    out = []
    order = config.moment_order
    for L in config.box_sides:
        real = realize(config, L, index)
        A = operator(config, real)
        es = _window_pairs(config, A, L)
        V = es.vectors
        psi0 = centre_cell_state(config, real.grid)
        psi = V @ (V.T @ psi0)
        x = real.grid.coords()
        c = real.grid.box.center
        weight = np.sqrt(((x - c) ** 2).sum(axis=1)) ** order
        norm0 = float(np.linalg.norm(psi))
        times = sorted(config.times)
        u = psi.astype(complex)
        t_prev = 0.0
        moments, drift, err = [], [], []
        for t in times:
            u = se.chebyshev_evolve(A, u, t - t_prev, tol=config.cheb_tol)
            t_prev = t
            exact = V @ (np.exp(-1j * t * es.values) * (V.T @ psi))
            moments.append(float(np.sum(weight * np.abs(u) ** 2)))
            drift.append(abs(float(np.linalg.norm(u)) - norm0))
            err.append(float(np.linalg.norm(u - exact)))
        out.append({"realization": index, "L": L, "times": times, "moments": moments, "norm0": norm0, "norm_drift": drift, "spectral_error": err, "moment_cap": float(weight.max()) * norm0**2})
    return out


def dynamical_moments(config: ExperimentConfig) -> ExperimentReport:
    """Spatial moments of an evolved, spectrally filtered centre-cell packet."""
    started = time.perf_counter()
    records = [r for batch in run_realizations(_dyn_realization, config) for r in batch]
    flags = []
    for r in records:
        if not all(math.isfinite(m) and m <= r["moment_cap"] * (1 + 1e-9) for m in r["moments"]):
            flags.append(f"moment out of bounds at realization {r['realization']}")
        if max(r["norm_drift"]) > 1e-8:
            flags.append(f"norm drift {max(r['norm_drift']):.2e} at realization {r['realization']}")
    curves, sup = [], []
    for L in config.box_sides:
        recs = [r for r in records if r["L"] == L]
        times = recs[0]["times"]
        mean_m = np.mean([r["moments"] for r in recs], axis=0)
        sup.append({"L": L, "sup_moment": float(max(max(r["moments"]) for r in recs)), "mean_sup_moment": float(np.mean([max(r["moments"]) for r in recs]))})
        curves.append({"L": L, "sweep": "time", "columns": ["t", "mean_moment"], "rows": [[t, float(m)] for t, m in zip(times, mean_m)], "fit": {}})
    summary = {"sup": sup, "order": config.moment_order, "max_spectral_error": max(max(r["spectral_error"]) for r in records)}
    report = ExperimentReport("dynamics", config.to_dict(), records, summary, curves)
    report.flags.extend(flags)
    return _finish(report, started)
