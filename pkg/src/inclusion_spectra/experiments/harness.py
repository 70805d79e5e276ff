"""Seeded Monte Carlo harness shared by the drivers."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .. import spectral_engine as se
from ..discretization import (
    MIDPOINT,
    Grid,
    SparseSymmetricOperator,
    assemble_operator,
    build_grid,
    constant_coefficient,
)
from ..random_medium import Box, RadiiField, eval_coefficient, eval_sharp_coefficient, sample_radii
from .config import ExperimentConfig, InvariantViolation


@dataclass
class Realization:
    index: int
    L: float
    radii: RadiiField | None
    grid: Grid


def box_for(config: ExperimentConfig, L: float) -> Box:
    # all boxes share the origin so cells coincide across sizes
    return Box.cube(L, config.model.d)


def realize(config: ExperimentConfig, L: float, index: int) -> Realization:
    box = box_for(config, L)
    grid = build_grid(
        box,
        config.grid_h,
        config.model if config.coefficient == "random" else None,
        resolution=config.resolution,
    )
    radii = None
    if config.coefficient == "random":
        radii = sample_radii(config.model, box, config.master_seed, index)
    return Realization(index, L, radii, grid)


def operator(
    config: ExperimentConfig,
    real: Realization,
    radii: RadiiField | None = None,
    sharp: bool = False,
    dilation: float = 0.0,
    face_rule: str = MIDPOINT,
) -> SparseSymmetricOperator:
    radii = radii if radii is not None else real.radii
    if radii is None:
        return assemble_operator(real.grid, constant_coefficient(1.0))
    p = config.model
    if sharp:
        coef = lambda x: eval_sharp_coefficient(p, radii, x, dilation=dilation)  # noqa: E731
    else:
        coef = lambda x: eval_coefficient(p, radii, x)  # noqa: E731
    return assemble_operator(real.grid, coef, face_rule=face_rule)


def run_realizations(fn: Callable, config: ExperimentConfig, indices=None) -> list:
    """Apply ``fn(config, index)`` over realizations; output order follows ``indices``."""
    indices = list(range(config.realizations)) if indices is None else list(indices)
    if config.workers > 1 and len(indices) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(fn, [config] * len(indices), indices))
    return [fn(config, i) for i in indices]


def weyl_ceiling(config: ExperimentConfig, L: float, E: float) -> float:
    """Dirichlet Weyl count of -eps^2 Laplacian (a lower bound of the operator) up to E."""
    d, eps = config.model.d, config.model.epsilon
    if E <= 0:
        return 0.0
    return (L / math.pi) ** d * (E / eps**2) ** (d / 2.0)


def weyl_guard(config: ExperimentConfig, L: float, E: float, count: int) -> None:
    ceiling = weyl_ceiling(config, L, E)
    if count > 10.0 * ceiling + 10:
        raise InvariantViolation(
            f"Weyl guardrail: {count} eigenvalues below {E} on L={L} exceeds 10x ceiling {ceiling:.3g}"
        )


def window_solve(config: ExperimentConfig, A, a: float, b: float, L: float) -> se.EigenSet:
    weyl_guard(config, L, b, se.count_eigenvalues(A, min(a, 0.0) - 1.0, b))
    es = se.eigenpairs_in_window(A, a, b, tol_eig=config.tol_eig, max_count=10_000)
    if config.oracle_dense:
        check_dense_window(A, a, b, es.values)
    return es


def lowest(config: ExperimentConfig, A, k: int) -> np.ndarray:
    es = se.lowest_eigenpairs(A, k, tol_eig=config.tol_eig)
    if config.oracle_dense:
        ev = se.dense_eigvalsh(A)[:k]
        if not np.allclose(es.values, ev, rtol=1e-8, atol=0):
            raise InvariantViolation("Lanczos lowest eigenvalues disagree with dense oracle")
    return es.values


def check_dense_window(A, a: float, b: float, values: np.ndarray) -> None:
    ev = se.dense_eigvalsh(A)
    ref = ev[(ev > a) & (ev <= b)]
    if ref.size != values.size:
        raise InvariantViolation(f"count {values.size} != dense count {ref.size} in ({a}, {b}]")
    if ref.size and not np.allclose(values, ref, rtol=1e-8, atol=0):
        raise InvariantViolation("window eigenvalues disagree with dense oracle")


def binomial_ci(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval."""
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return (max(0.0, mid - half), min(1.0, mid + half))


def mean_ci(x, z: float = 1.96) -> tuple[float, float, float]:
    x = np.asarray(x, dtype=float)
    m = float(x.mean())
    if x.size < 2:
        return m, m, m
    half = z * float(x.std(ddof=1)) / math.sqrt(x.size)
    return m, m - half, m + half


def loglog_fit(x, y) -> dict:
    """Least-squares slope of log y on log x with a 95% interval."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    x, y = np.log(x[keep]), np.log(y[keep])
    if x.size < 2 or np.ptp(x) == 0:
        return {"slope": math.nan, "intercept": math.nan, "ci": [math.nan, math.nan], "points": int(x.size)}
    res = stats.linregress(x, y)
    if x.size > 2:
        t = stats.t.ppf(0.975, x.size - 2)
        ci = [res.slope - t * res.stderr, res.slope + t * res.stderr]
    else:
        ci = [math.nan, math.nan]
    return {"slope": float(res.slope), "intercept": float(res.intercept), "ci": [float(c) for c in ci], "points": int(x.size)}
