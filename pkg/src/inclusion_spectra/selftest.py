"""Dense-oracle self test on small grids (at most 12 nodes per axis)."""
from __future__ import annotations

import time
import warnings

import numpy as np

from . import spectral_engine as se
from .discretization import UnderResolvedWarning, assemble_operator, build_grid, constant_coefficient
from .random_medium import Box, ModelParams, eval_coefficient, sample_radii


def random_small_operators(n_media: int = 30, seed: int = 11, nodes: int = 11):
    """Random media (d=2, eps=1/4, gamma=2) on L=1 grids with ``nodes`` interior nodes per axis."""
    p = ModelParams()
    box = Box.cube(1.0, 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnderResolvedWarning)
        grid = build_grid(box, 1.0 / (nodes + 1), p)
    for i in range(n_media):
        radii = sample_radii(p, box, seed, i)
        yield assemble_operator(grid, lambda x, r=radii: eval_coefficient(p, r, x))


def oracle_suite(n_media: int = 30, windows_per_medium: int = 10, seed: int = 11) -> dict:
    """Inertia counts and Lanczos eigenvalues against numpy's dense eigensolver."""
    rng = np.random.default_rng(seed)
    count_mismatch = 0
    windows = 0
    worst_rel = 0.0
    for A in random_small_operators(n_media, seed):
        ev = se.dense_eigvalsh(A)
        lo, hi = ev[0], ev[-1]
        for _ in range(windows_per_medium):
            a, b = np.sort(rng.uniform(lo - 1.0, hi + 1.0, 2))
            windows += 1
            if se.count_eigenvalues(A, a, b) != se.dense_count(ev, a, b):
                count_mismatch += 1
        # Lanczos on a window holding about 15 eigenvalues
        j = rng.integers(0, len(ev) - 16)
        a, b = 0.5 * (ev[j] + ev[j + 1]), 0.5 * (ev[j + 15] + ev[j + 16])
        es = se.eigenpairs_in_window(A, a, b)
        ref = ev[(ev > a) & (ev <= b)]
        if es.values.size != ref.size:
            worst_rel = np.inf
        else:
            worst_rel = max(worst_rel, float(np.max(np.abs(es.values - ref) / np.abs(ref))))
    return {"media": n_media, "windows": windows, "count_mismatches": count_mismatch, "lanczos_max_rel_err": worst_rel}


def laplacian_eigenvalues(h: float, L: float, d: int) -> np.ndarray:
    """Closed-form Dirichlet eigenvalues of the standard (2d+1)-point Laplacian."""
    m = round(L / h) - 1
    k = np.arange(1, m + 1)
    one = 4.0 / h**2 * np.sin(k * np.pi * h / (2 * L)) ** 2
    grids = np.meshgrid(*[one] * d, indexing="ij")
    return np.sort(sum(g.ravel() for g in grids))


def run_selftest(log=print) -> list[str]:
    started = time.perf_counter()
    failures = []

    res = oracle_suite()
    ok = res["count_mismatches"] == 0 and res["lanczos_max_rel_err"] <= 1e-8
    log(f"[{'PASS' if ok else 'FAIL'}] oracle suite: {res}")
    if not ok:
        failures.append("oracle suite")

    for d in (1, 2):
        grid = build_grid(Box.cube(1.0, d), 1 / 8)
        A = assemble_operator(grid, constant_coefficient(1.0))
        exact = laplacian_eigenvalues(1 / 8, 1.0, d)
        es = se.eigenpairs_in_window(A, 0.0, exact[-1] + 1.0)
        err = float(np.max(np.abs(es.values - exact) / exact))
        ok = err <= 1e-10
        log(f"[{'PASS' if ok else 'FAIL'}] analytic Laplacian spectrum d={d}: max rel err {err:.2e}")
        if not ok:
            failures.append(f"analytic d={d}")

    A = next(random_small_operators(1, seed=5, nodes=9))
    psi = np.random.default_rng(0).standard_normal(A.n)
    psi /= np.linalg.norm(psi)
    worst = max(
        float(np.linalg.norm(se.chebyshev_evolve(A, psi, t) - se.dense_evolve(A, psi, t))) for t in (0.1, 1.0)
    )
    ok = worst <= 1e-8
    log(f"[{'PASS' if ok else 'FAIL'}] Chebyshev propagator vs dense: {worst:.2e}")
    if not ok:
        failures.append("chebyshev")

    log(f"selftest finished in {time.perf_counter() - started:.1f}s with {len(failures)} failure(s)")
    return failures
