"""Sparse symmetric spectral core.

Counting uses Sylvester inertia of a symmetric LDL^T factorization of A - E;
eigenpairs in a window come from shift-invert Lanczos with full
reorthogonalization, certified against the inertia count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.special import jv

from .discretization import SparseSymmetricOperator

PIVOT_TOL = 1e-12
PERTURB = 1e-9
MAX_PERTURB = 3


class UnresolvedShiftError(ArithmeticError):
    """Shift lies (numerically) on an eigenvalue; perturb it and retry."""

    def __init__(self, shift: float, pivot: float):
        super().__init__(f"shift {shift!r} unresolved (min |pivot| = {pivot:.3e})")
        self.shift = shift
        self.pivot = pivot


class CertifiedFailure(RuntimeError):
    """Eigensolver could not reproduce the inertia count."""


class DegreeOverflowError(RuntimeError):
    pass


def _matrix(A) -> sp.csc_matrix:
    if isinstance(A, SparseSymmetricOperator):
        A = A.matrix
    if not sp.issparse(A):
        A = sp.csr_matrix(np.asarray(A, dtype=float))
    return A


def norm_inf(A) -> float:
    A = _matrix(A)
    return float(abs(A).sum(axis=1).max())


def gershgorin(A) -> tuple[float, float]:
    A = _matrix(A)
    diag = A.diagonal()
    off = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(diag)
    return float((diag - off).min()), float((diag + off).max())


@dataclass
class ShiftedFactorization:
    """P (A - E) P^T = L D L^T with unit lower L and diagonal D."""

    shift: float
    n: int
    perm: np.ndarray
    pivots: np.ndarray
    inertia: tuple[int, int, int]
    anorm: float
    _lu: object = field(repr=False)
    _shifted: sp.csc_matrix = field(repr=False)

    @property
    def n_below(self) -> int:
        return self.inertia[0]

    @property
    def lower(self) -> sp.csc_matrix:
        return self._lu.L

    @property
    def block_diagonal(self) -> np.ndarray:
        return self.pivots

    def _raw_solve(self, rhs):
        return self._lu.solve(rhs)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return solve(self, rhs)


def _superlu_symmetric(M: sp.csc_matrix):
    return sla.splu(
        M,
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options=dict(SymmetricMode=True),
    )


def factor(A, E: float) -> ShiftedFactorization:
    """Symmetric factorization of A - E*Id with its inertia.

    Raises UnresolvedShiftError when a pivot is below 1e-12 * ||A||_inf.
    """
    M = _matrix(A)
    n = M.shape[0]
    anorm = norm_inf(M)
    shifted = (M - E * sp.identity(n, format="csr")).tocsc()
    try:
        lu = _superlu_symmetric(shifted)
    except RuntimeError:  # SuperLU reports an exactly zero pivot
        raise UnresolvedShiftError(E, 0.0) from None
    if not np.array_equal(lu.perm_r, lu.perm_c):
        # an off-diagonal pivot was taken, so U is no longer D L^T
        raise UnresolvedShiftError(E, 0.0)
    pivots = lu.U.diagonal()
    small = np.abs(pivots) < PIVOT_TOL * anorm
    if small.any():
        raise UnresolvedShiftError(E, float(np.abs(pivots).min()))
    neg = int((pivots < 0).sum())
    inertia = (neg, 0, n - neg)
    return ShiftedFactorization(E, n, lu.perm_c.copy(), pivots, inertia, anorm, lu, shifted)


def factor_perturbed(A, E: float) -> ShiftedFactorization:
    """factor(), stepping E upward by 1e-9 ||A||_inf up to three times."""
    eta = PERTURB * norm_inf(A)
    last = None
    for k in range(MAX_PERTURB + 1):
        try:
            return factor(A, E + k * eta)
        except UnresolvedShiftError as err:
            last = err
    raise last


def solve(F: ShiftedFactorization, rhs: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Solve (A - E) x = rhs with one step of iterative refinement."""
    rhs = np.asarray(rhs)
    if not np.any(rhs):
        return np.zeros_like(rhs, dtype=np.result_type(rhs, float))
    x = F._raw_solve(rhs)
    r = rhs - F._shifted @ x
    x = x + F._raw_solve(r)
    r = rhs - F._shifted @ x
    if np.linalg.norm(r) > rtol * np.linalg.norm(rhs):
        # fall back to partial pivoting; no inertia needed here
        lu = sla.splu(F._shifted, diag_pivot_thresh=1.0)
        x = lu.solve(rhs)
        x = x + lu.solve(rhs - F._shifted @ x)
    return x


def count_below(A, E: float) -> int:
    """Number of eigenvalues <= E (with the +eta perturbation contract)."""
    return factor_perturbed(A, E).n_below


def count_eigenvalues(A, a: float, b: float) -> int:
    """Eigenvalue count in the half-open window (a, b]."""
    if not a < b:
        raise ValueError("need a < b")
    lo, hi = gershgorin(A)
    if b < lo or a >= hi:
        return 0
    return count_below(A, b) - count_below(A, a)


# --- Lanczos -----------------------------------------------------------------


@dataclass
class EigenSet:
    window: tuple[float, float]
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    count: int

    def __len__(self) -> int:
        return len(self.values)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("index,eigenvalue,residual\n")
            for i, (v, r) in enumerate(zip(self.values, self.residuals)):
                fh.write(f"{i},{v!r},{r!r}\n")


def _orthogonalize(w: np.ndarray, bases: list[np.ndarray]) -> np.ndarray:
    for _ in range(2):
        for Q in bases:
            if Q.shape[1]:
                w = w - Q @ (Q.T @ w)
    return w


def _lanczos_run(M, F, locked, accept, tol_abs, rng, max_steps, check_every=5):
    """One shift-invert Lanczos run orthogonal to ``locked``.

    Returns the converged Ritz pairs accepted by ``accept`` and whether the
    run exhausted its Krylov space (all Ritz pairs converged).
    """
    n = M.shape[0]
    max_steps = min(max_steps, n - locked.shape[1])
    if max_steps <= 0:
        return np.empty(0), np.empty((n, 0)), np.empty(0), True
    Q = np.empty((n, max_steps + 1))
    alpha = np.empty(max_steps)
    beta = np.empty(max_steps)
    q = _orthogonalize(rng.standard_normal(n), [locked])
    q /= np.linalg.norm(q)
    Q[:, 0] = q
    sigma = F.shift
    anorm_shift = F.anorm + abs(sigma)
    j = 0
    exhausted = False
    result = (np.empty(0), np.empty((n, 0)), np.empty(0))
    while j < max_steps:
        w = solve(F, Q[:, j])
        alpha[j] = Q[:, j] @ w
        w = _orthogonalize(w, [Q[:, : j + 1], locked])
        beta[j] = np.linalg.norm(w)
        j += 1
        scale = max(abs(alpha[:j]).max(), 1e-300)
        if beta[j - 1] <= 1e-13 * scale or j == max_steps:
            exhausted = beta[j - 1] <= 1e-13 * scale
        if j % check_every and not (exhausted or j == max_steps):
            Q[:, j] = w / beta[j - 1]
            continue
        theta, S = scipy.linalg.eigh_tridiagonal(alpha[:j], beta[: j - 1])
        ok = np.abs(theta) > 1e-300
        lam = np.full_like(theta, np.inf)
        lam[ok] = sigma + 1.0 / theta[ok]
        est = np.full_like(theta, np.inf)
        est[ok] = anorm_shift * np.abs(beta[j - 1] * S[-1, ok]) / np.abs(theta[ok])
        inwin = np.array([accept(x) for x in lam])
        if inwin.any():
            cand = np.flatnonzero(inwin & (est <= tol_abs))
            all_conv = bool(np.all(est[inwin] <= tol_abs))
        else:
            cand = np.empty(0, dtype=int)
            all_conv = False
        if (all_conv or exhausted or j == max_steps) and cand.size:
            Y = Q[:, :j] @ S[:, cand]
            AY = M @ Y
            rq = np.einsum("ij,ij->j", Y, AY)
            res = np.linalg.norm(AY - Y * rq, axis=0)
            good = (res <= tol_abs) & np.array([accept(x) for x in rq])
            result = (rq[good], Y[:, good], res[good])
            if good.all() and all_conv:
                return (*result, True)
        if exhausted or j == max_steps:
            break
        Q[:, j] = w / beta[j - 1]
    return (*result, exhausted)


def eigenpairs_in_window(
    A,
    a: float,
    b: float,
    tol_eig: float = 1e-10,
    max_count: int = 200,
    max_restarts: int = 40,
    seed: int = 20240601,
) -> EigenSet:
    """Eigenpairs of A with eigenvalues in (a, b], certified by inertia."""
    M = _matrix(A).tocsr()
    n = M.shape[0]
    count = count_eigenvalues(M, a, b)
    if count > max_count:
        raise CertifiedFailure(f"window ({a}, {b}] holds {count} > {max_count} eigenvalues")
    if count == 0:
        return EigenSet((a, b), np.empty(0), np.empty((n, 0)), np.empty(0), 0)
    F = factor_perturbed(M, 0.5 * (a + b))
    tol_abs = tol_eig * F.anorm
    rng = np.random.default_rng(seed)
    locked = np.empty((n, 0))
    vals, res = [], []
    accept = lambda x: a < x <= b  # noqa: E731
    steps = min(n, max(2 * count + 20, 40))
    for _ in range(max_restarts):
        lam, Y, r, _ = _lanczos_run(M, F, locked, accept, tol_abs, rng, steps)
        if lam.size:
            Y = _orthogonalize(Y, [locked])
            Y, _ = np.linalg.qr(Y)
            locked = np.hstack([locked, Y])
            vals.extend(lam)
            res.extend(r)
        if len(vals) >= count:
            break
        if not lam.size:
            steps = min(n, 2 * steps)
    if len(vals) != count:
        raise CertifiedFailure(
            f"Lanczos found {len(vals)} eigenpairs in ({a}, {b}] but inertia counts {count}"
        )
    # Rayleigh-Ritz on the locked basis tidies up values and orthogonality
    H = locked.T @ (M @ locked)
    w, S = np.linalg.eigh(0.5 * (H + H.T))
    V = locked @ S
    resid = np.linalg.norm(M @ V - V * w, axis=0)
    if np.any(resid > tol_abs) or np.any((w <= a) | (w > b)):
        raise CertifiedFailure("final Rayleigh-Ritz pairs failed the residual/window check")
    return EigenSet((a, b), w, V, resid, count)


def lowest_eigenpairs(A, k: int, tol_eig: float = 1e-10) -> EigenSet:
    """The k smallest eigenpairs, completeness certified by inertia."""
    M = _matrix(A).tocsr()
    n = M.shape[0]
    k = min(k, n)
    lo, hi = gershgorin(M)
    floor = min(lo, 0.0) - 1.0
    if n <= 2 * k + 2:
        return eigenpairs_in_window(M, floor, hi + 1.0, tol_eig, max_count=n)
    F = factor_perturbed(M, floor)
    rng = np.random.default_rng(7)
    want = min(k + 1, n)
    lam, _, _, _ = _lanczos_run(
        M, F, np.empty((n, 0)), lambda x: True, 1e-6 * F.anorm, rng, min(n, 4 * want + 40)
    )
    lam = np.sort(lam)
    if lam.size >= want:
        b = lam[want - 1] + 1e-6 * max(abs(lam[want - 1]), 1.0)
    else:
        b = hi + 1.0
    while True:
        c = count_eigenvalues(M, floor, b)
        if c >= k:
            break
        b = b + max(b - floor, 1.0)
    es = eigenpairs_in_window(M, floor, b, tol_eig, max_count=max(c, 200))
    return EigenSet(es.window, es.values[:k], es.vectors[:, :k], es.residuals[:k], es.count)


def dense_eigvalsh(A) -> np.ndarray:
    M = _matrix(A)
    return np.linalg.eigvalsh(M.toarray())


def dense_count(values: np.ndarray, a: float, b: float) -> int:
    return int(np.count_nonzero((values > a) & (values <= b)))


# --- resolvent blocks --------------------------------------------------------


def block_resolvent_norm(
    A,
    E: float | ShiftedFactorization,
    rows: np.ndarray,
    cols: np.ndarray,
    tol: float = 1e-6,
    max_iter: int = 2000,
) -> float:
    """||chi_rows (A - E)^{-1} chi_cols||_2 by power iteration on B^T B."""
    F = E if isinstance(E, ShiftedFactorization) else factor(A, E)
    if F.inertia[1]:
        raise UnresolvedShiftError(F.shift, 0.0)
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    if rows.size == 0 or cols.size == 0:
        return 0.0
    n = F.n

    def apply(v):
        x = np.zeros(n)
        x[cols] = v
        y = solve(F, x)
        z = np.zeros(n)
        z[rows] = y[rows]
        return solve(F, z)[cols]

    v = np.ones(cols.size) / math.sqrt(cols.size)
    est = 0.0
    for _ in range(max_iter):
        w = apply(v)
        lam = float(v @ w)  # Rayleigh quotient of B^T B
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new = math.sqrt(max(lam, 0.0))
        v = w / nw
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return est


def dense_block_norm(A, E: float, rows, cols) -> float:
    M = _matrix(A).toarray()
    R = np.linalg.inv(M - E * np.eye(M.shape[0]))
    return float(np.linalg.norm(R[np.ix_(rows, cols)], 2))


# --- propagation -------------------------------------------------------------


def chebyshev_evolve(
    A, state: np.ndarray, t: float, tol: float = 1e-12, max_terms: int = 200_000
) -> np.ndarray:
    """exp(-i t A) state via a Chebyshev expansion with Bessel coefficients."""
    M = _matrix(A).tocsr()
    psi = np.asarray(state, dtype=complex)
    if t == 0:
        return psi.copy()
    lo, hi = gershgorin(M)
    c = 0.5 * (hi + lo)
    r = 0.5 * (hi - lo)
    if r <= 0:
        return np.exp(-1j * t * c) * psi
    x = r * abs(t)
    # J_k(x) decays super-exponentially once k exceeds x
    kmax = int(x + 10.0 * x ** (1.0 / 3.0) + 60)
    if kmax > max_terms:
        raise DegreeOverflowError(f"t*||A|| needs ~{kmax} terms > max_terms={max_terms}")
    coef = jv(np.arange(kmax + 1), x)
    big = np.flatnonzero(np.abs(coef) >= tol * 1e-3)
    K = int(big[-1]) + 2 if big.size else 1
    K = min(K, kmax + 1)
    sign = -1j if t > 0 else 1j

    def H(v):
        return (M @ v - c * v) / r

    t0 = psi
    out = coef[0] * t0
    if K > 1:
        t1 = H(t0)
        out = out + 2.0 * coef[1] * sign * t1
        phase = sign
        for k in range(2, K):
            t2 = 2.0 * H(t1) - t0
            phase = phase * sign
            out = out + 2.0 * coef[k] * phase * t2
            t0, t1 = t1, t2
    return np.exp(-1j * t * c) * out


def dense_evolve(A, state: np.ndarray, t: float) -> np.ndarray:
    """exp(-i t A) state through a dense symmetric eigendecomposition."""
    M = _matrix(A).toarray()
    w, V = np.linalg.eigh(M)
    return V @ (np.exp(-1j * t * w) * (V.T @ np.asarray(state, dtype=complex)))
