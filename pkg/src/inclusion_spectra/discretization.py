"""Dirichlet finite-difference discretization of -div(a grad) on a box.

Nodes sit at ``origin + i*h`` with ``i = 1 .. L/h - 1`` per axis and are
numbered lexicographically (C order, axis 0 slowest). Each face between two
neighbouring nodes carries the weight ``a(face)/h^2``; faces towards the
boundary contribute to the diagonal only.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp

from .random_medium import Box, ConfigurationError, ModelParams, lattice_count

MIDPOINT = "midpoint"
HARMONIC = "harmonic"

_GEOM_TOL = 1e-9


class UnderResolvedWarning(UserWarning):
    """Grid spacing too coarse to resolve the boundary layer."""


class UnderResolvedError(ConfigurationError):
    pass


class EmptyMaskError(ValueError):
    """Region contains no interior node."""


@dataclass(frozen=True)
class Grid:
    box: Box
    h: float
    n_axis: int  # interior nodes per axis

    @property
    def d(self) -> int:
        return self.box.d

    @property
    def side(self) -> float:
        return self.box.side

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_axis,) * self.d

    @property
    def n(self) -> int:
        return self.n_axis**self.d

    def axis_coords(self) -> list[np.ndarray]:
        i = np.arange(1, self.n_axis + 1)
        return [o + i * self.h for o in self.box.origin]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (n, d)."""
        mesh = np.meshgrid(*self.axis_coords(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def layer_resolution(params: ModelParams) -> float:
    """Largest spacing with at least two nodes across the boundary layer."""
    return params.epsilon**params.gamma / 8.0


def build_grid(
    box: Box, h: float, params: ModelParams | None = None, resolution: str = "warn"
) -> Grid:
    """Grid on ``box`` with spacing ``h``.

    When ``params`` is given the spacing is checked against the layer
    resolution policy; ``resolution`` is one of ``"warn"``, ``"error"``,
    ``"ignore"``.
    """
    cells = lattice_count(box.side, h, what="L/h")
    if params is not None and h > layer_resolution(params) * (1 + 1e-12):
        msg = f"h={h} exceeds eps^gamma/8={layer_resolution(params)}; layer under-resolved"
        if resolution == "error":
            raise UnderResolvedError(msg)
        if resolution == "warn":
            warnings.warn(msg, UnderResolvedWarning, stacklevel=2)
    if cells < 2:
        raise ConfigurationError("grid has no interior nodes")
    return Grid(box, float(h), cells - 1)


@dataclass(frozen=True)
class SparseSymmetricOperator:
    matrix: sp.csr_matrix
    grid: Grid

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def norm_inf(self) -> float:
        return float(abs(self.matrix).sum(axis=1).max())

    def gershgorin(self) -> tuple[float, float]:
        diag = self.matrix.diagonal()
        off = np.asarray(abs(self.matrix).sum(axis=1)).ravel() - np.abs(diag)
        return float((diag - off).min()), float((diag + off).max())

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def dump_matrix_market(self, path) -> None:
        scipy.io.mmwrite(str(path), self.matrix, symmetry="symmetric")


def assemble_operator(
    grid: Grid,
    coefficient: Callable[[np.ndarray], np.ndarray],
    face_rule: str = MIDPOINT,
) -> SparseSymmetricOperator:
    """Flux-form stencil with face weights a(face)/h^2.

    ``coefficient`` maps an (m, d) array of points to m values. With
    ``face_rule="harmonic"`` the face value is the harmonic mean of the
    coefficient at the two end nodes (boundary nodes included).
    """
    d, m, h = grid.d, grid.n_axis, grid.h
    n = grid.n
    origin = np.asarray(grid.box.origin)
    inv_h2 = 1.0 / h**2
    diag = np.zeros(grid.shape)
    rows, cols, vals = [], [], []
    idx = np.arange(n).reshape(grid.shape)
    interior = np.arange(1, m + 1) * h
    for axis in range(d):
        # faces along `axis`: m+1 of them per line, between node i and i+1 (i = 0..m)
        axes = [interior + origin[k] for k in range(d)]
        lo_nodes = origin[axis] + np.arange(0, m + 1) * h
        axes[axis] = lo_nodes + h / 2.0
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=1)
        if face_rule == MIDPOINT:
            a = np.asarray(coefficient(pts), dtype=float)
        elif face_rule == HARMONIC:
            left = pts.copy()
            right = pts.copy()
            left[:, axis] -= h / 2.0
            right[:, axis] += h / 2.0
            al = np.asarray(coefficient(left), dtype=float)
            ar = np.asarray(coefficient(right), dtype=float)
            a = 2.0 * al * ar / (al + ar)
        else:
            raise ValueError(f"unknown face rule {face_rule!r}")
        shape = list(grid.shape)
        shape[axis] = m + 1
        w = a.reshape(shape) * inv_h2
        lower = [slice(None)] * d
        upper = [slice(None)] * d
        lower[axis] = slice(0, m)  # face on the low side of each interior node
        upper[axis] = slice(1, m + 1)  # face on the high side
        diag += w[tuple(lower)] + w[tuple(upper)]
        if m > 1:
            inner = [slice(None)] * d
            inner[axis] = slice(1, m)
            wi = w[tuple(inner)].ravel()
            a_sl = [slice(None)] * d
            b_sl = [slice(None)] * d
            a_sl[axis] = slice(0, m - 1)
            b_sl[axis] = slice(1, m)
            i = idx[tuple(a_sl)].ravel()
            j = idx[tuple(b_sl)].ravel()
            rows += [i, j]
            cols += [j, i]
            vals += [-wi, -wi]
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag.ravel())
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    mat.sort_indices()
    return SparseSymmetricOperator(mat, grid)


def constant_coefficient(value: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda pts: np.full(len(pts), float(value))


# --- regions -----------------------------------------------------------------


@dataclass(frozen=True)
class OpenBox:
    """Open box ``origin + (0, side)^d``; covers Lambda_L(x), Lambda_1(y), Lambda_eps(y)."""

    origin: tuple[float, ...]
    side: float
    tag: str = "box"


@dataclass(frozen=True)
class Belt:
    """Closed inner boundary belt of thickness eps at distance eps/2 from the box boundary."""

    origin: tuple[float, ...]
    side: float
    epsilon: float
    tag: str = "belt"


def centered_box(box: Box, side: float) -> OpenBox:
    c = box.center
    return OpenBox(tuple(c - side / 2.0), side, tag="centered")


def belt(box: Box, epsilon: float) -> Belt:
    return Belt(box.origin, box.side, epsilon)


@dataclass(frozen=True)
class IndexMask:
    indices: np.ndarray
    tag: str

    def __len__(self) -> int:
        return len(self.indices)


def _in_open(x: np.ndarray, lo: np.ndarray, side: float, tol: float) -> np.ndarray:
    return np.all((x > lo + tol) & (x < lo + side - tol), axis=1)


def _in_closed(x: np.ndarray, lo: np.ndarray, side: float, tol: float) -> np.ndarray:
    return np.all((x >= lo - tol) & (x <= lo + side + tol), axis=1)


def mask_for_region(grid: Grid, region: OpenBox | Belt, allow_empty: bool = False) -> IndexMask:
    x = grid.coords()
    tol = _GEOM_TOL * grid.h
    if isinstance(region, Belt):
        eps = region.epsilon
        o = np.asarray(region.origin)
        outer = _in_closed(x, o + eps / 2, region.side - eps, tol)
        inner = _in_open(x, o + 3 * eps / 2, region.side - 3 * eps, tol)
        sel = outer & ~inner
    else:
        sel = _in_open(x, np.asarray(region.origin), region.side, tol)
    idx = np.flatnonzero(sel)
    if idx.size == 0 and not allow_empty:
        raise EmptyMaskError(f"region {region.tag} contains no interior node")
    return IndexMask(idx, region.tag)
