"""Random high-contrast medium with spherical inclusions on the lattice of cells.

Cells are the boxes ``eps*z + (0, eps)^d`` for integer ``z``. Cell ``z`` carries an
inclusion of radius ``eps*omega_z`` centred at ``eps*z + eps/2``, wrapped in a
boundary layer of thickness ``eps**gamma / 4`` on which the diffusivity ramps
linearly from ``eps**2`` (inclusion) up to 1 (matrix).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from . import rng

UNIFORM = "Uniform"
POLYNOMIAL_THIN = "PolynomialThin"

_LATTICE_TOL = 1e-9


class ConfigurationError(ValueError):
    """Invalid model parameters or box geometry."""


class OutOfWindowError(ValueError):
    """Coefficient requested at a point outside the sampled cells."""


class RejectedShiftError(ValueError):
    """Radius shift would leave (0, 1/4) or break inclusion containment."""


@dataclass(frozen=True)
class DensitySpec:
    kind: str = UNIFORM
    kappa: float | None = None

    def __post_init__(self):
        if self.kind not in (UNIFORM, POLYNOMIAL_THIN):
            raise ConfigurationError(f"unknown density kind {self.kind!r}")
        if self.kind == POLYNOMIAL_THIN:
            if self.kappa is None or not self.kappa > 0:
                raise ConfigurationError("PolynomialThin density needs kappa > 0")

    def inverse_cdf(self, u: np.ndarray, lo: float, hi: float) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == UNIFORM:
            return lo + (hi - lo) * u
        return hi - (hi - lo) * (1.0 - u) ** (1.0 / self.kappa)

    def upper_tail(self, s: float, lo: float, hi: float) -> float:
        """mu([hi - s, hi]), exact."""
        frac = min(max(s / (hi - lo), 0.0), 1.0)
        if self.kind == UNIFORM:
            return frac
        return frac**self.kappa

    def thinness_constant(self, lo: float, hi: float) -> float:
        """Constant C with mu([hi - s, hi]) <= C s**kappa (PolynomialThin only)."""
        if self.kind != POLYNOMIAL_THIN:
            return math.nan
        return (hi - lo) ** (-self.kappa)

    def max_density(self, lo: float, hi: float) -> float:
        if self.kind == UNIFORM:
            return 1.0 / (hi - lo)
        if self.kappa < 1:
            return math.inf
        return self.kappa / (hi - lo)


@dataclass(frozen=True)
class ModelParams:
    d: int = 2
    epsilon: float = 0.25
    gamma: float = 2.0
    omega_minus: float = 0.1
    omega_plus: float = 0.2
    density: DensitySpec = field(default_factory=DensitySpec)

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ConfigurationError(f"dimension d={self.d} not supported")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigurationError(f"epsilon={self.epsilon} must lie in (0, 1)")
        if not self.gamma >= 2.0:
            raise ConfigurationError(f"gamma={self.gamma} must be >= 2")
        if not 0.0 < self.omega_minus < self.omega_plus < 0.25:
            raise ConfigurationError(
                f"need 0 < omega_minus < omega_plus < 1/4, got "
                f"{self.omega_minus}, {self.omega_plus}"
            )
        if not self.contains(self.omega_plus):
            raise ConfigurationError("inclusion plus layer does not fit inside a cell")

    @property
    def layer(self) -> float:
        return self.epsilon**self.gamma / 4.0

    def contains(self, omega: float) -> bool:
        return self.epsilon * omega + self.layer < self.epsilon / 2.0

    def to_dict(self) -> dict[str, Any]:
        out = {
            "d": self.d,
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "omega_minus": self.omega_minus,
            "omega_plus": self.omega_plus,
            "density.kind": self.density.kind,
        }
        if self.density.kappa is not None:
            out["density.kappa"] = self.density.kappa
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelParams":
        density = DensitySpec(
            kind=data.get("density.kind", UNIFORM), kappa=data.get("density.kappa")
        )
        kwargs = {k: data[k] for k in ("epsilon", "gamma", "omega_minus", "omega_plus") if k in data}
        if "d" in data:
            kwargs["d"] = int(data["d"])
        return cls(density=density, **kwargs)


@dataclass(frozen=True)
class Box:
    """Open box ``origin + (0, side)^d``."""

    origin: tuple[float, ...]
    side: float

    @classmethod
    def cube(cls, side: float, d: int, origin: float | tuple[float, ...] = 0.0) -> "Box":
        if np.isscalar(origin):
            origin = (float(origin),) * d
        return cls(tuple(float(o) for o in origin), float(side))

    @property
    def d(self) -> int:
        return len(self.origin)

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.origin) + self.side / 2.0


def lattice_count(length: float, step: float, what: str = "L/eps") -> int:
    q = length / step
    n = int(round(q))
    if n < 1 or abs(q - n) > _LATTICE_TOL * max(1.0, q):
        raise ConfigurationError(f"{what} = {q!r} is not a positive integer")
    return n


@dataclass(frozen=True)
class RadiiField:
    """Radii omega_z on a finite window of cells, stored as a d-dim array.

    ``first_cell`` is the integer index of the window's lowest corner cell;
    ``values[i0, i1, ...]`` belongs to cell ``first_cell + (i0, i1, ...)``.
    """

    params: ModelParams
    box: Box
    first_cell: tuple[int, ...]
    values: np.ndarray
    seed: int
    realization: int
    shrinkage: float = 0.0

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def n_cells(self) -> int:
        return self.values.size

    def cell_indices(self) -> np.ndarray:
        """Integer lattice indices of all cells, shape (n_cells, d), C order."""
        grids = np.meshgrid(*[np.arange(n) for n in self.shape], indexing="ij")
        idx = np.stack([g.ravel() for g in grids], axis=1)
        return idx + np.asarray(self.first_cell, dtype=np.int64)

    def centers(self) -> np.ndarray:
        eps = self.params.epsilon
        return self.cell_indices() * eps + eps / 2.0


def _window(params: ModelParams, box: Box) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if box.d != params.d:
        raise ConfigurationError(f"box dimension {box.d} != model dimension {params.d}")
    eps = params.epsilon
    n = lattice_count(box.side, eps)
    first = []
    for o in box.origin:
        # box origin must itself sit on the eps-lattice
        q = o / eps
        if abs(q - round(q)) > _LATTICE_TOL * max(1.0, abs(q)):
            raise ConfigurationError(f"box origin {o} not on the eps-lattice")
        first.append(int(round(q)))
    return tuple(first), (n,) * params.d


def sample_radii(params: ModelParams, box: Box, seed: int, realization: int = 0) -> RadiiField:
    """Draw i.i.d. radii for every cell whose centre lies in ``box``."""
    first, shape = _window(params, box)
    grids = np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")
    cells = np.stack([g.ravel() for g in grids], axis=1) + np.asarray(first, dtype=np.int64)
    u = rng.uniforms(seed, realization, cells)
    values = params.density.inverse_cdf(u, params.omega_minus, params.omega_plus)
    return RadiiField(params, box, first, values.reshape(shape), seed, realization)


def constant_radii(params: ModelParams, box: Box, omega: float) -> RadiiField:
    """Deterministic field with every radius equal to ``omega``."""
    first, shape = _window(params, box)
    if not (0.0 < omega < 0.25 and params.contains(omega)):
        raise RejectedShiftError(f"constant radius {omega} violates containment")
    return RadiiField(params, box, first, np.full(shape, float(omega)), -1, -1)


def shift_radii(radii: RadiiField, s: float, strict: bool = True) -> RadiiField:
    """Replace every omega_z by omega_z + s (s may be negative).

    ``strict=False`` drops the omega < 1/4 bound and keeps only positivity and
    cell containment, which is all the coefficient formula needs.
    """
    if s == 0:
        return radii
    values = radii.values + s
    lo, hi = float(values.min()), float(values.max())
    if not lo > 0.0 or (strict and not hi < 0.25):
        raise RejectedShiftError(f"shift {s} leaves radii range ({lo}, {hi}) outside (0, 1/4)")
    if not radii.params.contains(hi):
        raise RejectedShiftError(f"shift {s} breaks inclusion containment")
    return replace(radii, values=values, shrinkage=radii.shrinkage + max(-s, 0.0))


def _locate(radii: RadiiField, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (flat cell position, distance to cell centre) for points x of shape (n, d)."""
    p = radii.params
    eps = p.epsilon
    rel = x / eps - np.asarray(radii.first_cell, dtype=float)
    shape = np.asarray(radii.shape)
    tol = 1e-12
    if np.any(rel < -tol) or np.any(rel > shape + tol):
        raise OutOfWindowError("point outside the sampled window")
    # closed window: points on the outer faces map to the last cell
    cell = np.clip(np.floor(rel).astype(np.int64), 0, shape - 1)
    flat = np.ravel_multi_index(tuple(cell.T), radii.shape)
    centre = (cell + np.asarray(radii.first_cell) + 0.5) * eps
    dist = np.sqrt(((x - centre) ** 2).sum(axis=1))
    return flat, dist


def _as_points(x, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = x.reshape(-1, d)
    return x, single


def eval_coefficient(params: ModelParams, radii: RadiiField, x) -> np.ndarray | float:
    """Diffusivity with linear boundary-layer ramp; values in [eps^2, 1]."""
    pts, single = _as_points(x, params.d)
    flat, r = _locate(radii, pts)
    eps2 = params.epsilon**2
    layer = params.layer
    inner = params.epsilon * radii.values.ravel()[flat]
    outer = inner + layer
    # inside the layer, dist(x, matrix) = outer - r
    ramp = 1.0 - (1.0 - eps2) * (outer - r) / layer
    out = np.where(r < inner, eps2, np.where(r < outer, ramp, 1.0))
    return float(out[0]) if single else out


def eval_sharp_coefficient(
    params: ModelParams, radii: RadiiField, x, dilation: float = 0.0
) -> np.ndarray | float:
    """Two-phase diffusivity without layer: eps^2 in the inclusions, 1 elsewhere.

    ``dilation`` grows every inclusion radius by ``eps * dilation``; the
    dilated balls only need to stay inside their cells, which is weaker than
    what :func:`shift_radii` enforces.
    """
    pts, single = _as_points(x, params.d)
    if dilation:
        if params.epsilon * (radii.values.max() + dilation) >= params.epsilon / 2:
            raise RejectedShiftError(f"dilation {dilation} pushes inclusions out of their cells")
    flat, r = _locate(radii, pts)
    inner = params.epsilon * (radii.values.ravel()[flat] + dilation)
    out = np.where(r < inner, params.epsilon**2, 1.0)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class DerivedConstants:
    alpha_epsilon: float
    s0: float
    layer_thickness: float
    lipschitz_bound: float


def derived_constants(params: ModelParams) -> DerivedConstants:
    eps, g = params.epsilon, params.gamma
    return DerivedConstants(
        alpha_epsilon=2.0 * (1.0 - eps**2) / eps ** (g - 1.0),
        s0=eps ** (g - 1.0) / 4.0,
        layer_thickness=eps**g / 4.0,
        lipschitz_bound=4.0 / eps**g,
    )


@dataclass(frozen=True)
class WitnessSet:
    points: np.ndarray  # (n_cells, d), same cell order as RadiiField.cell_indices()
    ball_scale: float  # witness ball radius is ball_scale * s
    alpha: float  # coefficient drop on the ball is at least alpha * s

    def ball_radius(self, s: float) -> float:
        return self.ball_scale * s

    def lower_bound(self, s: float) -> float:
        return self.alpha * s


WITNESS_DEPTH = 0.75


def witness_points(params: ModelParams, radii: RadiiField) -> WitnessSet:
    """One witness per cell, on the e_1 ray, three quarters into the layer.

    For a radius growth of eps*s with 0 <= s <= s0 the coefficient drop is
    >= alpha_eps * s on the radial band [R + eps*s/2, R + layer + eps*s/2];
    the depth 3/4 keeps every witness ball inside that band for all such s.
    """
    c = derived_constants(params)
    centers = radii.centers()
    offset = params.epsilon * radii.values.ravel() + WITNESS_DEPTH * params.layer
    pts = centers.copy()
    pts[:, 0] += offset
    return WitnessSet(pts, params.epsilon**params.gamma / 10.0, c.alpha_epsilon)
