"""Experiment configuration and report containers."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any

from ..random_medium import ConfigurationError, ModelParams, derived_constants, lattice_count

FORMAT_VERSION = "1"


class InvariantViolation(AssertionError):
    """A property the experiment is built to check did not hold."""

    def __init__(self, message: str, report: "ExperimentReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams = field(default_factory=ModelParams)
    master_seed: int = 0
    realizations: int = 10
    box_sides: tuple[float, ...] = (1.0,)
    h: float | None = None  # None -> eps^gamma / 8
    resolution: str = "warn"
    coefficient: str = "random"  # "random" or "constant" (a == 1 control)
    n_eigs: int = 10
    tol_eig: float = 1e-10
    workers: int = 1
    oracle_dense: bool = False
    # gap scan
    e_max: float = 60.0
    # lifting
    shift_fractions: tuple[float, ...] = (0.0, 0.125, 0.25, 0.5, 1.0)
    # wegner
    energies: tuple[float, ...] = (40.0,)
    delta_fractions: tuple[float, ...] = tuple(2.0**-k for k in range(8, 2, -1))
    # ise
    e0: float | None = None
    c3_list: tuple[float, ...] = (1.0, 2.0, 3.0)
    c4: float = 1.0
    tau: float | None = None
    s_list: tuple[float, ...] = (0.01, 0.02, 0.04)
    # combes-thomas
    g_fractions: tuple[float, ...] = (0.5, 1.0)
    # suitability
    theta_list: tuple[float, ...] = (4.5, 5.0)
    n_energy: int = 3
    # projector decay / dynamics
    window: tuple[float, float] | None = None
    times: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0, 4.0)
    moment_order: int = 2
    cheb_tol: float = 1e-12

    def __post_init__(self):
        eps = self.model.epsilon
        for L in self.box_sides:
            lattice_count(L, eps)
        if list(self.box_sides) != sorted(set(self.box_sides)):
            raise ConfigurationError("box_sides must be strictly increasing")
        if self.realizations < 1:
            raise ConfigurationError("realizations must be >= 1")
        if any(not x > 0 for x in self.delta_fractions):
            raise ConfigurationError("delta list must be positive")
        if any(not 0.0 <= s <= 1.0 for s in self.shift_fractions):
            raise ConfigurationError("shift fractions must lie in [0, 1] (units of s0)")
        if any(not th > 2 * self.model.d for th in self.theta_list):
            raise ConfigurationError(f"theta must exceed 2d = {2 * self.model.d}")
        if self.coefficient not in ("random", "constant"):
            raise ConfigurationError(f"unknown coefficient mode {self.coefficient!r}")
        if self.resolution not in ("warn", "error", "ignore"):
            raise ConfigurationError(f"unknown resolution policy {self.resolution!r}")
        if self.window is not None and not self.window[0] < self.window[1]:
            raise ConfigurationError("window must satisfy lo < hi")

    @property
    def grid_h(self) -> float:
        if self.h is not None:
            return self.h
        return self.model.epsilon**self.model.gamma / 8.0

    @property
    def s0(self) -> float:
        return derived_constants(self.model).s0

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "model":
                out["model"] = v.to_dict()
            elif isinstance(v, tuple):
                out[f.name] = list(v)
            else:
                out[f.name] = v
        return out


@dataclass
class ExperimentReport:
    driver: str
    config: dict[str, Any]
    records: list[dict[str, Any]]
    summary: dict[str, Any]
    curves: list[dict[str, Any]] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    wall_clock: float = 0.0
    manifest: dict[str, Any] | None = None
    format_version: str = FORMAT_VERSION

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), sort_keys=True, indent=2, ensure_ascii=False)

    def records_csv(self) -> str:
        """Per-realization records as CSV; floats in repr form so reruns are byte-identical."""
        buf = io.StringIO()
        keys: list[str] = []
        for rec in self.records:
            for k in rec:
                if k not in keys:
                    keys.append(k)
        writer = csv.writer(buf, lineterminator="\n")
        buf.write(f"# driver: {self.driver}\n")
        writer.writerow(keys)
        for rec in self.records:
            writer.writerow([_cell(rec.get(k, "")) for k in keys])
        return buf.getvalue()


def _cell(v) -> str:
    if hasattr(v, "item") and not hasattr(v, "__len__"):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_cell(x) for x in v)
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj
