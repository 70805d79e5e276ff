"""Command line entry point: flat config files, driver dispatch, report emission.

Config files are line oriented ``key = value`` with dotted keys::

    master_seed = 7
    model.epsilon = 0.25
    model.density.kind = PolynomialThin
    model.density.kappa = 2
    experiment.box_sides = 1, 2
    experiment.realizations = 20

Lists are comma separated; ``none`` clears an optional value; ``#`` starts a
comment. Exit statuses: 0 success, 2 invariant violated, 3 configuration error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import types
import typing
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import __version__
from .discretization import UnderResolvedWarning
from .experiments import DRIVERS, ExperimentConfig, ExperimentReport, InvariantViolation
from .random_medium import ConfigurationError, DensitySpec, ModelParams

EXIT_OK = 0
EXIT_VIOLATION = 2
EXIT_CONFIG = 3

SUBCOMMANDS = tuple(DRIVERS) + ("selftest",)

MODEL_KEYS = {
    "model.d": int,
    "model.epsilon": float,
    "model.gamma": float,
    "model.omega_minus": float,
    "model.omega_plus": float,
    "model.density.kind": str,
    "model.density.kappa": typing.Optional[float],
}
TOP_KEYS = {"master_seed": int, "output_dir": str}


class ConfigFileError(ConfigurationError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


def _experiment_fields() -> dict[str, Any]:
    hints = typing.get_type_hints(ExperimentConfig)
    return {
        f"experiment.{f.name}": hints[f.name]
        for f in dataclasses.fields(ExperimentConfig)
        if f.name not in ("model", "master_seed")
    }


EXPERIMENT_KEYS = _experiment_fields()


def _convert(raw: str, hint) -> Any:
    raw = raw.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType):
        if raw.lower() == "none":
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(raw, inner[0])
    if origin is tuple:
        items = [x for x in raw.split(",") if x.strip()]
        elem = args[0] if args else float
        return tuple(_convert(x, elem) for x in items)
    if hint is bool:
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if hint is int:
        return int(raw)
    if hint is float:
        return float(raw)
    return raw


def _hint(key: str):
    if key in MODEL_KEYS:
        return MODEL_KEYS[key]
    if key in TOP_KEYS:
        return TOP_KEYS[key]
    return EXPERIMENT_KEYS[key]


@dataclass
class RunManifest:
    config_path: str | None
    config: ExperimentConfig
    resolved: dict[str, Any]
    master_seed: int
    output_dir: str
    tool_version: str = __version__
    warnings: list[str] = field(default_factory=list)

    def as_dict(self) -> dict[str, Any]:
        return {
            "config_path": self.config_path,
            "resolved": {k: list(v) if isinstance(v, tuple) else v for k, v in self.resolved.items()},
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
            "tool_version": self.tool_version,
            "warnings": list(self.warnings),
        }


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def resolve(config: ExperimentConfig, output_dir: str) -> dict[str, Any]:
    out: dict[str, Any] = {"master_seed": config.master_seed, "output_dir": output_dir}
    for k, v in config.model.to_dict().items():
        out[f"model.{k}"] = v
    out.setdefault("model.density.kappa", None)
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in ("model", "master_seed"):
            continue
        out[f"experiment.{f.name}"] = getattr(config, f.name)
    return out


def emit_manifest(manifest: RunManifest) -> str:
    """Config-file text that parses back to the same manifest."""
    lines = [f"# resolved configuration, tool version {manifest.tool_version}"]
    lines += [f"{k} = {_format(v)}" for k, v in manifest.resolved.items()]
    return "\n".join(lines) + "\n"


def parse_config_text(text: str, path: str | None = None) -> RunManifest:
    values: dict[str, Any] = {}
    where: dict[str, int] = {}
    notes: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigFileError(f"expected 'key = value', got {body!r}", lineno)
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in MODEL_KEYS and key not in TOP_KEYS and key not in EXPERIMENT_KEYS:
            raise ConfigFileError(f"unknown key {key!r}", lineno)
        try:
            value = _convert(raw, _hint(key))
        except ValueError as err:
            raise ConfigFileError(f"bad value for {key}: {err}", lineno) from None
        if key in values:
            notes.append(f"duplicate key {key} on line {lineno} overrides line {where[key]}")
        values[key] = value
        where[key] = lineno

    def fail_at(keys, err):
        lines = [where[k] for k in keys if k in where]
        raise ConfigFileError(str(err), max(lines) if lines else None) from None

    model_vals = {k[len("model."):]: v for k, v in values.items() if k.startswith("model.")}
    try:
        density = DensitySpec(model_vals.pop("density.kind", "Uniform"), model_vals.pop("density.kappa", None))
        model = ModelParams(density=density, **model_vals)
    except (ConfigurationError, TypeError) as err:
        fail_at([k for k in values if k.startswith("model.")], err)
    exp_vals = {k[len("experiment."):]: v for k, v in values.items() if k.startswith("experiment.")}
    try:
        config = ExperimentConfig(model=model, master_seed=values.get("master_seed", 0), **exp_vals)
    except (ConfigurationError, TypeError) as err:
        fail_at(list(values), err)
    output_dir = values.get("output_dir", "out")
    manifest = RunManifest(path, config, resolve(config, output_dir), config.master_seed, output_dir, warnings=notes)
    return manifest


def parse_config(path) -> RunManifest:
    path = Path(path)
    if not path.exists():
        raise ConfigFileError(f"config file {path} does not exist")
    return parse_config_text(path.read_text(), str(path))


# --- emission ----------------------------------------------------------------


def _fmt_cell(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def emit_plotdata(report: ExperimentReport, driver: str, out_dir) -> list[Path]:
    """One TSV per fitted curve, named ``<driver>_<L>_<sweep>.tsv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for curve in report.curves:
        L = curve["L"]
        tag = f"{L:g}" if isinstance(L, (int, float)) else str(L)
        path = out_dir / f"{driver}_{tag}_{curve['sweep']}.tsv"
        lines = [f"# driver: {driver}", f"# L: {tag}", f"# sweep: {curve['sweep']}"]
        lines.append("# axes: " + " vs ".join(curve["columns"][1:]) + f" against {curve['columns'][0]}")
        for k, v in sorted(curve.get("fit", {}).items()):
            lines.append(f"# fit.{k}: {json.dumps(v)}")
        lines.append("\t".join(curve["columns"]))
        lines += ["\t".join(_fmt_cell(x) for x in row) for row in curve["rows"]]
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    return paths


def write_report(report: ExperimentReport, manifest: RunManifest, driver: str) -> list[Path]:
    out = Path(manifest.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.manifest = manifest.as_dict()
    json_path = out / f"{driver}_report.json"
    json_path.write_text(report.to_json() + "\n", encoding="utf-8")
    csv_path = out / f"{driver}_records.csv"
    csv_path.write_text(report.records_csv())
    return [json_path, csv_path, *emit_plotdata(report, driver, out)]


def dispatch(subcommand: str, manifest: RunManifest | None, log=print) -> int:
    if subcommand not in SUBCOMMANDS:
        log(f"unknown subcommand {subcommand!r}; choose from {', '.join(SUBCOMMANDS)}")
        return EXIT_CONFIG
    if subcommand == "selftest":
        from .selftest import run_selftest

        failures = run_selftest(log=log)
        return EXIT_OK if not failures else EXIT_VIOLATION
    if manifest is None:
        log("a config file is required")
        return EXIT_CONFIG
    try:
        report = DRIVERS[subcommand](manifest.config)
    except InvariantViolation as err:
        if err.report is not None:
            write_report(err.report, manifest, subcommand)
        log(f"invariant violated: {err}")
        return EXIT_VIOLATION
    except ConfigurationError as err:
        log(f"configuration error: {err}")
        return EXIT_CONFIG
    for path in write_report(report, manifest, subcommand):
        log(f"wrote {path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="inclusion-spectra", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", help=", ".join(SUBCOMMANDS))
    parser.add_argument("-c", "--config", help="key = value configuration file")
    parser.add_argument("-o", "--output-dir", help="override output_dir from the config")
    parser.add_argument("--oracle-dense", action="store_true", help="cross-check every solve against dense linear algebra")
    parser.add_argument("--quiet-resolution", action="store_true", help="silence under-resolved grid warnings")
    args = parser.parse_args(argv)
    if args.quiet_resolution:
        warnings.simplefilter("ignore", UnderResolvedWarning)
    manifest = None
    if args.subcommand != "selftest":
        if args.subcommand not in SUBCOMMANDS:
            return dispatch(args.subcommand, None)
        if not args.config:
            print("--config is required", file=sys.stderr)
            return EXIT_CONFIG
        try:
            manifest = parse_config(args.config)
        except ConfigurationError as err:
            print(f"configuration error: {err}", file=sys.stderr)
            return EXIT_CONFIG
        if args.output_dir:
            manifest.output_dir = args.output_dir
            manifest.resolved["output_dir"] = args.output_dir
        if args.oracle_dense:
            manifest.config = dataclasses.replace(manifest.config, oracle_dense=True)
            manifest.resolved["experiment.oracle_dense"] = True
    return dispatch(args.subcommand, manifest)


if __name__ == "__main__":
    sys.exit(main())
