"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 numerical failure.  Log verbosity comes from ``FISHER_RAZOR_LOG``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import experiments, verify
from .errors import DivergenceError, InputError, OptimizationError, PrecisionError, SingularShiftError
from .fim import empirical_inputs, gaussian_inputs, observed_fim, true_fim_estimate
from .network import Dataset, FitConfig, NetworkSpec, fit_mle
from .prior import PriorConfig
from .razor import RazorSettings, razor
from .spectral import spectrum_of

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["format", "network", "data", "prior"],
    "additionalProperties": False,
    "properties": {
        "format": {"const": 1},
        "seed": {"type": "integer", "minimum": 0},
        "network": {
            "type": "object",
            "required": ["layer_widths"],
            "additionalProperties": False,
            "properties": {
                "layer_widths": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2},
                "activation": {"enum": ["relu", "tanh", "identity"]},
                "bias": {"type": "boolean"},
            },
        },
        "data": {
            "type": "object",
            "additionalProperties": False,
            "oneOf": [{"required": ["path"]}, {"required": ["synthetic"]}],
            "properties": {
                "path": {"type": "string"},
                "synthetic": {
                    "type": "object",
                    "required": ["n"],
                    "additionalProperties": False,
                    "properties": {
                        "n": {"type": "integer", "minimum": 1},
                        "noise": {"type": "number", "minimum": 0},
                    },
                },
                "input_distribution": {"enum": ["gaussian", "empirical"]},
            },
        },
        "prior": {
            "type": "object",
            "required": ["eps1", "eps2"],
            "additionalProperties": False,
            "properties": {
                "eps1": {"type": "number", "exclusiveMinimum": 0},
                "eps2": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "monte_carlo": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_true_fim": {"type": "integer", "minimum": 1},
                "n_volume": {"type": "integer", "minimum": 1},
                "n_volume_inputs": {"type": "integer", "minimum": 1},
            },
        },
        "fit": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["gd", "lm"]},
                "max_iter": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "spectrum": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_bins": {"type": "integer", "minimum": 1},
                "matrix": {"enum": ["observed", "true"]},
            },
        },
        "output_dir": {"type": "string"},
    },
}


class UsageError(Exception):
    pass


def load_config(path: str | os.PathLike) -> dict[str, Any]:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from exc
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise UsageError(f"config error at {where}: {err.message}")
    cfg["_base"] = str(Path(path).resolve().parent)
    return cfg


def _seed(cfg: dict, override: int | None) -> int:
    return int(override if override is not None else cfg.get("seed", 0))


def build_problem(cfg: dict, seed: int):
    net = cfg["network"]
    spec = NetworkSpec(tuple(net["layer_widths"]), net.get("activation", "tanh"), seed=seed, bias=net.get("bias", True))
    dcfg = cfg["data"]
    if "path" in dcfg:
        path = Path(cfg["_base"]) / dcfg["path"]
        try:
            arr = np.atleast_2d(np.loadtxt(path, delimiter=",", comments="#"))
        except OSError as exc:
            raise UsageError(f"cannot read data file {path}: {exc}") from exc
        if arr.shape[1] != spec.input_dim + spec.output_dim:
            raise UsageError(f"data file has {arr.shape[1]} columns, network needs {spec.input_dim + spec.output_dim}")
        data = Dataset(arr[:, : spec.input_dim], arr[:, spec.input_dim :])
    else:
        syn = dcfg["synthetic"]
        data = experiments.synthetic_dataset(spec, syn["n"], syn.get("noise", 0.1), seed=seed)
    if dcfg.get("input_distribution", "gaussian") == "empirical":
        sampler = empirical_inputs(data.inputs)
    else:
        sampler = gaussian_inputs(spec.input_dim)
    prior = PriorConfig(float(cfg["prior"]["eps1"]), float(cfg["prior"]["eps2"]))
    mc = cfg.get("monte_carlo", {})
    settings = RazorSettings(
        input_sampler=sampler,
        n_true_fim=mc.get("n_true_fim"),
        n_volume=mc.get("n_volume", 2000),
        n_volume_inputs=mc.get("n_volume_inputs", 256),
        seed=seed,
    )
    fcfg = cfg.get("fit", {})
    fit = FitConfig(method=fcfg.get("method", "lm"), max_iter=fcfg.get("max_iter", 2000), tol=fcfg.get("tol", 1e-6))
    return spec, data, prior, settings, fit


def _out_dir(args, cfg: dict | None) -> Path:
    if args.out:
        out = Path(args.out)
    elif cfg and "output_dir" in cfg:
        out = Path(cfg["_base"]) / cfg["output_dir"]
    else:
        out = Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_razor(args) -> int:
    cfg = load_config(args.config)
    seed = _seed(cfg, args.seed)
    spec, data, prior, settings, fit_cfg = build_problem(cfg, seed)
    settings = replace(settings, include_remainder=args.include_remainder)
    fit = fit_mle(spec, data, fit_cfg)
    report = razor(spec, fit.theta, data, prior, settings)
    text = report.to_json()
    (_out_dir(args, cfg) / "razor_report.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_spectrum(args) -> int:
    cfg = load_config(args.config)
    seed = _seed(cfg, args.seed)
    spec, data, prior, settings, fit_cfg = build_problem(cfg, seed)
    scfg = cfg.get("spectrum", {})
    fit = fit_mle(spec, data, fit_cfg)
    if scfg.get("matrix", "observed") == "true":
        n_mc = settings.n_true_fim or 100 * data.n
        f = true_fim_estimate(spec, fit.theta, settings.input_sampler, n_mc, seed=seed)
    else:
        f = observed_fim(spec, fit.theta, data)
    spectrum = spectrum_of(f, scfg.get("n_bins", 30))
    out = _out_dir(args, cfg)
    (out / "spectrum.csv").write_text(spectrum.histogram_csv())
    (out / "spectrum_moments.json").write_text(spectrum.moments_json() + "\n")
    print(spectrum.histogram_csv(), end="")
    return EXIT_OK


def cmd_figure2(args) -> int:
    points = experiments.figure2_curves()
    out = _out_dir(args, None)
    (out / "figure2.csv").write_text(experiments.curves_csv(points))
    if args.svg:
        (out / "figure2.svg").write_text(experiments.curves_svg(points) + "\n")
    print(f"wrote {len(points)} points to {out / 'figure2.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify.run_all(seed=args.seed or 0, inject_violation=args.inject_violation)
    for r in results:
        print(r.line())
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} checks passed")
    return EXIT_OK if n_pass == len(results) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fisher-razor", description="MDL razor for small feed-forward networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("razor", help="fit the configured network and write its razor report")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--include-remainder", action="store_true")
    p.set_defaults(func=cmd_razor)

    p = sub.add_parser("spectrum", help="histogram of the Fisher spectrum at the fitted network")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("figure2", help="toy BIC vs razor curves")
    p.add_argument("--out")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_figure2)

    p = sub.add_parser("verify", help="run the bound and identity checks")
    p.add_argument("--seed", type=int)
    p.add_argument("--inject-violation", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("FISHER_RAZOR_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OptimizationError, SingularShiftError, PrecisionError, DivergenceError, InputError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
