"""Command line front end: ``pcmm fit | resample | eval | info``.

Exit codes: 0 success, 1 usage error, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .cloud import CloudError, PipelineConfig
from .evaluation import evaluate, resample
from .io import read_cloud, write_cloud
from .model import ModelFormatError, ModelVersionError, atomic_write, load_model, save_model
from .pipeline import PipelineError, run_pipeline

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

# config-file / flag name -> (PipelineConfig field or pseudo-key, parser)
CONFIG_KEYS = {
    "voxel_size": ("a_voxel", float),
    "a_voxel": ("a_voxel", float),
    "nem": ("N_em", int),
    "N_em": ("N_em", int),
    "rmin": ("r_min", float),
    "r_min": ("r_min", float),
    "nmin": ("N_min", int),
    "N_min": ("N_min", int),
    "theta_min_deg": ("theta_min_deg", float),
    "theta_min": ("theta_min", float),
    "lmin": ("l_min", float),
    "l_min": ("l_min", float),
    "plane_bnd_mult": ("plane_bnd_mult", float),
    "surf_bnd_mult": ("surf_bnd_mult", float),
    "plane_boundary_voxel": ("plane_boundary_voxel", float),
    "surface_boundary_voxel": ("surface_boundary_voxel", float),
    "seed": ("rng_seed", int),
    "rng_seed": ("rng_seed", int),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; blank lines and # comments are ignored."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    out = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        name, kind = CONFIG_KEYS[key]
        try:
            out[name] = kind(val)
        except ValueError:
            raise UsageError(f"{path}:{n}: bad value for {key}: {val!r}") from None
    return out


def build_config(file_values: dict, flag_values: dict) -> PipelineConfig:
    """Defaults < config file < flags."""
    merged = {**file_values, **{k: v for k, v in flag_values.items() if v is not None}}
    if "theta_min_deg" in merged:
        merged["theta_min"] = math.radians(merged.pop("theta_min_deg"))
    a = merged.get("a_voxel", PipelineConfig.a_voxel)
    if "plane_bnd_mult" in merged:
        merged["plane_boundary_voxel"] = merged.pop("plane_bnd_mult") * a
    if "surf_bnd_mult" in merged:
        merged["surface_boundary_voxel"] = merged.pop("surf_bnd_mult") * a
    try:
        return PipelineConfig(**merged)
    except CloudError as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _write_json(path, payload):
    atomic_write(path, (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def cmd_fit(args) -> int:
    file_values = read_config_file(args.config) if args.config else {}
    flags = {
        "a_voxel": args.voxel_size, "N_em": args.nem, "r_min": args.rmin, "N_min": args.nmin,
        "theta_min_deg": args.theta_min_deg, "l_min": args.lmin,
        "plane_bnd_mult": args.plane_bnd_mult, "surf_bnd_mult": args.surf_bnd_mult,
        "rng_seed": args.seed,
    }
    cfg = build_config(file_values, flags)
    cloud = read_cloud(args.cloud)
    model, stats = run_pipeline(cloud, cfg)
    save_model(model, args.output)
    print(stats.to_text())
    if args.stats:
        _write_json(args.stats, {k: v for k, v in stats.as_dict().items() if k != "extra"})
    return EXIT_OK


def cmd_resample(args) -> int:
    model = load_model(args.model)
    pts = resample(model)
    write_cloud(args.output, pts)
    print(f"generated_points: {len(pts)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model)
    cloud = read_cloud(args.cloud)
    report = evaluate(model, cloud)
    if args.against_filtered:
        # the filtered-cloud variant becomes the headline numbers
        report.precision_rmse = report.filtered_precision_rmse
        report.completeness_rmse = report.filtered_completeness_rmse
    print(report.to_text())
    if args.json:
        _write_json(args.json, report.as_dict())
    return EXIT_OK


def cmd_info(args) -> int:
    model = load_model(args.model)
    print(f"gaussians: {len(model.gaussians)}")
    print(f"planes: {len(model.planes)}")
    print(f"surfaces: {len(model.surfaces)}")
    for k, v in model.config.as_dict().items():
        print(f"config.{k}: {v}")
    for k, v in model.stats.items():
        print(f"stat.{k}: {v}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pcmm", description="Fit, resample and evaluate multi-model point cloud maps.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit a scene model to a point cloud")
    f.add_argument("cloud")
    f.add_argument("-o", "--output", required=True)
    f.add_argument("--voxel-size", type=float)
    f.add_argument("--nem", type=int)
    f.add_argument("--rmin", type=float)
    f.add_argument("--nmin", type=int)
    f.add_argument("--theta-min-deg", type=float)
    f.add_argument("--lmin", type=float)
    f.add_argument("--plane-bnd-mult", type=float)
    f.add_argument("--surf-bnd-mult", type=float)
    f.add_argument("--seed", type=int)
    f.add_argument("--config")
    f.add_argument("--stats", help="write run statistics as JSON")
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("resample", help="generate a point cloud from a model")
    r.add_argument("model")
    r.add_argument("-o", "--output", required=True)
    r.set_defaults(func=cmd_resample)

    e = sub.add_parser("eval", help="precision/completeness of a model against a cloud")
    e.add_argument("model")
    e.add_argument("cloud")
    e.add_argument("--against-filtered", action="store_true")
    e.add_argument("--json", help="write the report as JSON")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("info", help="summarise a model file")
    i.add_argument("model")
    i.set_defaults(func=cmd_info)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pcmm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as exc:
        print(f"pcmm: {exc}", file=sys.stderr)
        if exc.stage == "input" or isinstance(exc.cause, CloudError) and exc.stage == "filter":
            return EXIT_INPUT
        return EXIT_NUMERIC
    except (CloudError, ModelFormatError, ModelVersionError, OSError) as exc:
        print(f"pcmm: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        print(f"pcmm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
