"""Command-line front end: ``roughviab {simulate,check-invariance,convergence,compare,lil}``.

Seed precedence: ``RV_SEED`` environment variable > ``--seed`` > config file
> default 1.  Other flags win over the optional JSON config file.
Exit codes: 0 success, 1 invariance condition violated, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._io import write_csv, write_json
from .convex_geometry import body_from_descriptor, load_body
from .errors import ContractError, RoughViabError
from .convex_geometry import distance
from .invariance import (
    BoundarySampler,
    SignalPlan,
    _map_paths,
    check_invariance,
    comparison_condition,
    comparison_ensemble,
    sample_in_body,
    signal_roughness_audit,
)
from .rde_solver import convergence_study, solve
from .rough_path import rough_path_from_points
from .signals import FbmSpec, circle_directions, default_alpha, path_rng, sample_fbm
from .vector_fields import PRESETS, make_preset

DEFAULT_SEED = 1
EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def library_version() -> str:
    """Package version, suffixed with ``git describe`` output when run from a checkout."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--tags", "--dirty"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _floats(text):
    if text is None or isinstance(text, list):
        return text
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    if text is None or isinstance(text, list):
        return text
    return [int(v) for v in str(text).split(",") if v.strip()]


def _preset_params(name, args, suffix=""):
    params = {}
    if name == "logistic":
        m = _floats(getattr(args, "m" + suffix, None))
        if m is not None:
            params["m"] = m
        ns = getattr(args, "noise_scale" + suffix, None)
        if ns is not None:
            params["noise_scale"] = float(ns)
    elif name == "linear" and getattr(args, "noise_dim", None) is not None:
        params["noise_dim"] = int(args.noise_dim)
    return params


def _preset(name, args, suffix=""):
    try:
        return make_preset(name, args.dim, **_preset_params(name, args, suffix))
    except TypeError as exc:
        raise UsageError(f"bad parameters for preset {name!r}: {exc}") from exc


def _body(args, preset):
    if getattr(args, "body", None):
        return load_body(args.body)
    if preset.body is None:
        return None
    return body_from_descriptor(preset.body)


def _plan(args, dim_noise):
    spec = FbmSpec(args.hurst, dim_noise, args.horizon, args.steps, args.seed)
    if args.alpha is None:
        args.alpha = default_alpha(args.hurst)
    return SignalPlan(spec, args.alpha, args.level)


def _config_dict(args) -> dict:
    skip = {"func", "config", "threads", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _manifest(args, out: Path, files: list[str], extra=None) -> None:
    payload = {
        "command": args.command,
        "config": _config_dict(args),
        "seed": args.seed,
        "version": library_version(),
        "outputs": sorted(files),
    }
    if extra:
        payload.update(extra)
    write_json(out / "manifest.json", payload)


# -- commands ------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    preset = _preset(args.preset, args)
    vf = preset.vf
    body = _body(args, preset)
    plan = _plan(args, vf.dim_noise)
    y0_fixed = _floats(args.y0)
    out = Path(args.out)

    def run(i):
        rng, _, drive = plan.driver(i)
        if y0_fixed is not None:
            y0 = np.asarray(y0_fixed, dtype=float)
        elif body is not None:
            y0 = sample_in_body(body, rng)
        else:
            y0 = np.full(vf.dim_state, 0.5)
        monitor = None if body is None else (lambda y: distance(body, y))
        return solve(vf, y0, drive, monitor=monitor)

    trajs = _map_paths(run, args.paths, args.threads)
    files = []
    for i, tr in enumerate(trajs):
        name = f"path_{i:04d}.csv"
        tr.to_csv(out / name)
        files.append(name)
    _manifest(args, out, files)
    return EXIT_OK


def cmd_check_invariance(args) -> int:
    preset = _preset(args.preset, args)
    body = _body(args, preset)
    if body is None:
        raise UsageError(f"preset {args.preset!r} has no default body; pass --body")
    sampler = BoundarySampler(args.samples, seed=args.seed)
    report = check_invariance(body, preset.vf, sampler, args.tol)
    out = Path(args.out)
    write_json(out / "report.json", report.to_dict())
    _manifest(args, out, ["report.json"])
    return EXIT_OK if report.passed else EXIT_VIOLATION


def cmd_convergence(args) -> int:
    preset = _preset(args.preset, args)
    vf = preset.vf
    y0 = np.asarray(_floats(args.y0) or [0.5] * vf.dim_state, dtype=float)
    if args.smooth:
        t = args.horizon * np.arange(args.steps + 1) / args.steps
        cols = [t] + [np.sin((k + 1) * np.pi * t / args.horizon) for k in range(vf.dim_noise)]
        if args.alpha is None:
            args.alpha = 1.0
        drive = rough_path_from_points(t, np.column_stack(cols), args.alpha, args.level)
    else:
        plan = _plan(args, vf.dim_noise)
        _, _, drive = plan.driver(0)
    study = convergence_study(vf, y0, drive, _ints(args.coarsenings), level=args.level)
    out = Path(args.out)
    study.to_csv(out / "convergence.csv")
    _manifest(args, out, ["convergence.csv"],
              {"result": {"slope": study.slope, "theta": study.theta, "exploded": list(study.exploded)}})
    return EXIT_OK


def cmd_compare(args) -> int:
    p1 = _preset(args.preset, args, "1")
    p2 = _preset(args.preset, args, "2")
    domain = _body(args, p1)
    if domain is None or domain.descriptor()["type"] != "box":
        raise UsageError("comparison needs a box sampling domain (preset default or --body)")
    coords = _ints(args.coords) if args.coords is not None else list(range(p1.vf.dim_state))
    verdict = comparison_condition(p1.vf, p2.vf, coords, domain, args.samples, args.seed, args.tol)
    plan = _plan(args, p1.vf.dim_noise)
    ens = comparison_ensemble(p1.vf, p2.vf, coords, plan, args.paths, domain=domain, threads=args.threads)
    out = Path(args.out)
    write_json(out / "comparison.json", {"condition": verdict.to_dict(), "ensemble": ens.to_dict()})
    kept = [i for i in range(args.paths) if i not in ens.exploded]
    write_csv(out / "comparison.csv", ["path", "violation"], [kept, ens.violations])
    _manifest(args, out, ["comparison.json", "comparison.csv"])
    return EXIT_OK


def cmd_lil(args) -> int:
    spec = FbmSpec(args.hurst, args.dim, args.horizon, args.steps, args.seed)
    if args.beta is None:
        args.beta = args.hurst
    beta = args.beta
    if args.dim == 1:
        D = np.array([[1.0], [-1.0]])
    elif args.dim == 2:
        D = circle_directions(args.directions)
    else:
        eye = np.eye(args.dim)
        D = np.concatenate([eye, -eye])

    def run(i):
        w = sample_fbm(spec, path_rng(spec.seed, i))
        return signal_roughness_audit(w, beta, D, args.t_min, args.t_max)

    audits = _map_paths(run, args.paths, args.threads)
    rows_path, rows_dir, rows_val = [], [], []
    for i, a in enumerate(audits):
        rows_path += [i] * D.shape[0]
        rows_dir += list(range(D.shape[0]))
        rows_val += a.proxies.tolist()
    out = Path(args.out)
    header = ["path", "direction"] + [f"delta{k + 1}" for k in range(args.dim)] + ["proxy"]
    dcols = [np.tile(D[:, k], args.paths) for k in range(args.dim)]
    write_csv(out / "lil.csv", header, [rows_path, rows_dir] + dcols + [rows_val])
    summary = {
        "consistent_fraction": float(np.mean([a.consistent for a in audits])),
        "mean_proxy": float(np.mean(rows_val)),
        "paths": [a.to_dict() for a in audits],
    }
    write_json(out / "lil_summary.json", summary)
    _manifest(args, out, ["lil.csv", "lil_summary.json"])
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------------


def _common(p):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="base seed (env RV_SEED overrides)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads for ensemble members (does not affect results)")
    p.add_argument("--config", help="JSON file mirroring these flags; explicit flags win")


def _signal(p, steps=1024):
    p.add_argument("--hurst", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=None, help="Hölder exponent (default: hurst - 0.05)")
    p.add_argument("--level", type=int, default=None, help="override the Euler/signature level")
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=steps)


def _field(p, default=None):
    # required-ness is enforced after the config file is merged, see _apply_config
    p.add_argument("--preset", default=default, choices=sorted(PRESETS),
                   help="vector-field preset" + ("" if default else " (required)"))
    p.add_argument("--dim", type=int, default=2, help="state dimension")
    p.add_argument("--noise-dim", type=int, default=None, help="noise dimension (linear preset)")
    p.add_argument("--body", default=None, help="JSON body descriptor file (default: the preset's body)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roughviab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"roughviab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Euler trajectories of a preset driven by fBm")
    _common(p), _field(p), _signal(p)
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--m", default=None, help="logistic growth rates, comma separated")
    p.add_argument("--noise-scale", type=float, default=None)
    p.add_argument("--y0", default=None, help="initial state, comma separated (default: sampled in the body)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check-invariance", help="sampled boundary check of the invariance condition")
    _common(p), _field(p)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--m", default=None)
    p.add_argument("--noise-scale", type=float, default=None)
    p.set_defaults(func=cmd_check_invariance)

    p = sub.add_parser("convergence", help="self-refinement convergence study of the Euler scheme")
    _common(p), _field(p, default="linear"), _signal(p, steps=4096)
    p.add_argument("--coarsenings", default="1,2,3,4,5", help="dyadic coarsening exponents")
    p.add_argument("--smooth", action="store_true", help="use a smooth deterministic driver instead of fBm")
    p.add_argument("--y0", default=None)
    p.add_argument("--m", default=None)
    p.add_argument("--noise-scale", type=float, default=None)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("compare", help="comparison condition and shared-signal ordering ensemble")
    _common(p), _field(p, default="logistic"), _signal(p)
    p.add_argument("--m1", default="1,1")
    p.add_argument("--m2", default="2,2")
    p.add_argument("--noise-scale1", type=float, default=1.0)
    p.add_argument("--noise-scale2", type=float, default=1.0)
    p.add_argument("--coords", default=None, help="ordered coordinates (default: all)")
    p.add_argument("--paths", type=int, default=50)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("lil", help="law-of-iterated-logarithm proxies of fBm samples")
    _common(p)
    p.add_argument("--hurst", type=float, default=0.5)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=2 ** 16)
    p.add_argument("--paths", type=int, default=200)
    p.add_argument("--beta", type=float, default=None, help="exponent (default: hurst)")
    p.add_argument("--directions", type=int, default=16, help="number of directions on the circle (dim 2)")
    p.add_argument("--t-min", type=float, default=None)
    p.add_argument("--t-max", type=float, default=None)
    p.set_defaults(func=cmd_lil)
    return parser


def _apply_config(parser, argv):
    """Parse, then re-parse with config-file values installed as defaults."""
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    if getattr(args, "config", None):
        args = _merge_config(parser, sub, args, argv)
    if hasattr(args, "preset") and args.preset is None:
        sub.error("the following arguments are required: --preset")
    return args


def _merge_config(parser, sub, args, argv):
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {args.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    known = {a.dest for a in sub._actions}
    unknown = set(cfg) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
        env_seed = os.environ.get("RV_SEED")
        if env_seed is not None:
            try:
                args.seed = int(env_seed)
            except ValueError as exc:
                raise UsageError(f"RV_SEED must be an integer, got {env_seed!r}") from exc
        Path(args.out).mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except (UsageError, ContractError) as exc:
        print(f"roughviab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RoughViabError as exc:
        print(f"roughviab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
