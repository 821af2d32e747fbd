"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .. import festoon, geometry, rescale, sampling, scores
from ..errors import ConfigError, RandPolytopeError
from .config import KINDS, ExperimentConfig, load_config
from .experiments import load_body, run_experiment
from .results import write_meta, write_results

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _global_flags(p, default):
    p.add_argument("--config", default=default)
    p.add_argument("--seed", type=int, default=default)
    p.add_argument("--out", default=default)
    p.add_argument("--threads", type=int, default=default)
    p.add_argument("--dim", type=int, default=default)


def build_parser():
    ap = argparse.ArgumentParser(prog="randpolytope", description=__doc__)
    _global_flags(ap, None)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", parents=[common], help="Poisson sample in a body or the limit process")
    p.add_argument("--body", default="square")
    p.add_argument("--lam", type=float, default=1000.0)
    p.add_argument("--limit", action="store_true", help="sample the limit process instead")
    p.add_argument("--half-width", type=float, default=8.0)

    p = sub.add_parser("hull", parents=[common], help="convex hull and f-vector of a point file")
    p.add_argument("input")

    p = sub.add_parser("scores", parents=[common], help="per-point scores of a point file")
    p.add_argument("input")
    p.add_argument("--body", default="square")
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--delta", type=float, default=None)

    p = sub.add_parser("rescale", parents=[common], help="map points to (v, h) or back")
    p.add_argument("input")
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--inverse", action="store_true")

    p = sub.add_parser("festoon", parents=[common], help="festoon of a (v, h) file or of a limit window")
    p.add_argument("input", nargs="?")
    p.add_argument("--half-width", type=float, default=8.0)

    p = sub.add_parser("experiment", parents=[common], help="run a configured experiment")
    p.add_argument("kind", choices=KINDS)
    return ap


def _out_dir(args):
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_sample(args):
    out = _out_dir(args)
    d = args.dim or 2
    seed = args.seed or 0
    path = os.path.join(out, "points.csv")
    if args.limit:
        if d != 2:
            raise ConfigError("limit sampling from the CLI is d=2 only")
        ws = festoon.sample_window(core=(-args.half_width, args.half_width), seed=seed)
        sampling.write_points_csv(path, v=ws.v[:, None], h=ws.h)
        n = len(ws.h)
    else:
        K = load_body(args.body, d)
        s = sampling.sample_homogeneous(K, args.lam, seed)
        sampling.write_points_csv(path, points=s.points)
        n = len(s)
    print(f"{n} points -> {path}")


def _read_points(path):
    data = sampling.read_points_csv(path)
    if "points" not in data:
        raise ConfigError(f"{path} holds rescaled points, expected x0.. columns")
    return data["points"]


def _cmd_hull(args):
    pts = _read_points(args.input)
    hull = geometry.convex_hull(pts, pts.shape[1], seed=args.seed or 0)
    fc = geometry.face_counts(hull)
    path = os.path.join(_out_dir(args), "hull.json")
    with open(path, "w") as fh:
        json.dump({"f": list(fc.f), "facets": [list(map(int, f)) for f in hull.facets],
                   "vertices": sorted(int(i) for i in hull.vertex_indices)}, fh)
    print("f-vector", " ".join(map(str, fc.f)))


def _cmd_scores(args):
    pts = _read_points(args.input)
    K = load_body(args.body, pts.shape[1])
    delta = rescale.delta0(args.lam, K.d) if args.delta is None else args.delta
    table = scores.score_table(pts, K, args.lam, delta, seed=args.seed or 0)
    path = os.path.join(_out_dir(args), "scores.csv")
    table.to_csv(path)
    print("totals", " ".join(f"{x:.6g}" for x in table.totals), f"xi_V {table.xi_v.sum():.6g}")


def _cmd_rescale(args):
    data = sampling.read_points_csv(args.input)
    path = os.path.join(_out_dir(args), "rescaled.csv")
    if args.inverse:
        if "v" not in data:
            raise ConfigError("inverse mapping needs v.., h columns")
        sampling.write_points_csv(path, points=rescale.inverse(data["v"], data["h"], args.lam))
    else:
        v, h = rescale.forward(data["points"], args.lam)
        sampling.write_points_csv(path, v=v, h=h)
    print(f"-> {path}")


def _cmd_festoon(args):
    if args.input:
        data = sampling.read_points_csv(args.input)
        if "v" not in data:
            raise ConfigError("festoon input needs v.., h columns")
        v, h = data["v"], data["h"]
        model = festoon.build_model(v, h, d=v.shape[1] + 1)
    else:
        ws = festoon.sample_window(core=(-args.half_width, args.half_width), seed=args.seed or 0)
        model = ws.model()
    path = os.path.join(_out_dir(args), "festoon.json")
    festoon.dump_festoon(model, path)
    print(f"{len(model.ext_indices)} extreme points of {model.n} -> {path}")


def _cmd_experiment(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg.kind = args.kind
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.threads is not None:
        cfg.threads = args.threads
    if args.dim is not None:
        cfg.d = args.dim
    cfg.validate()
    os.makedirs(cfg.out, exist_ok=True)
    t0 = time.perf_counter()
    rows = run_experiment(cfg)
    total = time.perf_counter() - t0
    write_results(rows, os.path.join(cfg.out, "results.csv"), timing=cfg.timing)
    walls = {}
    for r in rows:
        walls.setdefault(f"{r.statistic}@{r.lam:g}", r.wall_time)
    walls["total"] = total
    write_meta(os.path.join(cfg.out, "meta.txt"), cfg, walls if cfg.timing else {"total": 0.0})
    print(f"{len(rows)} rows -> {os.path.join(cfg.out, 'results.csv')}")


COMMANDS = {"sample": _cmd_sample, "hull": _cmd_hull, "scores": _cmd_scores,
            "rescale": _cmd_rescale, "festoon": _cmd_festoon, "experiment": _cmd_experiment}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RandPolytopeError, RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
