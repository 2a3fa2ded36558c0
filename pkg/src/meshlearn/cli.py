"""``meshlearn`` command line: train, evaluate, infer, gen-synthetic, inspect.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .config import load_config
from .data import load_dataset
from .errors import ConfigError, DatasetError, MeshError, PoolExhaustedError, ShapeError
from .features import compute_input_features
from .mesh import build_edge_topology, euler_characteristic, load_obj
from .synthetic import gen_synthetic
from .training import evaluate, infer, train

EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _cmd_train(args):
    cfg = load_config(args.config)
    if not cfg.data_dir:
        raise ConfigError(f"{args.config}: data_dir is required")
    data_dir = Path(cfg.data_dir)
    if not data_dir.is_absolute():
        data_dir = (Path(args.config).parent / data_dir).resolve()
    ds = load_dataset(data_dir, cfg.task)
    out = Path(args.out) if args.out else Path(args.config).parent / "run"
    result = train(ds, cfg, out_dir=out, emit=print)
    print(json.dumps({"checkpoint": str(out / "best.ckpt"), "last": str(out / "last.ckpt"),
                      "epochs": len(result.history)}))
    return 0


def _cmd_evaluate(args):
    ckpt = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data, ckpt.config.task)
    metrics = evaluate(ckpt, ds, args.split)
    print(json.dumps(metrics))
    return 0


def _cmd_infer(args):
    ckpt = load_checkpoint(args.checkpoint)
    mesh = load_obj(args.input)
    labels, paths = infer(ckpt, mesh, args.export_pools, stem=Path(args.input).stem)
    if ckpt.config.task == "classification":
        print(json.dumps({"label": labels}))
    else:
        print(json.dumps({"edge_labels": np.asarray(labels).tolist()}))
    for p in paths:
        print(f"wrote {p}", file=sys.stderr)
    return 0


def _cmd_gen(args):
    paths = gen_synthetic(args.out, args.task, args.classes, args.count, args.edges, args.seed)
    print(json.dumps({"written": len(paths), "out": str(args.out)}))
    return 0


def _cmd_inspect(args):
    mesh = load_obj(args.input)
    topo = build_edge_topology(mesh)
    feats = compute_input_features(mesh, topo)
    names = ["dihedral", "angle_min", "angle_max", "ratio_min", "ratio_max"]
    print(f"vertices: {topo.n_vertices}")
    print(f"faces: {topo.n_faces}")
    print(f"edges: {topo.n_edges}")
    print(f"boundary edges: {topo.n_boundary}")
    print(f"euler characteristic: {euler_characteristic(mesh, topo)}")
    for name, row in zip(names, feats):
        print(f"{name}: mean {row.mean():.6f} std {row.std():.6f} min {row.min():.6f} max {row.max():.6f}")
    return 0


def build_parser():
    p = _Parser(prog="meshlearn", description="Edge-based convolutional networks on triangle meshes.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train from a key = value config file")
    t.add_argument("--config", required=True)
    t.add_argument("--out", help="output directory (default: 'run' next to the config)")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("evaluate", help="accuracy of a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=["train", "test"], help="default: test split if present")
    e.set_defaults(func=_cmd_evaluate)

    i = sub.add_parser("infer", help="predict labels for one mesh")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--input", required=True)
    i.add_argument("--export-pools", dest="export_pools", help="write each pooled intermediate mesh as PLY here")
    i.set_defaults(func=_cmd_infer)

    g = sub.add_parser("gen-synthetic", help="write a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--task", choices=["cls", "seg"], required=True)
    g.add_argument("--classes", type=int, default=2)
    g.add_argument("--count", type=int, default=20)
    g.add_argument("--edges", type=int, default=750)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=_cmd_gen)

    s = sub.add_parser("inspect", help="print mesh statistics")
    s.add_argument("--input", required=True)
    s.set_defaults(func=_cmd_inspect)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DatasetError, MeshError, PoolExhaustedError, ShapeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
