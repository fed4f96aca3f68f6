"""Command-line interface: ``tppca <command> [options]``.

Commands
--------
simulate      Sphere/Euclidean root-estimation study, or (landmark manifold)
              a synthetic landmark dataset simulated along a tree.
estimate-root Root estimate of a landmark dataset on a tree.
tppca         Full tangent phylogenetic PCA pipeline.
ppca          Euclidean phylogenetic PCA of aligned landmark coordinates.
validate      Check tree and data files without analysing them.

Settings come from ``--config FILE`` (``key = value`` lines) and are
overridden by explicit flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .brownian import LITERAL_CLOCKS, SCHEMES
from .config import INITIALIZERS, MANIFOLDS, AnalysisConfig
from .errors import StageError, TppcaError
from .phylo import read_newick
from .shapes import read_landmarks_csv, reconcile, species_mean


def _common(parser):
    g = parser.add_argument_group("settings (override --config)")
    g.add_argument("--config", help="key = value configuration file")
    g.add_argument("--manifold", choices=MANIFOLDS)
    g.add_argument("--seed", type=int)
    g.add_argument("--k", type=int, help="number of retained components")
    g.add_argument("--epsilon", type=float, help="root-iteration stopping threshold")
    g.add_argument("--max-iter", dest="max_iter", type=int)
    g.add_argument("--initializer", choices=INITIALIZERS)
    g.add_argument("--sigma", type=float, help="kernel width (default: sigma rule)")
    g.add_argument("--beta", type=float, help="kernel amplitude")
    g.add_argument("--scheme", choices=SCHEMES)
    g.add_argument("--literal-clock", dest="literal_clock", choices=LITERAL_CLOCKS)
    g.add_argument("--step", type=float, help="Brownian time step")
    g.add_argument("--replicates", type=int)
    g.add_argument("--ridge", type=float)
    g.add_argument("--workers", type=int)
    g.add_argument("--no-procrustes", dest="procrustes", action="store_const", const=False)
    g.add_argument("--keep-scale", dest="keep_scale", action="store_const", const=True)
    g.add_argument("--out", help="output directory")


SETTINGS = ("manifold", "seed", "k", "epsilon", "max_iter", "initializer", "sigma", "beta",
            "scheme", "literal_clock", "step", "replicates", "ridge", "workers", "procrustes",
            "keep_scale", "out")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tppca", description="Phylogenetic PCA on Riemannian manifolds.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate data or run the root-estimation study")
    p.add_argument("--tree", help="Newick tree (default for the study: four-leaf tree)")
    p.add_argument("--root", help="landmark CSV holding the root shape (landmark manifold)")
    _common(p)

    for name, text in [("estimate-root", "estimate the root of a landmark dataset"),
                       ("tppca", "tangent phylogenetic PCA"),
                       ("ppca", "Euclidean phylogenetic PCA")]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--tree", required=True, help="Newick tree file")
        p.add_argument("--data", required=True, help="landmark CSV file")
        _common(p)

    p = sub.add_parser("validate", help="check input files only")
    p.add_argument("--tree", required=True)
    p.add_argument("--data")
    p.add_argument("--config")
    return parser


def load_config(args):
    cfg = AnalysisConfig.from_file(args.config) if getattr(args, "config", None) else AnalysisConfig()
    return cfg.replace(**{k: getattr(args, k, None) for k in SETTINGS})


def _load(stage, fn, path):
    try:
        return fn(path)
    except (TppcaError, OSError) as exc:
        raise StageError(stage, exc) from exc


def _cmd_simulate(args, cfg):
    tree = _load("read-tree", read_newick, args.tree) if args.tree else None
    if cfg.manifold in ("sphere", "euclidean"):
        summary = pipeline.run_simulation_study(cfg, tree)
        summary.pop("rows")
        print(json.dumps(summary, indent=2, sort_keys=True))
        return
    if tree is None:
        raise StageError("simulate", TppcaError("landmark simulation needs --tree"))
    root = None
    if args.root:
        root = _load("read-data", read_landmarks_csv, args.root).coords[0]
    dataset, _ = pipeline.simulate_landmark_dataset(cfg, tree, root, out=cfg.out)
    print(f"wrote {len(dataset)} simulated shapes to {Path(cfg.out) / 'landmarks.csv'}")


def _cmd_analysis(command, args, cfg):
    tree = _load("read-tree", read_newick, args.tree)
    dataset = _load("read-data", read_landmarks_csv, args.data)
    if command == "estimate-root":
        _, report = pipeline.run_estimate_root(cfg, dataset, tree, out=cfg.out)
    elif command == "tppca":
        _, report = pipeline.run_tppca(cfg, dataset, tree, out=cfg.out)
    else:
        _, report = pipeline.run_ppca(cfg, dataset, tree, out=cfg.out)
    print(json.dumps(report, indent=2, sort_keys=True))


def _cmd_validate(args):
    tree = _load("read-tree", read_newick, args.tree)
    print(f"tree: {tree.n_leaves} leaves, ultrametric={tree.is_ultrametric()}")
    if args.config:
        AnalysisConfig.from_file(args.config)
        print("config: ok")
    if args.data:
        dataset = _load("read-data", read_landmarks_csv, args.data)
        try:
            reconcile(species_mean(dataset), tree)
        except TppcaError as exc:
            raise StageError("reconcile", exc) from exc
        print(f"data: {len(dataset)} records, {len(set(dataset.species))} species, "
              f"{dataset.n_landmarks} landmarks; all leaves matched")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            _cmd_validate(args)
            return 0
        try:
            cfg = load_config(args)
        except (TppcaError, OSError) as exc:
            raise StageError("config", exc) from exc
        if args.command == "simulate":
            _cmd_simulate(args, cfg)
        else:
            _cmd_analysis(args.command, args, cfg)
    except StageError as exc:
        print(f"tppca: error: {exc}", file=sys.stderr)
        return 2
    except TppcaError as exc:
        print(f"tppca: error: [{args.command}] {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
