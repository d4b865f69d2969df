"""Command line: ``siamloc {generate,train,evaluate,reproduce}``.

A run is described by a JSON config (``--config``) and/or a preset; the most
common fields can be overridden by flags. Output goes to the config's
``output_dir`` (or ``--out``), re-rooted under $SIAMLOC_OUTPUT_DIR if set.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import OUTPUT_DIR_ENV, ExperimentConfig, preset, unsupervised
from .exceptions import SiamlocError
from .experiments import SUITES, cmd_evaluate, cmd_generate, cmd_reproduce, cmd_train


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument(
        "--preset",
        choices=["supervised", "semisupervised", "unsupervised", "t_intersection"],
        help="start from a named config instead of the defaults",
    )
    p.add_argument("--out", help=f"output directory (relative paths go under ${OUTPUT_DIR_ENV} when set)")
    p.add_argument("--seed", type=int)
    p.add_argument("--regime", choices=["supervised", "semisupervised", "unsupervised"])
    p.add_argument("--method", choices=["siamese", "fcnn", "sammon"])
    p.add_argument("--mode", choices=["uniform", "t_intersection"])
    p.add_argument("--nlos", action="store_true", help="drop the direct path")
    p.add_argument("--num-scatterers", type=int)
    p.add_argument("--sigma", type=float, help="feature scaling exponent")
    p.add_argument("--anchor-fraction", type=float)
    p.add_argument("--anchored-only", action="store_true", help="train on the anchored samples only")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--k", type=int, nargs="+", dest="k_values", help="neighborhood sizes for TW/CT")


def _run_dir_config(args):
    """config.json of an existing run directory named by --out, if any."""
    if args.verb not in ("train", "evaluate") or not args.out:
        return None
    path = replace(ExperimentConfig(), output_dir=args.out).resolved_output_dir() / "config.json"
    return ExperimentConfig.load(path) if path.exists() else None


def build_config(args) -> ExperimentConfig:
    """--config, else the run directory's config.json (train/evaluate), else
    --preset, else defaults; then flag overrides."""
    run_cfg = _run_dir_config(args)
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    elif run_cfg is not None:
        cfg = run_cfg
    elif args.preset:
        cfg = preset(args.preset)
    else:
        cfg = ExperimentConfig()
    if args.regime and args.regime != cfg.regime:
        frac = args.anchor_fraction
        if frac is None:
            frac = {"supervised": 1.0, "semisupervised": 0.1, "unsupervised": 0.0}[args.regime]
        if args.regime == "unsupervised":
            cfg = unsupervised(cfg)
        else:
            cfg = cfg.with_regime(args.regime, anchor_fraction=frac)
    changes = {}
    for name in ("seed", "method", "mode", "sigma", "anchor_fraction", "n_train", "n_test"):
        value = getattr(args, name)
        if value is not None:
            changes[name] = value
    if args.k_values:
        changes["k_values"] = tuple(args.k_values)
    if args.anchored_only:
        changes["anchored_only"] = True
    if args.out:
        changes["output_dir"] = args.out
    scene = {}
    if args.nlos:
        scene["los"] = False
    if args.num_scatterers is not None:
        scene["num_scatterers"] = args.num_scatterers
    if scene:
        changes["scene"] = replace(cfg.scene, **scene)
    sgd = {}
    for flag, name in (("epochs", "epochs"), ("batch_size", "batch_size"), ("learning_rate", "learning_rate"), ("l2", "l2_lambda")):
        value = getattr(args, flag)
        if value is not None:
            sgd[name] = value
    if sgd:
        changes["sgd"] = replace(cfg.sgd, **sgd)
    return replace(cfg, **changes) if changes else cfg


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="siamloc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("generate", help="simulate CSI and write train/test datasets")
    _add_common(p)
    p.add_argument("--csv", action="store_true", help="also write plain-text CSV copies")

    p = sub.add_parser("train", help="train on train.npz in the output directory")
    _add_common(p)

    p = sub.add_parser("evaluate", help="write metric reports and scatter exports")
    _add_common(p)
    p.add_argument("--split", choices=["train", "test"], default="test")

    p = sub.add_parser("reproduce", help="run a whole experiment suite")
    _add_common(p)
    p.add_argument("suite", choices=SUITES)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args)
        if args.verb == "generate":
            for split, path in cmd_generate(cfg, csv_export=args.csv).items():
                print(f"{split}: {path}")
        elif args.verb == "train":
            print(cmd_train(cfg))
        elif args.verb == "evaluate":
            print(cmd_evaluate(cfg, split=args.split).to_text(), end="")
        else:
            print(cmd_reproduce(args.suite, cfg), end="")
    except (SiamlocError, OSError) as exc:
        print(f"siamloc: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
