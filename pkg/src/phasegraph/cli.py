"""Command-line driver.

    phasegraph generate KIND --out DIR      write a synthetic benchmark to files
    phasegraph spectrum CONFIG              compute and store the eigenbasis
    phasegraph segment CONFIG|MANIFEST      run one segmentation
    phasegraph sweep CONFIG                 run a parameter grid with repeats

The output directory and the sweep worker count can also be set through
PHASEGRAPH_OUTPUT_DIR and PHASEGRAPH_WORKERS; command-line flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import apply_overrides, load_config
from .errors import ConfigError, PhaseGraphError
from .ingestion import (
    atomic_write_text, make_four_corners, make_mushroom_table, make_two_moons, make_two_region_image,
    write_csv, write_table_csv,
)
from .pipeline import apply_environment, basis_for, build_problem, run_segmentation, run_sweep, write_outputs
from .spectral import save_basis

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


def _matrix_csv(path, A):
    atomic_write_text(path, "\n".join(",".join(repr(float(v)) for v in row) for row in A) + "\n")


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind in ("two_moons", "four_corners"):
        if args.kind == "two_moons":
            feats, labels = make_two_moons(args.n_total or 3000, 0.1 if args.noise is None else args.noise, args.seed)
        else:
            feats, labels = make_four_corners(args.n_total or 2000, args.classes, args.spread, args.seed)
        X = feats.points
        header = [f"x{j + 1}" for j in range(X.shape[1])] + ["label"]
        write_csv(out / "points.csv", header, [[*(repr(float(v)) for v in x), int(l)] for x, l in zip(X, labels)])
        print(out / "points.csv")
    elif args.kind == "two_region_image":
        obs, clean, labels = make_two_region_image(noise=0.04 if args.noise is None else args.noise, seed=args.seed)
        _matrix_csv(out / "image.csv", np.clip(obs, 0.0, 1.0))
        _matrix_csv(out / "clean.csv", clean)
        write_csv(out / "truth.csv", ["vertex", "label"], [[i, int(l)] for i, l in enumerate(labels.ravel())])
        print(out / "image.csv")
    else:
        table = make_mushroom_table(args.rows, args.seed)
        write_table_csv(out / "table.csv", table)
        print(out / "table.csv")
    return EXIT_OK


def _overrides(pairs):
    over = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        over[key.strip()] = value.strip()
    return over


def _load(args):
    cfg = load_config(args.config)
    cfg = apply_overrides(cfg, _overrides(args.set)) if args.set else cfg
    return apply_environment(cfg, output_dir=args.output_dir, workers=getattr(args, "workers", None))


def cmd_spectrum(args) -> int:
    cfg = _load(args)
    basis = basis_for(cfg, build_problem(cfg))
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    save_basis(basis, out / "eigenvalues.csv", out / "eigenvectors.csv")
    print(f"m={basis.m} smallest eigenvalues written to {out / 'eigenvalues.csv'}")
    return EXIT_OK


def cmd_segment(args) -> int:
    cfg = _load(args)
    result = run_segmentation(cfg)
    files = write_outputs(result, cfg)
    m = result.metrics
    line = f"misclassified {m['misclassification']}/{m['n']} after {m['steps']} steps"
    if "foc" in m:
        line += f", FOC {m['foc']:.6f}"
    print(line)
    for w in m["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    if args.check:
        manifest = json.loads(Path(args.config).read_text())
        new = json.loads(Path(files["manifest"]).read_text())["labels_sha256"]
        if manifest.get("labels_sha256") != new:
            print("labels differ from the manifest", file=sys.stderr)
            return EXIT_FAILURE
        print("labels identical to the manifest")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    summary = run_sweep(cfg)
    print(summary)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phasegraph", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic benchmark dataset")
    g.add_argument("kind", choices=["two_moons", "four_corners", "two_region_image", "mushroom"])
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-total", type=int, help="number of points (two_moons, four_corners)")
    g.add_argument("--noise", type=float, help="noise level (two_moons, two_region_image)")
    g.add_argument("--spread", type=float, default=0.5, help="blob standard deviation (four_corners)")
    g.add_argument("--classes", type=int, default=4, help="number of corners used (four_corners)")
    g.add_argument("--rows", type=int, default=4062, help="table rows (mushroom)")
    g.set_defaults(func=cmd_generate)

    def common(sp):
        sp.add_argument("config", help="INI configuration file or JSON run manifest")
        sp.add_argument("--output-dir", help="overrides [output] dir and PHASEGRAPH_OUTPUT_DIR")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value (repeatable)")

    s = sub.add_parser("spectrum", help="compute the smallest Laplacian eigenpairs")
    common(s)
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("segment", help="run one segmentation")
    common(s)
    s.add_argument("--check", action="store_true", help="with a manifest: fail unless the labels are byte-identical")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("sweep", help="run a parameter grid with repeats")
    common(s)
    s.add_argument("--workers", type=int, help="overrides [sweep] workers and PHASEGRAPH_WORKERS")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PhaseGraphError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
