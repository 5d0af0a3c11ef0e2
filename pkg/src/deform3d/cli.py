"""Command-line entry point.

Exit codes: 0 success, 1 a check failed (gradcheck, validate), 2 bad config
or input, 3 mesh labels without a matching image color, 4 numerical abort.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .camera import project
from .config import (ConfigError, apply_overrides, build_run_config, format_config,
                     parse_config_text)
from .gradcheck import check_all, format_reports
from .imgproc import AmbiguousColorsError, as_rgb, mse, read_png, ssim, to_gray, write_png
from .losses import binarize, binarize_unit
from .mesh import ObjParseError, load_obj, save_mtl, save_obj, validate
from .objective import NumericalError
from .optim import HISTORY_COLUMNS, UnmatchedLabelsError, build_objective, run_deformation
from .raster import rasterize_depth, rasterize_soft, to_uint8

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_BAD_INPUT = 2
EXIT_UNMATCHED = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("deform3d")


class InputError(Exception):
    """Bad user input; reported on stderr with exit code 2."""


def _mtllib(text):
    for line in text.splitlines():
        parts = line.split("#", 1)[0].split(None, 1)
        if len(parts) == 2 and parts[0] == "mtllib":
            return parts[1].strip()
    return None


def read_mesh(path, mtl=None):
    """Load an OBJ; the MTL is ``mtl`` if given, else its ``mtllib`` next to the OBJ."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"mesh file not found: {path}")
    text = path.read_text()
    if mtl is None:
        lib = _mtllib(text)
        mtl = path.parent / lib if lib else None
    mtl_text = None
    if mtl is not None:
        mtl = Path(mtl)
        if not mtl.is_file():
            raise InputError(f"material file not found: {mtl}")
        mtl_text = mtl.read_text()
    try:
        return load_obj(text, mtl_text)
    except ObjParseError as exc:
        raise InputError(f"{path}: {exc}") from None


def _load_config(path, overrides):
    run, paths = {}, {}
    base = Path.cwd()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        run, paths = parse_config_text(p.read_text())
        base = p.parent
    run, paths = apply_overrides(run, paths, overrides)
    resolved = {k: base / v for k, v in paths.items()}
    return build_run_config(run), resolved, paths


def _write_csv(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in history:
            w.writerow([str(row[0])] + [format(float(x), ".17g") for x in row[1:]])


def _binarized_png(obj, d):
    """Per-label renders of the binarized map, rescaled to 0..255."""
    out = {}
    for lab, sil in obj.render(d).items():
        m, _ = binarize_unit(sil.clamped(obj.raster.background_eps), obj.binarize)
        out[lab] = np.round(np.clip(m, 0, 1) * 255).astype(np.uint8)
    return out


def cmd_deform(args):
    cfg, paths, raw_paths = _load_config(args.config, args.set)
    for key in ("mesh", "image"):
        if key not in paths:
            raise ConfigError(f"config must set '{key}'")
    mesh = read_mesh(paths["mesh"], paths.get("mtl"))
    if not paths["image"].is_file():
        raise InputError(f"image file not found: {paths['image']}")
    image = read_png(paths["image"])
    out = paths.get("output_dir", Path(args.config).parent / "out" if args.config else Path("out"))
    out.mkdir(parents=True, exist_ok=True)
    try:
        obj = build_objective(mesh, image, cfg)
    except AmbiguousColorsError as exc:
        raise ConfigError(str(exc)) from None
    stem = "deformed"
    labels = {lab: mesh.label_table[lab][0] for lab in mesh.labels}

    def checkpoint(it, d):
        ck = out / "checkpoints"
        ck.mkdir(exist_ok=True)
        (ck / f"iter_{it:06d}.obj").write_text(save_obj(mesh, d, mtllib=f"{stem}.mtl"))
        for lab, img in _binarized_png(obj, d).items():
            write_png(ck / f"iter_{it:06d}_{labels[lab]}.png", img)

    def progress(row):
        if args.verbose:
            print(" ".join([str(row[0])] + [format(x, ".6g") for x in row[1:]]),
                  file=sys.stderr)

    res = run_deformation(mesh, image, cfg, progress=progress, checkpoint=checkpoint,
                          objective=obj)
    (out / f"{stem}.obj").write_text(save_obj(res.mesh, mtllib=f"{stem}.mtl"))
    (out / f"{stem}.mtl").write_text(save_mtl(res.mesh))
    _write_csv(out / "loss.csv", res.history)
    (out / "run_config.txt").write_text(format_config(cfg, {k: str(v) for k, v in
                                                            raw_paths.items()}))
    first, last = res.history[0][1], res.final.total
    print(f"iterations={len(res.history)} initial_loss={first:.6g} final_loss={last:.6g} "
          f"output={out}")
    return EXIT_OK


def _render_camera(args, mesh):
    cfg, _, _ = _load_config(args.config, args.set)
    return cfg, cfg.camera(mesh, (args.width, args.height))


def cmd_render(args):
    mesh = read_mesh(args.mesh)
    cfg, cam = _render_camera(args, mesh)
    if args.mode == "depth":
        img = to_uint8(rasterize_depth(mesh, cam), depth=True)
    else:
        pix, _ = project(cam, mesh.vertices)
        s = rasterize_soft(pix, mesh.faces, (cam.height, cam.width), cfg.raster)
        s = s.clamped(cfg.raster.background_eps)
        if args.mode == "soft":
            img = to_uint8(s)
        else:
            img = np.where(binarize(s, cfg.binarize) > 0, 255, 0).astype(np.uint8)
    write_png(args.out, img)
    return EXIT_OK


def cmd_metrics(args):
    a, b = (read_png(p) for p in (args.a, args.b))
    if a.shape[:2] != b.shape[:2]:
        print(f"error: shape mismatch {a.shape[:2]} vs {b.shape[:2]}", file=sys.stderr)
        return EXIT_BAD_INPUT
    if a.ndim != b.ndim:
        a, b = as_rgb(a), as_rgb(b)
    print(f"mse={mse(a, b):.6f} ssim={ssim(to_gray(a), to_gray(b)):.6f}")
    return EXIT_OK


def cmd_gradcheck(args):
    reports = check_all(seed=args.seed, tolerance=args.tol)
    print(format_reports(reports))
    failed = [r.term for r in reports if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}")
        return EXIT_CHECK_FAILED
    print("all gradients match")
    return EXIT_OK


def cmd_validate(args):
    mesh = read_mesh(args.mesh)
    problems = validate(mesh)
    print(f"vertices={mesh.n_vertices} faces={mesh.n_faces} labels={len(mesh.labels)}")
    for msg in problems:
        print(msg)
    return EXIT_CHECK_FAILED if problems else EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="deform3d", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("deform", help="optimize a mesh toward a semantic image")
    d.add_argument("--config", required=True)
    d.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    d.add_argument("-v", "--verbose", action="store_true", help="print losses per iteration")
    d.set_defaults(func=cmd_deform)

    r = sub.add_parser("render", help="render a mesh to PNG")
    r.add_argument("--mesh", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--mode", choices=("soft", "binary", "depth"), default="soft")
    r.add_argument("--width", type=int, default=512)
    r.add_argument("--height", type=int, default=512)
    r.add_argument("--config", help="config file supplying camera and raster settings")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    r.set_defaults(func=cmd_render)

    m = sub.add_parser("metrics", help="MSE and SSIM between two PNGs")
    m.add_argument("--a", required=True)
    m.add_argument("--b", required=True)
    m.set_defaults(func=cmd_metrics)

    g = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    g.add_argument("--tol", type=float, default=1e-3)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)

    v = sub.add_parser("validate", help="report mesh defects")
    v.add_argument("--mesh", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def _set_threads():
    n = os.environ.get("DEFORM3D_THREADS")
    if not n:
        return
    import numba

    try:
        k = int(n)
    except ValueError:
        raise ConfigError(f"DEFORM3D_THREADS must be an integer, got {n!r}") from None
    if k < 1:
        raise ConfigError("DEFORM3D_THREADS must be >= 1")
    numba.set_num_threads(min(k, numba.config.NUMBA_NUM_THREADS))


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        _set_threads()
        return args.func(args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except UnmatchedLabelsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNMATCHED
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
