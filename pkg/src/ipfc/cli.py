"""Command-line entry point.

Subcommands: evolve, converge, scales, render, spectrum.  Exit codes:
0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import ConfigError, NumericalError
from .field import load_field
from .harness import (
    parse_config,
    render_field,
    run_convergence,
    run_evolution,
    run_scales_study,
    spectrum_report,
    write_pgm,
    write_spectrum_csv,
)


def _load_config(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        cfg = parse_config(fh.read())
    return cfg, os.path.dirname(os.path.abspath(path))


def _load_dump(cfg, base_dir: str, dump_path: str):
    spec = cfg.build_spec()
    grid = cfg.build_grid(spec)
    with open(dump_path, "r", encoding="utf-8") as fh:
        fld = load_field(fh, grid)
    return spec, grid, fld


def _cmd_evolve(args) -> int:
    cfg, base = _load_config(args.config)
    result = run_evolution(cfg, base)
    print(f"energy log: {result['csv']}")
    for p in result["dumps"]:
        print(f"dump: {p}")
    return 0


def _cmd_converge(args) -> int:
    cfg, base = _load_config(args.config)
    rows = run_convergence(cfg, base)
    print("scheme,NT,error,rate")
    for row in rows:
        rate = "" if row["rate"] is None else f"{row['rate']:.3f}"
        print(f"{row['scheme']},{row['nt']},{row['error']:.6e},{rate}")
    return 0


def _cmd_scales(args) -> int:
    cfg, base = _load_config(args.config)
    for res in run_scales_study(cfg, base):
        print(f"m={res['m']}: {res['verdict']} ({res['n_peaks']} peaks)")
    return 0


def _cmd_render(args) -> int:
    cfg, base = _load_config(args.config)
    if cfg.render is None:
        raise ConfigError("missing required section [render]")
    spec, grid, fld = _load_dump(cfg, base, args.dump)
    img = render_field(
        fld, spec, grid, cfg.render.window, cfg.render.resolution, cfg.render.floor_rel
    )
    out_dir = os.path.join(base, cfg.output.dir)
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.dump))[0]
    path = os.path.join(out_dir, stem + ".pgm")
    write_pgm(path, img)
    print(f"raster: {path}")
    return 0


def _cmd_spectrum(args) -> int:
    cfg, base = _load_config(args.config)
    spec, grid, fld = _load_dump(cfg, base, args.dump)
    kxy, amps, verdict = spectrum_report(fld, grid, cfg.spectrum.threshold_rel)
    out_dir = os.path.join(base, cfg.output.dir)
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.dump))[0]
    path = os.path.join(out_dir, stem + "_spectrum.csv")
    write_spectrum_csv(path, kxy, amps)
    print(f"spectrum: {path}")
    print(f"verdict: {verdict} ({len(amps)} peaks)")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ipfc",
        description="Energy-stable spectral solver for multi-length-scale "
        "phase-field-crystal gradient flows",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="run one dynamic evolution")
    p.add_argument("config")
    p.set_defaults(func=_cmd_evolve)

    p = sub.add_parser("converge", help="temporal convergence study")
    p.add_argument("config")
    p.set_defaults(func=_cmd_converge)

    p = sub.add_parser("scales", help="multi-length-scale study")
    p.add_argument("config")
    p.set_defaults(func=_cmd_scales)

    p = sub.add_parser("render", help="raster a field dump to a P5 graymap")
    p.add_argument("config")
    p.add_argument("dump")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("spectrum", help="peak report and symmetry verdict of a dump")
    p.add_argument("config")
    p.add_argument("dump")
    p.set_defaults(func=_cmd_spectrum)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
