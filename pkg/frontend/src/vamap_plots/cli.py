"""Command line: render one figure kind from a results directory."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import render_map, render_mospa, render_runtime
from .readers import SchemaError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vamap-plots", description="figure generation for vamap results")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("render", help="render a figure from CSV results")
    r.add_argument("--kind", choices=["map", "mospa", "runtime"], required=True)
    r.add_argument("--in", dest="in_dir", required=True, help="results directory")
    r.add_argument("--out", dest="out_file", required=True, help="output image path")
    r.add_argument("--method", default=None, help="method directory for map figures")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    in_dir = Path(args.in_dir)
    out_file = Path(args.out_file)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    try:
        if args.kind == "map":
            render_map(in_dir, out_file, method=args.method)
        elif args.kind == "mospa":
            render_mospa(in_dir, out_file)
        else:
            render_runtime(in_dir, out_file)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out_file}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
