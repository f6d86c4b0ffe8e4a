"""Command line: qzeno-plot fig1|fig2 --in DIR [--out FILE]."""

from __future__ import annotations

import argparse
import sys

from .figures import MissingColumnError, MissingFileError, render_fig1_style, render_fig2_style


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qzeno-plot",
        description="render figures from a qzeno run directory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("fig1", "fig2"):
        p = sub.add_parser(name)
        p.add_argument("--in", dest="run_dir", required=True,
                       help="run output directory")
        p.add_argument("--out", default=None, help="output image path")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    render = render_fig1_style if args.command == "fig1" else render_fig2_style
    try:
        written = render(args.run_dir, args.out)
    except (MissingColumnError, MissingFileError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
