"""Command line entry point: one result CSV in, one image out."""

import argparse
import sys

from .data import EmptyDataError, MissingColumnError
from .plots import FIGURE_KINDS
from .render import FigureSpec, render


def build_parser():
    parser = argparse.ArgumentParser(
        prog="thp-figures",
        description="Render a figure from an experiment result CSV.")
    parser.add_argument("input", nargs="?", help="result CSV path")
    parser.add_argument("-o", "--output", help="image path (.png, .pdf, .svg)")
    parser.add_argument("--kind", choices=FIGURE_KINDS,
                        help="figure kind; default: the CSV's kind metadata")
    parser.add_argument("--list-kinds", action="store_true",
                        help="print the supported figure kinds and exit")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_kinds:
        for kind in FIGURE_KINDS:
            print(kind)
        return 0
    if args.input is None or args.output is None:
        parser.error("input and --output are required unless --list-kinds")
    spec = FigureSpec(input=args.input, output=args.output, kind=args.kind)
    try:
        path = render(spec)
    except (MissingColumnError, EmptyDataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
