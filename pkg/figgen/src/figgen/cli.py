"""Command line entry point: ``figgen <figure-id> --in <csv...> --out <path>``."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from . import FiggenError, __version__
from .figures import FIGURES, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figgen",
        description="Render publication-style figures from vibrecoil CSV "
                    "artifacts.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("figure", choices=sorted(FIGURES),
                        help="figure id to render")
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        metavar="CSV", help="input CSV artifact(s)")
    parser.add_argument("--out", required=True, metavar="PATH",
                        help="output image path (format from extension)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        path = render(args.figure, args.inputs, args.out)
    except FiggenError as exc:
        print(f"figgen: error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
