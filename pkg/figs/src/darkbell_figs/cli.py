"""Command-line wrapper: one figure id, one input directory, one image."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import FIGURE_IDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="darkbell-figs",
        description="Regenerate a reference figure from darkbell CSV outputs",
    )
    parser.add_argument("figure_id", choices=FIGURE_IDS)
    parser.add_argument("input_dir", type=Path, help="directory of simulator run outputs")
    parser.add_argument("-o", "--output", type=Path, help="output file (default: <input>/<id>.png)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    ext = ".txt" if args.figure_id == "table1" else ".png"
    output = args.output or args.input_dir / f"{args.figure_id}{ext}"
    spec = FigureSpec(figure_id=args.figure_id, input_dir=args.input_dir, output_path=output)
    try:
        path = render(spec)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
