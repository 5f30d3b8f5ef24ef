"""plots: render one benchmark figure from a results/trace CSV.

Usage: plots --csv PATH --fig {fig2,fig3,fig4,fig5} --out PATH --format {png,svg}

fig2/fig3/fig5 read the results schema; fig4 reads the per-iteration trace
schema.  A CSV whose header deviates from the declared schema is refused with
the column diff, and nothing is written.
"""

from __future__ import annotations

import argparse
import sys

from .render import FIGURES, render
from .schema import SchemaError


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plots", description=__doc__)
    ap.add_argument("--csv", required=True, help="input CSV path")
    ap.add_argument("--fig", required=True, choices=FIGURES)
    ap.add_argument("--out", required=True, help="output image path")
    ap.add_argument("--format", choices=("png", "svg"), default="png")
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        render(args.fig, args.csv, args.out, args.format)
    except SchemaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
