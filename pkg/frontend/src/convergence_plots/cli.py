"""plot-convergence: figures from solver harness CSV files."""

import argparse
import sys

from .figure import PlotJob, render
from .report import SchemaError


def parse_guides(text):
    """Comma or space separated slopes; plain fractions like 3/4 work."""
    vals = []
    for tok in text.replace(",", " ").split():
        if "/" in tok:
            num, den = tok.split("/", 1)
            vals.append(float(num) / float(den))
        else:
            vals.append(float(tok))
    return tuple(vals)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="plot-convergence",
        description="Render a log-log strong-convergence figure with error "
                    "bars and reference-slope guides from harness CSV files.")
    parser.add_argument("--csv", nargs="+", required=True, metavar="FILE",
                        help="harness CSV files, one series per beta each")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--guides", default="", metavar="SLOPES",
                        help="reference slopes, e.g. 0.5,0.75,1")
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)

    try:
        guides = parse_guides(args.guides)
    except (ValueError, ZeroDivisionError):
        print(f"plot-convergence: bad --guides value {args.guides!r}",
              file=sys.stderr)
        return 2
    job = PlotJob(csv_paths=tuple(args.csv), out_path=args.out,
                  guides=guides, title=args.title)
    try:
        render(job)
    except (SchemaError, OSError) as exc:
        print(f"plot-convergence: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
