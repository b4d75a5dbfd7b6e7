"""Command line: `mlsplots render --spec figure.json --out DIR`.

The spec file is JSON: {"kind": "drift|stability|heatmap|field",
"inputs": [...], "output": "name.png", "title"?, "xlabel"?, "ylabel"?,
"labels"?}.  Exit codes: 0 rendered, 2 spec/schema errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import SchemaError, load_spec, render


def main(argv=None):
    parser = argparse.ArgumentParser(prog="mlsplots", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render")
    p.add_argument("--spec", type=Path, required=True, help="figure spec JSON")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    try:
        spec = load_spec(args.spec)
        out = render(spec, args.out)
    except (SchemaError, FileNotFoundError, ValueError) as exc:
        print(f"mlsplots: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
