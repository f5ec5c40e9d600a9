"""Command-line front end: report CSVs in, one figure out."""
import argparse
import sys

from .render import PlotSpec, SchemaError, Y_MODES, render


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="plotviz",
        description="Render BER waterfalls or -ln(BER) bar charts from "
                    "decoder report CSVs.")
    ap.add_argument("--in", dest="inputs", nargs="+", required=True,
                    metavar="CSV", help="input report CSV(s)")
    ap.add_argument("--out", required=True, metavar="IMAGE",
                    help="output image path (format from extension)")
    ap.add_argument("--mode", choices=Y_MODES, default="ber_semilog")
    ap.add_argument("--title", default="")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = PlotSpec(inputs=tuple(args.inputs), output=args.out,
                        y_mode=args.mode, title=args.title)
        series = render(spec)
    except (SchemaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    total = sum(len(s.ebn0_db) for s in series)
    print(f"wrote {args.out} ({len(series)} series, {total} points)")
    return 0


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
