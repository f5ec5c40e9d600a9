"""Sum-product BP waterfall on a fixture code.

Runs the BP baseline over an Eb/N0 sweep with the frame-error stopping
rule and writes the harness CSV.  With the default arguments this
reproduces the (49,24) operating points quoted in the README:

    python3 scripts/bp_baseline.py
    python3 scripts/bp_baseline.py --code codes/ldpc_121_60.alist \
        --ebn0 2 3 4 --iters 20 --min-fe 300
"""
import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from mmpd.bp import BpConfig  # noqa: E402
from mmpd.codes import load_alist  # noqa: E402
from mmpd.harness import StopRule, bp_decoder, run_sweep  # noqa: E402


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--code", default="codes/ldpc_49_24.alist")
    ap.add_argument("--ebn0", type=float, nargs="+", default=[4.0, 5.0])
    ap.add_argument("--iters", type=int, default=50)
    ap.add_argument("--min-fe", type=int, default=1000)
    ap.add_argument("--max-frames", type=int, default=2_000_000)
    ap.add_argument("--seed", type=int, default=424)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=None,
                    help="CSV path (default results/bp{iters}_{code}.csv)")
    args = ap.parse_args(argv)

    spec = load_alist(args.code)
    out = args.out
    if out is None:
        os.makedirs("results", exist_ok=True)
        out = os.path.join("results", f"bp{args.iters}_{spec.name}.csv")

    decoder = bp_decoder(BpConfig(max_iterations=args.iters))
    stop = StopRule(min_frame_errors=args.min_fe, max_frames=args.max_frames)
    run_sweep(decoder, spec, args.ebn0, stop, args.seed,
              decoder_name=f"bp{args.iters}", csv_path=out,
              workers=args.workers, verbose=True)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
