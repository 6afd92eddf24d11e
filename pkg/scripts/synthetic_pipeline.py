#!/usr/bin/env python3
"""End-to-end run on synthetic data calibrated to reference fits.

Simulates a maneuver file with the reference counts, then runs the
univariate, bivariate and POT commands on it and compares against the
brute-force true probabilities of the generator.

    python scripts/synthetic_pipeline.py --out runs/demo --seed 3
"""
import argparse
import contextlib
import io
from pathlib import Path

from evtss import cli


def _run(argv: list[str]) -> Path:
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = cli.main(argv)
    print(buf.getvalue(), end="")
    if code == cli.EXIT_USAGE:
        raise SystemExit(f"command failed: {' '.join(argv)}")
    return Path(buf.getvalue().strip().splitlines()[-1].removeprefix("written to "))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/pipeline")
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--mc-size", default="100000")
    ap.add_argument("--truth-n", default="2000000")
    args = ap.parse_args()
    common = ["--out", args.out, "--seed", str(args.seed)]

    sim = _run(["simulate", "--reference-counts", "--truth", "--truth-n", args.truth_n, *common])
    csv = str(sim / "maneuvers.csv")
    _run(["fit-bm", "--input", csv, "--covariates", "speed_opposing,male,volume_high,style_risky",
          "--mc-size", args.mc_size, *common])
    _run(["fit-bm", "--input", csv, "--measure", "thw", "--covariates", "speed_passed,curve",
          "--mc-size", args.mc_size, *common])
    _run(["fit-biv", "--input", csv, "--limit", "1.5,2.0", "--bootstrap", "200", *common])
    _run(["pot", "--input", csv, "--limit", "1.5", *common])
    print(f"\nall reports under {args.out}")


if __name__ == "__main__":
    main()
