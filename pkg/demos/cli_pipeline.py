"""The full command-line pipeline in one script.

Drives every subcommand through the same entry point the `bitshield`
executable uses: train and save a model container, pack it into a
protected image, sweep bit-error rates for three schemes, render the SVG
report, scan the exponent MSB, compare chunk sizes, and finish with the
codec self-check. Everything lands in a scratch directory.

Run:  python3 demos/cli_pipeline.py [--outdir DIR]
"""

import argparse
import os

from bitshield.cli import main

STEPS = [
    ["gen-model", "--seed", "5", "--hidden", "64", "--features", "12",
     "--train-size", "768", "--eval-size", "512", "--epochs", "300",
     "--lr", "0.7", "--out", "{d}/model.bsm"],
    ["encode", "--model", "{d}/model.bsm", "--scheme", "secded",
     "--dtype", "fp16", "--out", "{d}/model.bsi"],
    ["campaign", "--model", "{d}/model.bsm", "--image-scheme",
     "none,secded,cep", "--bers", "1e-5,1e-4,1e-3", "--seed", "7",
     "--min-iterations", "30", "--max-iterations", "120",
     "--window", "15", "--out", "{d}/sweep.csv"],
    ["report", "--in", "{d}/sweep.csv", "--svg", "{d}/sweep.svg"],
    ["bitscan", "--model", "{d}/model.bsm", "--bit", "14", "--reps", "60",
     "--seed", "7", "--out", "{d}/scan.csv"],
    ["chunk-explore", "--model", "{d}/model.bsm", "--ber", "3e-4",
     "--seed", "7", "--min-iterations", "30", "--max-iterations", "120",
     "--out", "{d}/chunks.csv"],
    ["verify", "--lines", "2", "--words", "200", "--seed", "7"],
]


def run(outdir):
    for step in STEPS:
        argv = [a.format(d=outdir) for a in step]
        print(f"\n$ bitshield {' '.join(argv)}")
        rc = main(argv)
        assert rc == 0, f"step failed: {argv}"
    print(f"\nall steps passed; outputs in {outdir}/")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="demos/out")
    args = ap.parse_args()
    os.makedirs(args.outdir, exist_ok=True)
    run(args.outdir)
