"""Small end-to-end fault-injection campaign with an SVG report.

Trains a compact spiral classifier, packs its fp16 parameters into a
simulated 64-bit-line memory under three protection schemes, sweeps a
band of bit-error rates with Monte-Carlo injection, and renders the
accuracy curves to an SVG. Runs in well under a minute.

Run:  python3 demos/campaign_sweep.py [--outdir DIR]
"""

import argparse
import csv
import os

from bitshield.bitcodec import FP16
from bitshield.campaign import CampaignConfig, run_campaign
from bitshield.cli import RESULTS_HEADER, main
from bitshield.evalharness import (accuracy, gen_dataset, quantize_model,
                                   train_model)
from bitshield.schemes import SchemeConfig, SchemeKind, pack_image

BERS = (1e-5, 1e-4, 3e-4, 1e-3, 3e-3)
SCHEMES = (SchemeKind.UNPROTECTED, SchemeKind.SECDED, SchemeKind.CEP)


def run(outdir):
    train, eval_set = gen_dataset(seed=5, train_size=1024, eval_size=512)
    model = train_model(train, seed=5, hidden=128, epochs=400, lr=0.7)
    qmodel = quantize_model(model, FP16)
    clean = accuracy(qmodel, eval_set)
    print(f"clean fp16 accuracy: {clean:.4f} ({qmodel.param_count} params)")

    csv_path = os.path.join(outdir, "sweep.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for kind in SCHEMES:
            scheme = SchemeConfig(kind=kind, line_width=64, chunk_size=3)
            image = pack_image(qmodel.tensors(), FP16, scheme)
            config = CampaignConfig(scheme=scheme, bers=BERS, seed=7,
                                    min_iterations=40, max_iterations=200,
                                    convergence_window=20)
            result = run_campaign(config, qmodel, image, eval_set)
            label = kind.value if kind is not SchemeKind.CEP else "cep:c3"
            for row in result.rows:
                print(f"  {label:<8} ber={row.ber:8.0e} "
                      f"mean={row.mean_accuracy:.4f} "
                      f"iters={row.iterations_run} "
                      f"corrected={row.corrected_count} due={row.due_count}")
                writer.writerow([label, 64, "fp16", f"{row.ber:g}",
                                 f"{row.mean_accuracy:.6f}",
                                 f"{row.sample_std:.6f}", row.iterations_run,
                                 f"{row.mean_flips:.4f}", row.corrected_count,
                                 row.due_count])
    print(f"wrote {csv_path}")

    svg_path = os.path.join(outdir, "sweep.svg")
    main(["report", "--in", csv_path, "--svg", svg_path])


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="demos/out")
    args = ap.parse_args()
    os.makedirs(args.outdir, exist_ok=True)
    run(args.outdir)
