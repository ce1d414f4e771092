"""Per-bit vulnerability scan of fp16 parameters.

For each bit position, repeatedly flips that bit in one randomly chosen
stored parameter and measures evaluation accuracy. The exponent MSB
(bit 14) is catastrophic unprotected; with triplication decoding enabled
the same flips become harmless. Mantissa bits barely matter at all.

Run:  python3 demos/bit_vulnerability.py
"""

from bitshield.bitcodec import FP16
from bitshield.campaign import bitscan
from bitshield.evalharness import gen_dataset, train_model

REPS = 120
BITS = (15, 14, 13, 10, 5, 0)  # sign, exponent MSB on down to mantissa LSB


def main():
    train, eval_set = gen_dataset(seed=5, train_size=1024, eval_size=512)
    model = train_model(train, seed=5, hidden=128, epochs=400, lr=0.7)

    print(f"{'bit':>4} {'unprotected':>24} {'with triplication':>24}")
    print(f"{'':>4} {'mean':>12} {'worst':>11} {'mean':>12} {'worst':>11}")
    for bit in BITS:
        row = []
        for mode in ("none", "mset"):
            scan = bitscan(model, eval_set, FP16, bit, repetitions=REPS,
                           seed=3, mode=mode)
            row += [scan.mean_accuracy, scan.min_accuracy]
        print(f"{bit:>4} {row[0]:>12.4f} {row[1]:>11.4f} "
              f"{row[2]:>12.4f} {row[3]:>11.4f}")
    print("\nbit 14 is the exponent MSB: a single flip there can wipe out")
    print("the model, and majority voting recovers it completely. The")
    print("triplication codec clears bits 1 and 0, which costs nothing")
    print("visible at this scale.")


if __name__ == "__main__":
    main()
