"""Tour of the three protection codecs on concrete bit patterns.

Walks one 64-bit line through the SECDED lifecycle (clean decode, a
corrected single flip, a detected-but-uncorrectable double flip), then
shows the two zero-overhead word codecs on a single fp16 value: exponent
MSB triplication and chunk parity.

Run:  python3 demos/codec_tour.py
"""

import numpy as np

from bitshield.bitcodec import FP16, Word, patterns_to_values, values_to_patterns
from bitshield.schemes import (LineFate, cep_decode, cep_encode, mset_decode,
                               mset_encode, secded_code)


def show(label, value, bits):
    print(f"  {label:<24} {value:0{bits}b}")


def secded_walkthrough():
    print("SECDED over a 64-bit line (8 check bits)")
    code = secded_code(64)
    data = 0xDEADBEEF_CAFEF00D
    check = code.encode(data)
    show("data", data, 64)
    show("check bits", check, code.check_bits)

    decoded, status = code.decode(data, check)
    print(f"  clean decode:            fate={status.fate.name}, "
          f"exact={decoded == data}")

    flipped = data ^ (1 << 17)
    decoded, status = code.decode(flipped, check)
    print(f"  single flip at bit 17:   fate={status.fate.name}, "
          f"repaired={decoded == data}")

    flipped = data ^ (1 << 17) ^ (1 << 42)
    decoded, status = code.decode(flipped, check)
    print(f"  double flip at 17 & 42:  fate={status.fate.name} "
          f"(word passes through unrepaired, but the damage is flagged)")
    assert status.fate == LineFate.DETECTED_UNCORRECTABLE
    print()


def mset_walkthrough():
    print("Exponent-MSB triplication on an fp16 word (zero storage overhead)")
    word = int(values_to_patterns(np.array([4.0], np.float32), FP16)[0])
    enc = mset_encode(Word(word, FP16)).bits
    show("original fp16 pattern", word, 16)
    show("encoded (MSB copied)", enc, 16)

    # a flip on the exponent MSB swings the value by orders of magnitude
    repaired = mset_decode(Word(enc ^ (1 << 14), FP16)).bits
    bad_value = patterns_to_values(np.array([word ^ (1 << 14)], np.uint16), FP16)
    good_value = patterns_to_values(np.array([repaired], np.uint16), FP16)
    print(f"  flip bit 14 unprotected: 4.0 becomes {float(bad_value[0]):.6g}")
    print(f"  flip bit 14 with MSET:   majority vote restores "
          f"{float(good_value[0])} (two mantissa LSBs are sacrificed)")
    print()


def cep_walkthrough():
    print("Chunk parity (c=3) on an fp16 word: 4 groups of 3 bits + parity")
    word = 0xBC05
    enc = cep_encode(Word(word, FP16), 3).bits
    show("original pattern", word, 16)
    show("encoded pattern", enc, 16)
    for pos in (15, 7):
        dec = cep_decode(Word(enc ^ (1 << pos), FP16), 3).bits
        show(f"flip bit {pos:2d} -> decode", dec, 16)
    print("  a flipped group fails its parity check and is zeroed;")
    print("  the other chunks come back untouched")
    print()


if __name__ == "__main__":
    secded_walkthrough()
    mset_walkthrough()
    cep_walkthrough()
