"""Monte-Carlo bit-flip injection over a memory image.

The flip count for one iteration is drawn from Binomial(total_bits, ber),
then that many distinct positions are chosen uniformly over the combined
data + check bit space.  Check bits are eligible targets exactly when the
image carries a SECDED sidecar.

Determinism: the per-iteration generator is seeded from the triple
(seed, ber, iteration) - the BER enters through its IEEE-754 bit pattern -
so results never depend on how iterations are scheduled across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schemes import MemoryImage


@dataclass(frozen=True)
class FaultSpec:
    ber: float
    seed: int
    iteration: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ber <= 1.0:
            raise ValueError(f"bit error rate must be in [0, 1], got {self.ber}")


@dataclass(frozen=True)
class InjectionReceipt:
    flips_total: int
    flips_in_data: int
    flips_in_check: int
    positions: tuple[int, ...] | None = None


def derive_rng(seed: int, ber: float, iteration: int) -> np.random.Generator:
    ber_bits = int(np.float64(ber).view(np.uint64))
    return np.random.default_rng((int(seed), ber_bits, int(iteration)))


def sample_flip_count(total_bits: int, ber: float, rng: np.random.Generator) -> int:
    if total_bits < 0:
        raise ValueError("total_bits must be nonnegative")
    if not 0.0 <= ber <= 1.0:
        raise ValueError(f"bit error rate must be in [0, 1], got {ber}")
    return int(rng.binomial(total_bits, ber))


def _distinct_positions(total: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """count distinct uniform draws from range(total), deterministic per rng."""
    if count == total:
        return np.arange(total, dtype=np.int64)
    if count > total // 2:
        # dense case: cheaper to permute than to reject
        return rng.permutation(total)[:count].astype(np.int64)
    chosen: set[int] = set()
    out = np.empty(count, dtype=np.int64)
    filled = 0
    while filled < count:
        batch = rng.integers(0, total, size=max(count - filled, 16))
        for p in batch:
            p = int(p)
            if p not in chosen:
                chosen.add(p)
                out[filled] = p
                filled += 1
                if filled == count:
                    break
    return out


def inject(image: MemoryImage, spec: FaultSpec,
           keep_positions: bool = False) -> tuple[MemoryImage, InjectionReceipt]:
    """Return a flipped copy of the image and a receipt of what was done."""
    data_bits = image.data_bit_count
    check_bits = image.check_bit_count
    total = data_bits + check_bits
    rng = derive_rng(spec.seed, spec.ber, spec.iteration)
    count = sample_flip_count(total, spec.ber, rng)

    out = image.copy()
    if count == 0:
        return out, InjectionReceipt(0, 0, 0, () if keep_positions else None)

    positions = _distinct_positions(total, count, rng)
    n = image.layout.total_bits
    data_pos = positions[positions < data_bits]
    check_pos = positions[positions >= data_bits] - data_bits

    if data_pos.size:
        word_idx = data_pos // n
        masks = (np.int64(1) << (data_pos % n)).astype(out.words.dtype)
        np.bitwise_xor.at(out.words, word_idx, masks)
    if check_pos.size:
        cbpl = image.check_bits_per_line
        line_idx = check_pos // cbpl
        masks = (np.int64(1) << (check_pos % cbpl)).astype(np.uint16)
        np.bitwise_xor.at(out.check_bits, line_idx, masks)

    receipt = InjectionReceipt(
        flips_total=int(count),
        flips_in_data=int(data_pos.size),
        flips_in_check=int(check_pos.size),
        positions=tuple(int(p) for p in positions) if keep_positions else None,
    )
    return out, receipt
