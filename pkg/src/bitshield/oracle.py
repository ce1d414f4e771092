"""Ground-truth checks for the codecs, independent of the packed pipeline.

Exhaustive single/double flip enumeration over one word or one line, plus
the closed-form probability that a SECDED line decodes exactly.  These run
the scalar codec paths so they double as a cross-check of the vectorized
kernels used by pack/unpack.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .bitcodec import FloatLayout, Word
from .schemes import (
    ConfigError,
    LineFate,
    LineStatus,
    SchemeConfig,
    SchemeKind,
    cep_decode,
    cep_encode,
    mset_decode,
    mset_encode,
    secded_code,
)


@dataclass(frozen=True)
class FlipOutcome:
    positions: tuple[int, ...]
    decoded: int
    exact: bool
    status: LineStatus | None = None


@dataclass
class FlipOutcomeTable:
    scheme: SchemeConfig
    reference: int          # what a fault-free decode yields
    entries: list[FlipOutcome]

    @property
    def exact_count(self) -> int:
        return sum(1 for e in self.entries if e.exact)

    def count_fate(self, fate: LineFate) -> int:
        return sum(1 for e in self.entries if e.status is not None and e.status.fate == fate)

    def miscorrections(self) -> list[FlipOutcome]:
        """Entries the decoder marked corrected/clean but got wrong."""
        return [e for e in self.entries
                if e.status is not None and not e.exact
                and e.status.fate != LineFate.DETECTED_UNCORRECTABLE]


def _word_pipeline(scheme: SchemeConfig, layout: FloatLayout):
    if scheme.kind == SchemeKind.MSET:
        return (lambda b: mset_encode(Word(b, layout)).bits,
                lambda b: mset_decode(Word(b, layout)).bits,
                layout.total_bits)
    if scheme.kind == SchemeKind.CEP:
        c = scheme.chunk_size
        return (lambda b: cep_encode(Word(b, layout), c).bits,
                lambda b: cep_decode(Word(b, layout), c).bits,
                layout.total_bits)
    raise ConfigError(f"no word-level oracle for scheme {scheme.kind.value}")


def _enumerate_flips(pattern: int, scheme: SchemeConfig,
                     layout: FloatLayout | None, order: int) -> FlipOutcomeTable:
    entries = []
    if scheme.kind == SchemeKind.SECDED:
        code = secded_code(scheme.line_width)
        check = code.encode(pattern)
        reference = pattern
        nbits = scheme.line_width + code.check_bits
        for pos in itertools.combinations(range(nbits), order):
            data, chk = pattern, check
            for p in pos:
                if p < scheme.line_width:
                    data ^= 1 << p
                else:
                    chk ^= 1 << (p - scheme.line_width)
            decoded, status = code.decode(data, chk)
            entries.append(FlipOutcome(pos, decoded, decoded == reference, status))
        return FlipOutcomeTable(scheme, reference, entries)

    if layout is None:
        raise ConfigError("word-level schemes need a layout")
    encode, decode, nbits = _word_pipeline(scheme, layout)
    coded = encode(pattern)
    reference = decode(coded)
    for pos in itertools.combinations(range(nbits), order):
        corrupted = coded
        for p in pos:
            corrupted ^= 1 << p
        decoded = decode(corrupted)
        entries.append(FlipOutcome(pos, decoded, decoded == reference, None))
    return FlipOutcomeTable(scheme, reference, entries)


def exhaustive_single_flip(word_or_line: int, scheme: SchemeConfig,
                           layout: FloatLayout | None = None) -> FlipOutcomeTable:
    return _enumerate_flips(word_or_line, scheme, layout, order=1)


def exhaustive_double_flip(word_or_line: int, scheme: SchemeConfig,
                           layout: FloatLayout | None = None) -> FlipOutcomeTable:
    return _enumerate_flips(word_or_line, scheme, layout, order=2)


def analytic_line_exact_rate(scheme: SchemeConfig, p: float) -> float:
    """P(a SECDED line decodes bit-exact) under independent per-bit flips.

    With L = W + r + 1 codeword bits, that is the chance of at most one flip:
    (1-p)^L + L*p*(1-p)^(L-1).
    """
    if not scheme.kind.has_secded:
        raise ConfigError("analytic rate applies to SECDED schemes only")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"flip probability must be in [0, 1], got {p}")
    code = secded_code(scheme.line_width)
    L = scheme.line_width + code.check_bits
    return (1.0 - p) ** L + L * p * (1.0 - p) ** (L - 1)
