"""Tests for the exhaustive flip tables and the closed-form exact rate."""

import numpy as np
import pytest

from bitshield.bitcodec import FP16, FP32
from bitshield.oracle import (
    analytic_line_exact_rate,
    exhaustive_double_flip,
    exhaustive_single_flip,
)
from bitshield.schemes import (
    ConfigError,
    LineFate,
    SchemeConfig,
    SchemeKind,
    secded_code,
    secded_encode,
)

SECDED64 = SchemeConfig(kind=SchemeKind.SECDED, line_width=64)
SECDED128 = SchemeConfig(kind=SchemeKind.SECDED, line_width=128)
MSET = SchemeConfig(kind=SchemeKind.MSET)
CEP3 = SchemeConfig(kind=SchemeKind.CEP, chunk_size=3)


class TestSecdedTables:
    def test_single_flip_table_64(self):
        tab = exhaustive_single_flip(0xD00DFEED0FF1CE00, SECDED64)
        assert len(tab.entries) == 72
        assert tab.exact_count == 72
        assert tab.count_fate(LineFate.CORRECTED) == 72
        assert tab.count_fate(LineFate.DETECTED_UNCORRECTABLE) == 0
        assert tab.miscorrections() == []

    def test_double_flip_table_64(self):
        tab = exhaustive_double_flip(0xD00DFEED0FF1CE00, SECDED64)
        assert len(tab.entries) == 72 * 71 // 2 == 2556
        assert tab.count_fate(LineFate.DETECTED_UNCORRECTABLE) == 2556
        assert tab.miscorrections() == []

    def test_single_flip_table_128(self):
        line = (0xD00DFEED0FF1CE00 << 64) | 0x0123456789ABCDEF
        tab = exhaustive_single_flip(line, SECDED128)
        assert len(tab.entries) == 137
        assert tab.exact_count == 137

    def test_double_flip_table_128(self):
        line = (0xD00DFEED0FF1CE00 << 64) | 0x0123456789ABCDEF
        tab = exhaustive_double_flip(line, SECDED128)
        assert len(tab.entries) == 137 * 136 // 2 == 9316
        assert tab.count_fate(LineFate.DETECTED_UNCORRECTABLE) == 9316
        assert tab.miscorrections() == []

    def test_flip_positions_cover_data_and_check(self):
        tab = exhaustive_single_flip(0, SECDED64)
        positions = {e.positions[0] for e in tab.entries}
        assert positions == set(range(72))
        # flipping a check bit must leave the data untouched
        for e in tab.entries:
            if e.positions[0] >= 64:
                assert e.decoded == 0


class TestWordTables:
    def test_mset_single_flip_structure(self):
        tab = exhaustive_single_flip(0xBC05, MSET, FP16)
        assert tab.reference == 0xBC04
        assert len(tab.entries) == 16
        # flips on the exponent MSB or either replica always decode exactly
        protected = {0, 1, 14}
        for e in tab.entries:
            if e.positions[0] in protected:
                assert e.exact
            assert e.status is None
        assert tab.exact_count == 3

    def test_mset_fp32_protected_positions(self):
        tab = exhaustive_single_flip(0x3F800000, MSET, FP32)
        assert len(tab.entries) == 32
        for e in tab.entries:
            assert e.exact == (e.positions[0] in {0, 1, 30})

    def test_cep_single_flip_structure(self):
        tab = exhaustive_single_flip(0x3C00, CEP3, FP16)
        assert tab.reference == 0x3C00  # low decoded bits already zero
        assert len(tab.entries) == 16
        # flips in the two groups whose chunks are already zero decode exactly
        assert tab.exact_count == 8
        for e in tab.entries:
            group = 3 - e.positions[0] // 4  # encoded groups are 4 bits wide
            chunk_shift = 16 - 3 * (group + 1)
            expect = tab.reference & ~(0b111 << chunk_shift)
            assert e.decoded == expect
            assert e.status is None

    def test_cep_decode_zeroes_exactly_one_chunk(self):
        # 0xFFFF encodes to 0xFFFF; any single flip breaks one group's parity
        tab = exhaustive_single_flip(0xFFFF, CEP3, FP16)
        assert tab.reference == 0xFFF0  # chunks repacked, low bits zero
        assert tab.exact_count == 0
        for e in tab.entries:
            group = 3 - e.positions[0] // 4
            chunk_shift = 16 - 3 * (group + 1)
            expect = tab.reference & ~(0b111 << chunk_shift)
            assert e.decoded == expect

    def test_layout_required_for_word_schemes(self):
        with pytest.raises(ConfigError):
            exhaustive_single_flip(0x3C00, MSET)

    def test_no_word_oracle_for_unprotected(self):
        with pytest.raises(ConfigError):
            exhaustive_single_flip(0, SchemeConfig(kind=SchemeKind.UNPROTECTED), FP16)


class TestAnalyticRate:
    def test_frozen_values(self):
        assert analytic_line_exact_rate(SECDED64, 1e-3) == pytest.approx(
            0.997560248823737, rel=1e-12)
        assert analytic_line_exact_rate(SECDED64, 0.5) == pytest.approx(
            73.0 * 2.0 ** -72, rel=1e-12)

    def test_boundaries(self):
        assert analytic_line_exact_rate(SECDED64, 0.0) == 1.0
        assert analytic_line_exact_rate(SECDED64, 1.0) == 0.0
        assert analytic_line_exact_rate(SECDED128, 0.0) == 1.0

    def test_codeword_length_enters(self):
        # 137-bit codewords fail more often than 72-bit ones at equal p
        p = 1e-3
        assert (analytic_line_exact_rate(SECDED128, p)
                < analytic_line_exact_rate(SECDED64, p))

    def test_non_secded_rejected(self):
        with pytest.raises(ConfigError):
            analytic_line_exact_rate(MSET, 1e-3)
        with pytest.raises(ConfigError):
            analytic_line_exact_rate(SchemeConfig(kind=SchemeKind.UNPROTECTED), 1e-3)

    def test_bad_probability_rejected(self):
        with pytest.raises(ValueError):
            analytic_line_exact_rate(SECDED64, -0.1)
        with pytest.raises(ValueError):
            analytic_line_exact_rate(SECDED64, 1.1)

    def test_matches_exhaustive_weight_enumeration(self):
        # direct check against summed binomial terms for small cases
        for p in (1e-4, 1e-2, 0.3):
            L = 72
            want = (1 - p) ** L + L * p * (1 - p) ** (L - 1)
            assert analytic_line_exact_rate(SECDED64, p) == pytest.approx(want)

    def test_monte_carlo_agreement(self):
        # empirical exact-rate over independently flipped codewords
        rng = np.random.default_rng(7)
        code = secded_code(64)
        p = 0.01
        line = 0xFACEB00CDEADBEEF
        check = secded_encode(line, 64)
        n = 20_000
        flips = rng.random((n, 72)) < p
        exact = 0
        for row in flips:
            data, chk = line, check
            for pos in np.nonzero(row)[0]:
                pos = int(pos)
                if pos < 64:
                    data ^= 1 << pos
                else:
                    chk ^= 1 << (pos - 64)
            decoded, status = code.decode(data, chk)
            if decoded == line and status.fate != LineFate.DETECTED_UNCORRECTABLE:
                exact += 1
        want = analytic_line_exact_rate(SECDED64, p)
        se = np.sqrt(want * (1 - want) / n)
        assert abs(exact / n - want) < 4 * se
