"""Protection schemes over parameter words and memory lines.

Three codecs, composable:

* MSET: the exponent MSB of each word is triplicated into the two lowest
  mantissa bits and majority-voted on decode.  Zero storage overhead.
* CEP(c): each word is split into c-bit chunks from the MSB down; every chunk
  gets an even-parity bit appended, displacing an equal number of LSBs.  A
  parity mismatch zeroes the chunk on decode.  Zero storage overhead.
* SECDED: extended Hamming over a packed 64- or 128-bit memory line, check
  bits in a separate sidecar.  Corrects single flips, detects doubles.

Composition order is fixed: word codecs run before line packing, SECDED over
the packed line after; decode reverses that.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .bitcodec import FloatLayout, Word, layout_key, uint_dtype


class ConfigError(ValueError):
    """A scheme/layout combination that violates a precondition."""


class SchemeKind(enum.Enum):
    UNPROTECTED = "none"
    SECDED = "secded"
    MSET = "mset"
    CEP = "cep"
    MSET_SECDED = "mset+secded"
    CEP_SECDED = "cep+secded"

    @property
    def has_secded(self) -> bool:
        return self in (SchemeKind.SECDED, SchemeKind.MSET_SECDED, SchemeKind.CEP_SECDED)

    @property
    def word_codec(self):
        if self in (SchemeKind.MSET, SchemeKind.MSET_SECDED):
            return "mset"
        if self in (SchemeKind.CEP, SchemeKind.CEP_SECDED):
            return "cep"
        return None


ALL_SCHEME_KINDS = tuple(SchemeKind)


@dataclass(frozen=True)
class SchemeConfig:
    kind: SchemeKind
    line_width: int = 64
    chunk_size: int = 3

    def __post_init__(self):
        if self.line_width not in (64, 128):
            raise ConfigError(f"line width must be 64 or 128, got {self.line_width}")

    def validate(self, layout: FloatLayout) -> None:
        if self.line_width % layout.total_bits != 0:
            raise ConfigError(
                f"line width {self.line_width} not a multiple of {layout.total_bits}-bit words")
        if self.kind.word_codec == "cep":
            if self.chunk_size not in feasible_chunk_sizes(layout.total_bits):
                raise ConfigError(
                    f"chunk size {self.chunk_size} infeasible for {layout.total_bits}-bit words; "
                    f"feasible: {sorted(feasible_chunk_sizes(layout.total_bits))}")


# ---------------------------------------------------------------------------
# MSET

def mset_encode(w: Word) -> Word:
    n = w.layout.total_bits
    msb = (w.bits >> (n - 2)) & 1
    return Word((w.bits & ~0b11 & w.layout.word_mask) | (msb << 1) | msb, w.layout)


def mset_decode(w: Word) -> Word:
    n = w.layout.total_bits
    votes = ((w.bits >> (n - 2)) & 1) + ((w.bits >> 1) & 1) + (w.bits & 1)
    maj = 1 if votes >= 2 else 0
    bits = w.bits & ~(1 << (n - 2)) & ~0b11 & w.layout.word_mask
    return Word(bits | (maj << (n - 2)), w.layout)


def mset_encode_array(words: np.ndarray, layout: FloatLayout) -> np.ndarray:
    n = layout.total_bits
    w = np.asarray(words, dtype=uint_dtype(layout))
    msb = (w >> (n - 2)) & 1
    return (w & (layout.word_mask ^ 0b11)) | (msb << 1) | msb


def mset_decode_array(words: np.ndarray, layout: FloatLayout) -> np.ndarray:
    n = layout.total_bits
    w = np.asarray(words, dtype=uint_dtype(layout))
    votes = ((w >> (n - 2)) & 1) + ((w >> 1) & 1) + (w & 1)
    maj = (votes >= 2).astype(uint_dtype(layout))
    cleared = w & (layout.word_mask ^ ((1 << (n - 2)) | 0b11))
    return cleared | (maj << (n - 2))


# ---------------------------------------------------------------------------
# CEP

def feasible_chunk_sizes(total_bits: int) -> set[int]:
    """All chunk sizes c where c+1 groups tile the word exactly."""
    return {c for c in range(1, total_bits) if total_bits % (c + 1) == 0}


def _cep_geometry(total_bits: int, c: int):
    if total_bits % (c + 1) != 0 or not 1 <= c < total_bits:
        raise ConfigError(f"chunk size {c} infeasible for {total_bits}-bit words")
    k = total_bits // (c + 1)
    return k


def cep_encode(w: Word, c: int) -> Word:
    n = w.layout.total_bits
    k = _cep_geometry(n, c)
    out = 0
    for i in range(k):
        chunk = (w.bits >> (n - c - i * c)) & ((1 << c) - 1)
        parity = chunk.bit_count() & 1
        out |= ((chunk << 1) | parity) << (n - (i + 1) * (c + 1))
    return Word(out, w.layout)


def cep_decode(w: Word, c: int) -> Word:
    n = w.layout.total_bits
    k = _cep_geometry(n, c)
    out = 0
    for i in range(k):
        group = (w.bits >> (n - (i + 1) * (c + 1))) & ((1 << (c + 1)) - 1)
        if group.bit_count() & 1 == 0:
            out |= (group >> 1) << (n - c - i * c)
    return Word(out, w.layout)


def cep_encode_array(words: np.ndarray, layout: FloatLayout, c: int) -> np.ndarray:
    n = layout.total_bits
    k = _cep_geometry(n, c)
    w = np.asarray(words, dtype=uint_dtype(layout))
    out = np.zeros_like(w)
    for i in range(k):
        chunk = (w >> (n - c - i * c)) & ((1 << c) - 1)
        parity = (np.bitwise_count(chunk) & 1).astype(w.dtype)
        out |= ((chunk << 1) | parity) << (n - (i + 1) * (c + 1))
    return out


def cep_decode_array(words: np.ndarray, layout: FloatLayout, c: int) -> np.ndarray:
    n = layout.total_bits
    k = _cep_geometry(n, c)
    w = np.asarray(words, dtype=uint_dtype(layout))
    out = np.zeros_like(w)
    for i in range(k):
        group = (w >> (n - (i + 1) * (c + 1))) & ((1 << (c + 1)) - 1)
        ok = (np.bitwise_count(group) & 1) == 0
        out |= np.where(ok, group >> 1, 0).astype(w.dtype) << (n - c - i * c)
    return out


# ---------------------------------------------------------------------------
# SECDED (extended Hamming) over a packed line

class LineFate(enum.IntEnum):
    CLEAN = 0
    CORRECTED = 1
    DETECTED_UNCORRECTABLE = 2


@dataclass(frozen=True)
class LineStatus:
    fate: LineFate
    position: int | None = None  # codeword position; 0 means the overall parity bit


@dataclass
class DecodeStatus:
    """Aggregate per-line outcomes of one unpack pass."""

    clean: int = 0
    corrected: int = 0
    due: int = 0
    fates: np.ndarray | None = None

    @property
    def lines(self) -> int:
        return self.clean + self.corrected + self.due


_R_FOR_WIDTH = {64: 7, 128: 8}


class SecdedCode:
    """Extended Hamming code for one line width.

    Data bits occupy the non-power-of-two codeword positions 1..n in
    ascending order; Hamming parity bit j sits at position 2**j; one overall
    even-parity bit (conceptually position 0) covers the whole codeword.
    The check word stores p_0..p_{r-1} in bits 0..r-1 and the overall parity
    in bit r.
    """

    def __init__(self, width: int):
        if width not in _R_FOR_WIDTH:
            raise ConfigError(f"SECDED line width must be 64 or 128, got {width}")
        self.width = width
        self.r = _R_FOR_WIDTH[width]
        self.n = width + self.r              # Hamming positions 1..n
        self.codeword_bits = self.n + 1      # plus the overall parity bit
        self.check_bits = self.r + 1

        data_positions = [p for p in range(1, self.n + 1) if p & (p - 1)]
        assert len(data_positions) == width
        self.pos_for_databit = data_positions
        databit_for_pos = np.full(1 << self.r, -1, dtype=np.int16)
        for d, p in enumerate(data_positions):
            databit_for_pos[p] = d
        # -1 marks a Hamming parity position (power of two) or, beyond n, an
        # invalid syndrome; keep them distinguishable
        for j in range(self.r):
            databit_for_pos[1 << j] = -2
        databit_for_pos[0] = -2  # unused (s=0 never looked up)
        if self.n + 1 < len(databit_for_pos):
            databit_for_pos[self.n + 1:] = -1
        self.databit_for_pos = databit_for_pos

        masks = []
        for j in range(self.r):
            m = 0
            for d, p in enumerate(data_positions):
                if p >> j & 1:
                    m |= 1 << d
            masks.append(m)
        self.parity_masks = masks
        # 64-bit little-endian limbs of each mask for the vector path
        cols = width // 64
        self.mask_limbs = np.array(
            [[(m >> (64 * k)) & 0xFFFFFFFFFFFFFFFF for k in range(cols)] for m in masks],
            dtype=np.uint64)
        self.cols = cols

    # -- scalar path -------------------------------------------------------

    def encode(self, data: int) -> int:
        check = 0
        for j, m in enumerate(self.parity_masks):
            check |= ((data & m).bit_count() & 1) << j
        overall = (data.bit_count() + check.bit_count()) & 1
        return check | (overall << self.r)

    def decode(self, data: int, check: int) -> tuple[int, LineStatus]:
        s = 0
        for j, m in enumerate(self.parity_masks):
            if ((data & m).bit_count() ^ (check >> j)) & 1:
                s |= 1 << j
        q = (data.bit_count() + check.bit_count()) & 1
        if s == 0:
            if q == 0:
                return data, LineStatus(LineFate.CLEAN)
            return data, LineStatus(LineFate.CORRECTED, position=0)
        if q == 0:
            return data, LineStatus(LineFate.DETECTED_UNCORRECTABLE)
        if s > self.n:
            return data, LineStatus(LineFate.DETECTED_UNCORRECTABLE)
        d = int(self.databit_for_pos[s])
        if d == -2:
            return data, LineStatus(LineFate.CORRECTED, position=s)
        return data ^ (1 << d), LineStatus(LineFate.CORRECTED, position=s)

    # -- vector path over many lines ----------------------------------------

    def encode_lines(self, limbs: np.ndarray) -> np.ndarray:
        """limbs: (n_lines, cols) uint64 of line data; returns uint16 checks."""
        n_lines = limbs.shape[0]
        check = np.zeros(n_lines, dtype=np.uint16)
        for j in range(self.r):
            par = np.zeros(n_lines, dtype=np.uint64)
            for k in range(self.cols):
                par ^= np.bitwise_count(limbs[:, k] & self.mask_limbs[j, k])
            check |= ((par & 1) << j).astype(np.uint16)
        total = np.zeros(n_lines, dtype=np.uint64)
        for k in range(self.cols):
            total ^= np.bitwise_count(limbs[:, k])
        overall = (total ^ np.bitwise_count(check.astype(np.uint64))) & 1
        return check | (overall << self.r).astype(np.uint16)

    def decode_lines(self, limbs: np.ndarray, checks: np.ndarray):
        """In-place vectorized decode.  Returns a LineFate array."""
        n_lines = limbs.shape[0]
        s = np.zeros(n_lines, dtype=np.uint16)
        for j in range(self.r):
            par = np.zeros(n_lines, dtype=np.uint64)
            for k in range(self.cols):
                par ^= np.bitwise_count(limbs[:, k] & self.mask_limbs[j, k])
            par = (par ^ (checks >> j).astype(np.uint64)) & 1
            s |= (par << j).astype(np.uint16)
        total = np.zeros(n_lines, dtype=np.uint64)
        for k in range(self.cols):
            total ^= np.bitwise_count(limbs[:, k])
        q = ((total ^ np.bitwise_count(checks.astype(np.uint64))) & 1).astype(np.uint16)

        fates = np.zeros(n_lines, dtype=np.int8)
        nonzero_s = s != 0
        odd = q == 1
        fates[nonzero_s & ~odd] = LineFate.DETECTED_UNCORRECTABLE
        fates[~nonzero_s & odd] = LineFate.CORRECTED  # overall parity bit flip
        single = nonzero_s & odd
        if single.any():
            d = self.databit_for_pos[s[single]]
            bad = (d == -1) | (s[single] > self.n)
            rows = np.nonzero(single)[0]
            fates[rows[bad]] = LineFate.DETECTED_UNCORRECTABLE
            fates[rows[~bad]] = LineFate.CORRECTED
            flip_rows = rows[(d >= 0) & ~bad]
            dflip = d[(d >= 0) & ~bad].astype(np.int64)
            if flip_rows.size:
                col = (dflip >> 6).astype(np.intp)
                bit = (dflip & 63).astype(np.uint64)
                limbs[flip_rows, col] ^= np.uint64(1) << bit
        return fates


_SECDED_CACHE: dict[int, SecdedCode] = {}


def secded_code(width: int) -> SecdedCode:
    if width not in _SECDED_CACHE:
        _SECDED_CACHE[width] = SecdedCode(width)
    return _SECDED_CACHE[width]


def secded_encode(data: int, width: int = 64) -> int:
    """Check word (r Hamming bits + overall parity) for one line pattern."""
    code = secded_code(width)
    if not 0 <= data < (1 << width):
        raise ConfigError(f"line pattern out of range for {width}-bit line")
    return code.encode(data)


def secded_decode(data: int, check: int, width: int = 64) -> tuple[int, LineStatus]:
    code = secded_code(width)
    return code.decode(data, check)


# ---------------------------------------------------------------------------
# Packing words into lines

@dataclass(frozen=True)
class TensorSpec:
    name: str
    shape: tuple[int, ...]
    word_offset: int
    word_count: int


@dataclass
class MemoryImage:
    """A simulated parameter memory: coded words plus an optional check sidecar.

    Word 0 occupies the least significant bits of line 0, so the flat word
    array *is* the line payload in little-endian order.
    """

    words: np.ndarray
    layout: FloatLayout
    scheme: SchemeConfig
    manifest: list[TensorSpec]
    check_bits: np.ndarray | None = None

    @property
    def words_per_line(self) -> int:
        return self.scheme.line_width // self.layout.total_bits

    @property
    def n_lines(self) -> int:
        return self.words.size // self.words_per_line

    @property
    def data_bit_count(self) -> int:
        return self.words.size * self.layout.total_bits

    @property
    def check_bits_per_line(self) -> int:
        if self.check_bits is None:
            return 0
        return secded_code(self.scheme.line_width).check_bits

    @property
    def check_bit_count(self) -> int:
        return self.n_lines * self.check_bits_per_line

    def line(self, i: int) -> int:
        wpl = self.words_per_line
        n = self.layout.total_bits
        chunk = self.words[i * wpl:(i + 1) * wpl]
        out = 0
        for j, w in enumerate(chunk):
            out |= int(w) << (j * n)
        return out

    @property
    def lines(self) -> list[int]:
        return [self.line(i) for i in range(self.n_lines)]

    def copy(self) -> "MemoryImage":
        return MemoryImage(
            words=self.words.copy(),
            layout=self.layout,
            scheme=self.scheme,
            manifest=list(self.manifest),
            check_bits=None if self.check_bits is None else self.check_bits.copy(),
        )

    def line_limbs(self) -> np.ndarray:
        """Lines as (n_lines, line_width//64) uint64, little-endian limbs."""
        per_limb = 64 // self.layout.total_bits
        w64 = self.words.astype(np.uint64).reshape(self.n_lines, -1, per_limb)
        shifts = (np.arange(per_limb, dtype=np.uint64) * self.layout.total_bits)
        return np.bitwise_or.reduce(w64 << shifts, axis=2)

    def set_from_limbs(self, limbs: np.ndarray) -> None:
        per_limb = 64 // self.layout.total_bits
        n = self.layout.total_bits
        shifts = (np.arange(per_limb, dtype=np.uint64) * n)
        mask = np.uint64((1 << n) - 1)
        expanded = (limbs[:, :, None] >> shifts) & mask
        self.words = expanded.reshape(-1).astype(self.words.dtype)


def _apply_word_codec(words, layout, scheme, direction):
    codec = scheme.kind.word_codec
    if codec is None:
        return words
    if codec == "mset":
        fn = mset_encode_array if direction == "encode" else mset_decode_array
        return fn(words, layout)
    fn = cep_encode_array if direction == "encode" else cep_decode_array
    return fn(words, layout, scheme.chunk_size)


def pack_image(tensors: dict[str, np.ndarray], layout: FloatLayout,
               scheme: SchemeConfig) -> MemoryImage:
    """Quantize tensors to the layout, apply the scheme, pack into lines."""
    scheme.validate(layout)
    from .bitcodec import values_to_patterns

    manifest = []
    parts = []
    offset = 0
    for name, arr in tensors.items():
        pats = values_to_patterns(np.asarray(arr), layout)
        manifest.append(TensorSpec(name, tuple(np.asarray(arr).shape), offset, pats.size))
        parts.append(pats)
        offset += pats.size
    flat = np.concatenate(parts) if parts else np.zeros(0, dtype=uint_dtype(layout))

    wpl = scheme.line_width // layout.total_bits
    pad = (-flat.size) % wpl
    if pad:
        flat = np.concatenate([flat, np.zeros(pad, dtype=flat.dtype)])

    coded = _apply_word_codec(flat, layout, scheme, "encode")
    image = MemoryImage(words=coded, layout=layout, scheme=scheme, manifest=manifest)
    if scheme.kind.has_secded:
        code = secded_code(scheme.line_width)
        image.check_bits = code.encode_lines(image.line_limbs())
    return image


def unpack_image(image: MemoryImage, scheme: SchemeConfig | None = None):
    """Decode an image back to tensors.  Returns (tensors, DecodeStatus).

    Detected-uncorrectable lines pass through unmodified and are counted.
    """
    if scheme is None:
        scheme = image.scheme
    elif scheme != image.scheme:
        raise ConfigError("scheme does not match the one the image was packed with")

    from .bitcodec import patterns_to_values

    work = image.copy()
    if scheme.kind.has_secded:
        if image.check_bits is None:
            raise ConfigError("image lacks the check-bit sidecar required by SECDED")
        code = secded_code(scheme.line_width)
        limbs = work.line_limbs()
        fates = code.decode_lines(limbs, work.check_bits)
        work.set_from_limbs(limbs)
        status = DecodeStatus(
            clean=int((fates == LineFate.CLEAN).sum()),
            corrected=int((fates == LineFate.CORRECTED).sum()),
            due=int((fates == LineFate.DETECTED_UNCORRECTABLE).sum()),
            fates=fates,
        )
    else:
        status = DecodeStatus(clean=work.n_lines)

    decoded = _apply_word_codec(work.words, image.layout, scheme, "decode")
    tensors = {}
    for spec in image.manifest:
        pats = decoded[spec.word_offset:spec.word_offset + spec.word_count]
        tensors[spec.name] = patterns_to_values(pats, image.layout).reshape(spec.shape)
    return tensors, status


# ---------------------------------------------------------------------------
# Storage overhead

@dataclass(frozen=True)
class OverheadReport:
    scheme: SchemeConfig
    layout_name: str
    parameter_count: int
    lines: int
    check_bits_per_line: int
    parity_bits: int
    parity_bytes: float
    raw_overhead: float
    hamming_only_overhead: float

    def __str__(self) -> str:
        head = (f"scheme={self.scheme.kind.value} layout={self.layout_name} "
                f"line_width={self.scheme.line_width} params={self.parameter_count}")
        if self.check_bits_per_line == 0:
            return head + "\nparity storage: 0 bytes (zero-overhead scheme)"
        w = self.scheme.line_width
        r = self.check_bits_per_line - 1
        return (
            head
            + f"\nlines: {self.lines}, check bits per line: {self.check_bits_per_line}"
            + f"\nparity storage: {self.parity_bits} bits = {self.parity_bytes:.1f} bytes"
            + f"\nraw overhead (r+1)/W = {self.check_bits_per_line}/{w}"
            + f" = {self.raw_overhead * 100:.2f}%"
            + f"\nHamming-only overhead r/W = {r}/{w}"
            + f" = {self.hamming_only_overhead * 100:.2f}%"
            + "\nnominal SECDED figures for these widths: 12.5% (64-bit), 7% (128-bit)"
        )


def overhead_report(scheme: SchemeConfig, parameter_count: int,
                    layout: FloatLayout) -> OverheadReport:
    scheme.validate(layout)
    if parameter_count < 0:
        raise ConfigError("parameter count must be nonnegative")
    wpl = scheme.line_width // layout.total_bits
    lines = math.ceil(parameter_count / wpl) if parameter_count else 0
    if scheme.kind.has_secded:
        cbpl = secded_code(scheme.line_width).check_bits
    else:
        cbpl = 0
    parity_bits = lines * cbpl
    return OverheadReport(
        scheme=scheme,
        layout_name=layout_key(layout),
        parameter_count=parameter_count,
        lines=lines,
        check_bits_per_line=cbpl,
        parity_bits=parity_bits,
        parity_bytes=parity_bits / 8,
        raw_overhead=cbpl / scheme.line_width,
        hamming_only_overhead=max(cbpl - 1, 0) / scheme.line_width,
    )
