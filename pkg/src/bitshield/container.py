"""On-disk containers: .bsm model files and .bsi encoded-image files.

Both are a fixed 8-byte header (4-byte magic + little-endian uint32 manifest
length), a UTF-8 JSON manifest, then raw little-endian payload bytes.  The
image payload is the line stream followed, when present, by one uint16 per
line of check bits.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .bitcodec import LAYOUTS, layout_key, uint_dtype
from .schemes import MemoryImage, SchemeConfig, SchemeKind, TensorSpec, secded_code

MODEL_MAGIC = b"BSM1"
IMAGE_MAGIC = b"BSI1"
FORMAT_VERSION = 1


class ContainerError(IOError):
    """Malformed or mismatched container file."""


def _write(path, magic: bytes, manifest: dict, payload: bytes) -> None:
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload)


def _read(path, magic: bytes):
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8 or head[:4] != magic:
            raise ContainerError(f"{path}: bad magic, expected {magic.decode()}")
        (mlen,) = struct.unpack("<I", head[4:])
        manifest = json.loads(fh.read(mlen).decode())
        payload = fh.read()
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ContainerError(f"{path}: unsupported format_version")
    return manifest, payload


# ---------------------------------------------------------------------------
# Model container (.bsm): named float tensors plus free-form metadata

def save_model(path, tensors: dict[str, np.ndarray], dtype: str = "fp32",
               meta: dict | None = None) -> None:
    if dtype not in LAYOUTS:
        raise ContainerError(f"dtype must be one of {sorted(LAYOUTS)}")
    specs = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64).astype(
            np.float32 if dtype == "fp32" else np.float16)
        raw = arr.astype(arr.dtype.newbyteorder("<")).tobytes()
        specs.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": dtype,
            "byte_offset": offset,
            "element_count": int(arr.size),
        })
        chunks.append(raw)
        offset += len(raw)
    manifest = {"format_version": FORMAT_VERSION, "tensors": specs}
    if meta:
        manifest["meta"] = meta
    _write(path, MODEL_MAGIC, manifest, b"".join(chunks))


def load_model(path):
    """Returns (tensors, meta).  Tensor arrays come back in their stored dtype."""
    manifest, payload = _read(path, MODEL_MAGIC)
    tensors = {}
    for spec in manifest["tensors"]:
        if spec["dtype"] not in LAYOUTS:
            raise ContainerError(f"{path}: unknown tensor dtype {spec['dtype']}")
        np_dtype = np.dtype("<f4" if spec["dtype"] == "fp32" else "<f2")
        nbytes = spec["element_count"] * np_dtype.itemsize
        raw = payload[spec["byte_offset"]:spec["byte_offset"] + nbytes]
        if len(raw) != nbytes:
            raise ContainerError(f"{path}: truncated payload for tensor {spec['name']}")
        arr = np.frombuffer(raw, dtype=np_dtype).reshape(spec["shape"])
        tensors[spec["name"]] = arr.astype(np_dtype.newbyteorder("="))
    return tensors, manifest.get("meta", {})


# ---------------------------------------------------------------------------
# Encoded image container (.bsi)

def save_image(path, image: MemoryImage) -> None:
    manifest = {
        "format_version": FORMAT_VERSION,
        "layout": layout_key(image.layout),
        "scheme": {
            "kind": image.scheme.kind.value,
            "line_width": image.scheme.line_width,
            "chunk_size": image.scheme.chunk_size,
        },
        "line_width": image.scheme.line_width,
        "line_count": image.n_lines,
        "words_per_line": image.words_per_line,
        "check_bits_per_line": image.check_bits_per_line,
        "tensors": [
            {"name": s.name, "shape": list(s.shape),
             "word_offset": s.word_offset, "word_count": s.word_count}
            for s in image.manifest
        ],
    }
    payload = image.words.astype(image.words.dtype.newbyteorder("<")).tobytes()
    if image.check_bits is not None:
        payload += image.check_bits.astype("<u2").tobytes()
    _write(path, IMAGE_MAGIC, manifest, payload)


def load_image(path) -> MemoryImage:
    manifest, payload = _read(path, IMAGE_MAGIC)
    layout = LAYOUTS[manifest["layout"]]
    scheme = SchemeConfig(
        kind=SchemeKind(manifest["scheme"]["kind"]),
        line_width=manifest["scheme"]["line_width"],
        chunk_size=manifest["scheme"]["chunk_size"],
    )
    n_words = manifest["line_count"] * manifest["words_per_line"]
    word_np = np.dtype(uint_dtype(layout)).newbyteorder("<")
    data_bytes = n_words * word_np.itemsize
    words = np.frombuffer(payload[:data_bytes], dtype=word_np)
    if words.size != n_words:
        raise ContainerError(f"{path}: truncated line payload")
    words = words.astype(word_np.newbyteorder("="))
    check = None
    cbpl = manifest["check_bits_per_line"]
    if cbpl:
        expect = secded_code(scheme.line_width).check_bits
        if cbpl != expect:
            raise ContainerError(f"{path}: sidecar has {cbpl} bits per line, expected {expect}")
        raw = payload[data_bytes:data_bytes + 2 * manifest["line_count"]]
        check = np.frombuffer(raw, dtype="<u2")
        if check.size != manifest["line_count"]:
            raise ContainerError(f"{path}: truncated check-bit sidecar")
        check = check.astype("=u2")
    specs = [TensorSpec(t["name"], tuple(t["shape"]), t["word_offset"], t["word_count"])
             for t in manifest["tensors"]]
    return MemoryImage(words=words, layout=layout, scheme=scheme,
                       manifest=specs, check_bits=check)
