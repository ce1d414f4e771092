"""bitshield: memory-protection codecs and bit-flip fault-injection campaigns
for floating-point neural-network parameters.

Three protection schemes over a simulated parameter memory:

* SECDED: extended-Hamming ECC over 64- or 128-bit lines with a parity sidecar
  (corrects any single flip, detects any double flip).
* MSET: the exponent MSB of every word is triplicated into the two mantissa
  LSBs and majority-voted on read; zero storage overhead.
* CEP: the top bits of every word are split into c-bit chunks, each followed
  by an embedded even-parity bit; a failed check zeroes the chunk.

Plus a Monte-Carlo campaign driver that injects uniform random bit flips at a
given bit-error rate, decodes, rebuilds a small classifier, and tracks the
accuracy distribution until it converges.
"""

from .bitcodec import (FP16, FP32, LAYOUTS, FloatLayout, Word, extract_fields,
                       flip_bit, from_bits, patterns_to_values, to_bits,
                       values_to_patterns)
from .campaign import (DEFAULT_BERS, BerResult, BitscanResult, CampaignConfig,
                       CampaignResult, bitscan, converged, run_campaign)
from .container import (ContainerError, load_image, load_model, save_image,
                        save_model)
from .evalharness import (EvalSet, NumericMetrics, TinyModel, accuracy,
                          gen_dataset, numeric_metrics, quantize_model,
                          train_model)
from .faultinj import FaultSpec, InjectionReceipt, derive_rng, inject, sample_flip_count
from .oracle import (FlipOutcome, FlipOutcomeTable, analytic_line_exact_rate,
                     exhaustive_double_flip, exhaustive_single_flip)
from .schemes import (ConfigError, DecodeStatus, LineFate, LineStatus,
                      MemoryImage, OverheadReport, SchemeConfig, SchemeKind,
                      TensorSpec, cep_decode, cep_encode, feasible_chunk_sizes,
                      mset_decode, mset_encode, overhead_report, pack_image,
                      secded_decode, secded_encode, unpack_image)

__version__ = "0.1.0"

__all__ = [
    "FP16", "FP32", "LAYOUTS", "FloatLayout", "Word", "extract_fields",
    "flip_bit", "from_bits", "patterns_to_values", "to_bits",
    "values_to_patterns",
    "DEFAULT_BERS", "BerResult", "BitscanResult", "CampaignConfig",
    "CampaignResult", "bitscan", "converged", "run_campaign",
    "ContainerError", "load_image", "load_model", "save_image", "save_model",
    "EvalSet", "NumericMetrics", "TinyModel", "accuracy", "gen_dataset",
    "numeric_metrics", "quantize_model", "train_model",
    "FaultSpec", "InjectionReceipt", "derive_rng", "inject",
    "sample_flip_count",
    "FlipOutcome", "FlipOutcomeTable", "analytic_line_exact_rate",
    "exhaustive_double_flip", "exhaustive_single_flip",
    "ConfigError", "DecodeStatus", "LineFate", "LineStatus", "MemoryImage",
    "OverheadReport", "SchemeConfig", "SchemeKind", "TensorSpec",
    "cep_decode", "cep_encode", "feasible_chunk_sizes", "mset_decode",
    "mset_encode", "overhead_report", "pack_image", "secded_decode",
    "secded_encode", "unpack_image",
    "__version__",
]
