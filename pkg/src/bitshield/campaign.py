"""Monte-Carlo fault-injection campaigns and per-bit vulnerability scans.

A campaign sweeps a list of bit-error rates.  At each BER it repeats
{inject -> decode -> rebuild model -> score} until the running mean of the
score stabilizes, then reports mean, spread, and decoder counters.  The
per-iteration RNG stream is derived from (seed, ber, iteration), so results
are bit-identical no matter how iterations are scheduled across workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bitcodec import FloatLayout, layout_key, patterns_to_values, values_to_patterns
from .evalharness import EvalSet, TinyModel, accuracy, numeric_metrics, quantize_model
from .faultinj import FaultSpec, inject
from .schemes import (ConfigError, MemoryImage, SchemeConfig, mset_decode_array,
                      mset_encode_array, unpack_image)

DEFAULT_BERS = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
METRICS = ("model_accuracy", "numeric_metrics")
BITSCAN_MODES = ("none", "mset")


def worker_count() -> int:
    """Worker cap from BITSHIELD_THREADS; 0 or unset means auto-detect."""
    raw = os.environ.get("BITSHIELD_THREADS", "").strip()
    if raw == "":
        n = 0
    else:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"BITSHIELD_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise ConfigError("BITSHIELD_THREADS must be >= 0")
    if n == 0:
        n = os.cpu_count() or 1
    return n


@dataclass(frozen=True)
class CampaignConfig:
    scheme: SchemeConfig
    bers: tuple
    seed: int
    min_iterations: int = 100
    max_iterations: int = 1500
    convergence_tolerance: float = 0.01
    convergence_window: int = 50
    metric: str = "model_accuracy"

    def __post_init__(self):
        object.__setattr__(self, "bers", tuple(float(b) for b in self.bers))
        if not self.bers:
            raise ConfigError("bers must be non-empty")
        if any(not (0.0 <= b <= 1.0) for b in self.bers):
            raise ConfigError("every BER must lie in [0, 1]")
        if list(self.bers) != sorted(self.bers):
            raise ConfigError("bers must be sorted ascending")
        if self.min_iterations < 1 or self.max_iterations < self.min_iterations:
            raise ConfigError("need 1 <= min_iterations <= max_iterations")
        if self.convergence_tolerance <= 0.0:
            raise ConfigError("convergence_tolerance must be positive")
        if self.convergence_window < 1:
            raise ConfigError("convergence_window must be >= 1")
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}")


@dataclass(frozen=True)
class BerResult:
    ber: float
    mean_accuracy: float
    sample_std: float
    iterations_run: int
    mean_flips: float
    corrected_count: int
    due_count: int


@dataclass(frozen=True)
class CampaignResult:
    scheme: SchemeConfig
    dtype: str
    metric: str
    clean_value: float
    rows: tuple


def converged(history, window: int, tolerance: float) -> bool:
    """True when the running mean moved < tolerance over the last `window` points.

    Compares the mean of the full history against the mean as it stood
    `window` iterations ago.  Histories no longer than the window have no
    earlier mean to compare with and always return False.
    """
    n = len(history)
    if n <= window:
        return False
    now = float(np.mean(history[:n]))
    before = float(np.mean(history[:n - window]))
    return abs(now - before) < tolerance


def _earliest_stop(values, min_iterations, window, tolerance):
    """First prefix length at which the campaign may stop, or None.

    The convergence test needs min_iterations of history plus a full window
    on top, so prefixes shorter than min_iterations + window are not
    candidates.  Scanning every candidate length in order makes the stopping
    point a pure function of the value sequence: workers can race ahead,
    results past the stopping point are simply discarded.
    """
    first = min_iterations + window
    if len(values) < first:
        return None
    cs = np.concatenate([[0.0], np.cumsum(values)])
    for t in range(first, len(values) + 1):
        now = cs[t] / t
        before = cs[t - window] / (t - window)
        if abs(now - before) < tolerance:
            return t
    return None


def _flatten_tensors(tensors: dict):
    specs = [(name, np.asarray(arr).shape, int(np.asarray(arr).size))
             for name, arr in tensors.items()]
    return specs


def _rebuild_model(tensors: dict) -> TinyModel:
    return TinyModel.from_tensors(tensors)


class _Scorer:
    """Maps one injected image to the campaign's scalar metric."""

    def __init__(self, config, image, eval_set, clean_tensors):
        self.config = config
        self.image = image
        self.eval_set = eval_set
        self.clean_tensors = clean_tensors

    def __call__(self, ber: float, iteration: int):
        spec = FaultSpec(ber=ber, seed=self.config.seed, iteration=iteration)
        corrupted, receipt = inject(self.image, spec)
        tensors, status = unpack_image(corrupted)
        if self.config.metric == "model_accuracy":
            value = accuracy(_rebuild_model(tensors), self.eval_set)
        else:
            nm = numeric_metrics(self.clean_tensors, tensors)
            value = 1.0 - nm.fraction_changed
        return value, receipt.flips_total, status.corrected, status.due


def run_campaign(config: CampaignConfig, model: TinyModel, image: MemoryImage,
                 eval_set: EvalSet, progress=None) -> CampaignResult:
    """Sweeps config.bers on one encoded image; deterministic per seed."""
    if image.scheme != config.scheme:
        raise ConfigError(
            f"image was packed with {image.scheme.kind.value}, campaign wants "
            f"{config.scheme.kind.value}")
    image_names = {t.name for t in image.manifest}
    model_names = set(model.tensors())
    if image_names != model_names:
        raise ConfigError("image manifest does not match the model's tensors")

    clean_tensors, clean_status = unpack_image(image)
    if clean_status.corrected or clean_status.due:
        raise ConfigError("image fails to decode cleanly before injection")
    if config.metric == "model_accuracy":
        clean_value = accuracy(_rebuild_model(clean_tensors), eval_set)
    else:
        clean_value = 1.0

    scorer = _Scorer(config, image, eval_set, clean_tensors)
    workers = worker_count()
    rows = []
    for ber in config.bers:
        rows.append(_run_one_ber(config, scorer, ber, workers))
        if progress is not None:
            progress(rows[-1])
    return CampaignResult(scheme=config.scheme, dtype=layout_key(image.layout),
                          metric=config.metric, clean_value=float(clean_value),
                          rows=tuple(rows))


def _run_one_ber(config, scorer, ber, workers) -> BerResult:
    records = []
    values = []
    stop = None
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        next_it = 0
        while stop is None and next_it < config.max_iterations:
            block = range(next_it, min(next_it + max(workers, 1),
                                       config.max_iterations))
            if pool is None:
                outs = [scorer(ber, i) for i in block]
            else:
                outs = list(pool.map(lambda i: scorer(ber, i), block))
            records.extend(outs)
            values.extend(out[0] for out in outs)
            next_it = block.stop
            stop = _earliest_stop(values, config.min_iterations,
                                  config.convergence_window,
                                  config.convergence_tolerance)
    finally:
        if pool is not None:
            pool.shutdown()
    if stop is None:
        stop = config.max_iterations
    used = records[:stop]
    vals = np.array([u[0] for u in used], dtype=np.float64)
    return BerResult(
        ber=float(ber),
        mean_accuracy=float(vals.mean()),
        sample_std=float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
        iterations_run=stop,
        mean_flips=float(np.mean([u[1] for u in used])),
        corrected_count=int(sum(u[2] for u in used)),
        due_count=int(sum(u[3] for u in used)),
    )


# ---------------------------------------------------------------------------
# Per-bit vulnerability scan

@dataclass(frozen=True)
class BitscanResult:
    bit_index: int
    mode: str
    clean_accuracy: float
    accuracies: np.ndarray

    @property
    def repetitions(self) -> int:
        return int(self.accuracies.size)

    @property
    def mean_accuracy(self) -> float:
        return float(self.accuracies.mean())

    @property
    def min_accuracy(self) -> float:
        return float(self.accuracies.min())


def bitscan(model: TinyModel, eval_set: EvalSet, layout: FloatLayout,
            bit_index: int, repetitions: int = 1000, seed: int = 0,
            mode: str = "none") -> BitscanResult:
    """Flips bit_index of one uniformly chosen parameter word per repetition.

    mode "none" scans raw words; mode "mset" stores words through the
    exponent-MSB triplication codec and decodes after the flip, so repaired
    flips land exactly on the fault-free pattern and reuse the cached clean
    accuracy instead of re-running the classifier.
    """
    if not 0 <= bit_index < layout.total_bits:
        raise IndexError(f"bit_index {bit_index} out of range for {layout.total_bits}-bit words")
    if mode not in BITSCAN_MODES:
        raise ConfigError(f"mode must be one of {BITSCAN_MODES}")
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")

    qmodel = quantize_model(model, layout)
    tensors = qmodel.tensors()
    specs = _flatten_tensors(tensors)
    words = np.concatenate([values_to_patterns(arr, layout).reshape(-1)
                            for arr in tensors.values()])

    if mode == "mset":
        stored = mset_encode_array(words, layout)
        clean_words = mset_decode_array(stored, layout)
    else:
        stored = words
        clean_words = words.copy()

    def model_from(word_array) -> TinyModel:
        rebuilt = {}
        offset = 0
        for name, shape, count in specs:
            vals = patterns_to_values(word_array[offset:offset + count], layout)
            rebuilt[name] = vals.reshape(shape)
            offset += count
        return TinyModel.from_tensors(rebuilt)

    clean_accuracy = accuracy(model_from(clean_words), eval_set)
    rng = np.random.default_rng((int(seed), 0xB175CA9, int(bit_index)))
    picks = rng.integers(0, words.size, size=repetitions)
    flip = np.asarray(1 << bit_index, dtype=words.dtype)

    work = clean_words.copy()
    accs = np.empty(repetitions, dtype=np.float64)
    for k, idx in enumerate(picks):
        hit = stored[idx] ^ flip
        if mode == "mset":
            hit = mset_decode_array(np.array([hit], dtype=words.dtype), layout)[0]
        if hit == clean_words[idx]:
            accs[k] = clean_accuracy
            continue
        keep = work[idx]
        work[idx] = hit
        accs[k] = accuracy(model_from(work), eval_set)
        work[idx] = keep
    return BitscanResult(bit_index=bit_index, mode=mode,
                         clean_accuracy=float(clean_accuracy), accuracies=accs)
