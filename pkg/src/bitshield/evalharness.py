"""Deterministic classifier harness used to score decoded parameters.

The task is a 3-class 2-D spiral, expanded through a fixed trigonometric
random-feature map so that one wide ReLU hidden layer trains quickly under
plain full-batch gradient descent.  Everything is seeded: the dataset, the
feature map, and the weight init, so a (dataset_seed, train_seed) pair pins
the model bit-for-bit on a given build.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bitcodec import FP16, FP32, FloatLayout, float_dtype

N_CLASSES = 3
DEFAULT_EVAL_SIZE = 4096
DEFAULT_TRAIN_SIZE = 4096
DEFAULT_FEATURES = 30           # trig features added on top of the raw (x, y)
DEFAULT_HIDDEN = 4000
DEFAULT_EPOCHS = 600
DEFAULT_LR = 0.7

_SPIRAL_TURNS = 1.75
_SPIRAL_NOISE = 0.14
_FEATURE_BANDWIDTH = 0.45


@dataclass(frozen=True)
class EvalSet:
    inputs: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return int(self.labels.size)


def _class_counts(size: int) -> list[int]:
    base, extra = divmod(size, N_CLASSES)
    return [base + (1 if j < extra else 0) for j in range(N_CLASSES)]


def _spiral_points(size: int, rng: np.random.Generator):
    xs, ys = [], []
    for j, count in enumerate(_class_counts(size)):
        t = rng.uniform(0.0, 1.0, count)
        r = 0.2 + 0.8 * t
        theta = (_SPIRAL_TURNS * 2.0 * np.pi) * t + j * (2.0 * np.pi / N_CLASSES)
        theta = theta + rng.normal(0.0, _SPIRAL_NOISE, count)
        xs.append(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))
        ys.append(np.full(count, j, dtype=np.int64))
    order = rng.permutation(size)
    return np.concatenate(xs)[order], np.concatenate(ys)[order]


def gen_dataset(seed: int, train_size: int = DEFAULT_TRAIN_SIZE,
                eval_size: int = DEFAULT_EVAL_SIZE,
                n_features: int = DEFAULT_FEATURES):
    """Returns (train, eval) EvalSets sharing one fixed feature map."""
    if train_size <= 0 or eval_size <= 0:
        raise ValueError("dataset sizes must be positive")
    feat_rng = np.random.default_rng((int(seed), 0xFEA7))
    omega = feat_rng.normal(0.0, 1.0 / _FEATURE_BANDWIDTH, size=(n_features, 2))
    phase = feat_rng.uniform(0.0, 2.0 * np.pi, size=n_features)

    def featurize(points):
        trig = np.cos(points @ omega.T + phase)
        return np.column_stack([points, trig]).astype(np.float32)

    sets = []
    for split_tag, size in ((1, train_size), (2, eval_size)):
        rng = np.random.default_rng((int(seed), 0xDA7A, split_tag))
        pts, labels = _spiral_points(size, rng)
        sets.append(EvalSet(inputs=featurize(pts), labels=labels))
    return sets[0], sets[1]


# ---------------------------------------------------------------------------
# Model

@dataclass
class TinyModel:
    """Dense ReLU classifier: alternating weight/bias pairs, argmax output."""

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def param_count(self) -> int:
        return int(sum(w.size for w in self.weights) + sum(b.size for b in self.biases))

    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"layer{i}.weight"] = w
            out[f"layer{i}.bias"] = b
        return out

    @classmethod
    def from_tensors(cls, tensors: dict) -> "TinyModel":
        model = cls()
        i = 0
        while f"layer{i}.weight" in tensors:
            model.weights.append(np.asarray(tensors[f"layer{i}.weight"]))
            model.biases.append(np.asarray(tensors[f"layer{i}.bias"]))
            i += 1
        if not model.weights or len(tensors) != 2 * len(model.weights):
            raise ValueError("tensor dict does not describe a dense layer stack")
        return model

    def forward(self, inputs: np.ndarray, dtype=None) -> np.ndarray:
        if dtype is None:
            dtype = _wide_dtype(self.weights[0].dtype)
        if inputs.shape[1] != self.weights[0].shape[0]:
            raise ValueError(
                f"input width {inputs.shape[1]} does not match model ({self.weights[0].shape[0]})")
        h = inputs.astype(dtype, copy=False)
        with np.errstate(all="ignore"):
            for i, (w, b) in enumerate(zip(self.weights, self.biases)):
                h = h @ w.astype(dtype, copy=False) + b.astype(dtype, copy=False)
                if i < self.n_layers - 1:
                    h = np.maximum(h, 0.0)
        return h


def _wide_dtype(param_dtype):
    # one precision level up from the stored layout
    return np.float64 if np.dtype(param_dtype).itemsize >= 4 else np.float32


def quantize_model(model: TinyModel, layout: FloatLayout) -> TinyModel:
    dt = float_dtype(layout)
    return TinyModel(
        weights=[w.astype(dt) for w in model.weights],
        biases=[b.astype(dt) for b in model.biases],
    )


# ---------------------------------------------------------------------------
# Training

def _init_layers(sizes, rng):
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        scale = np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)).astype(np.float32))
        biases.append(np.zeros(fan_out, dtype=np.float32))
    return weights, biases


def _gd_run(train, sizes, seed, epochs, lr):
    rng = np.random.default_rng((int(seed), 0x7124))
    weights, biases = _init_layers(sizes, rng)
    X = train.inputs.astype(np.float32)
    Y = train.labels
    onehot = np.zeros((X.shape[0], N_CLASSES), dtype=np.float32)
    onehot[np.arange(X.shape[0]), Y] = 1.0
    inv_n = np.float32(1.0 / X.shape[0])

    for _ in range(epochs):
        acts = [X]
        h = X
        for w, b in zip(weights[:-1], biases[:-1]):
            h = np.maximum(h @ w + b, 0.0)
            acts.append(h)
        logits = h @ weights[-1] + biases[-1]
        logits -= logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        probs = expl / expl.sum(axis=1, keepdims=True)
        loss = -np.mean(np.log(probs[np.arange(X.shape[0]), Y] + 1e-12))
        if not np.isfinite(loss):
            return None
        delta = (probs - onehot) * inv_n
        for i in range(len(weights) - 1, -1, -1):
            grad_w = acts[i].T @ delta
            grad_b = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ weights[i].T) * (acts[i] > 0)
            weights[i] -= lr * grad_w
            biases[i] -= lr * grad_b
    return TinyModel(weights=weights, biases=biases)


def train_model(train: EvalSet, seed: int, hidden: int = DEFAULT_HIDDEN,
                epochs: int = DEFAULT_EPOCHS, lr: float = DEFAULT_LR) -> TinyModel:
    """Full-batch GD with a fixed epoch count; halves the rate on divergence."""
    sizes = [train.inputs.shape[1], hidden, N_CLASSES]
    rate = lr
    for _ in range(4):
        model = _gd_run(train, sizes, seed, epochs, rate)
        if model is not None:
            return model
        rate *= 0.5
    raise RuntimeError("training diverged even after three learning-rate halvings")


# ---------------------------------------------------------------------------
# Metrics

def accuracy(model: TinyModel, eval_set: EvalSet) -> float:
    """Top-1 accuracy; rows with NaN/Inf logits count as misclassified."""
    if eval_set.size == 0:
        raise ValueError("empty evaluation set")
    logits = model.forward(eval_set.inputs)
    finite = np.all(np.isfinite(logits), axis=1)
    with np.errstate(invalid="ignore"):
        pred = np.argmax(logits, axis=1)
    correct = finite & (pred == eval_set.labels)
    return float(correct.mean())


@dataclass(frozen=True)
class NumericMetrics:
    fraction_changed: float
    max_abs_rel_error: float
    rmse: float
    nan_inf_count: int


_EPS_FOR_DTYPE = {np.dtype(np.float16): FP16.smallest_normal,
                  np.dtype(np.float32): FP32.smallest_normal}


def numeric_metrics(original: dict, decoded: dict) -> NumericMetrics:
    """Parameter-space damage report between two same-shape tensor dicts."""
    if set(original) != set(decoded):
        raise ValueError("tensor dicts have different keys")
    orig_parts, dec_parts = [], []
    for name in original:
        o, d = np.asarray(original[name]), np.asarray(decoded[name])
        if o.shape != d.shape:
            raise ValueError(f"shape mismatch for {name}: {o.shape} vs {d.shape}")
        if o.dtype != d.dtype:
            raise ValueError(f"dtype mismatch for {name}: {o.dtype} vs {d.dtype}")
        orig_parts.append(o.reshape(-1))
        dec_parts.append(d.reshape(-1))
    o = np.concatenate(orig_parts)
    d = np.concatenate(dec_parts)
    if o.dtype not in _EPS_FOR_DTYPE:
        raise ValueError(f"unsupported parameter dtype {o.dtype}")
    eps = _EPS_FOR_DTYPE[o.dtype]

    bits_o = o.view(np.uint16 if o.dtype == np.float16 else np.uint32)
    bits_d = d.view(np.uint16 if o.dtype == np.float16 else np.uint32)
    changed = bits_o != bits_d
    finite = np.isfinite(d.astype(np.float64))
    nan_inf = int((~finite).sum())

    of = o.astype(np.float64)[finite]
    df = d.astype(np.float64)[finite]
    if of.size:
        diff = np.abs(df - of)
        rel = diff / np.maximum(np.abs(of), eps)
        max_rel = float(rel.max())
        rmse = float(np.sqrt(np.mean((df - of) ** 2)))
    else:
        max_rel = 0.0
        rmse = 0.0
    return NumericMetrics(
        fraction_changed=float(changed.mean()) if changed.size else 0.0,
        max_abs_rel_error=max_rel,
        rmse=rmse,
        nan_inf_count=nan_inf,
    )
