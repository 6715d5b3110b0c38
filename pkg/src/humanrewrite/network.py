"""Feedforward ReLU network with an averaged-softmax output, trained from scratch.

Each input vector of an example goes through the same hidden stack; the
resulting hidden vectors are averaged and the mean goes through one affine
map and a softmax.  All arithmetic is float64 numpy.
"""

from __future__ import annotations

import json
import logging
import math
import struct
import time
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .encoding import EncodedExample, canonical_order

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-12
MODEL_MAGIC = b"HLRWMODL"
MODEL_VERSION = 1


class DivergenceError(RuntimeError):
    pass


@dataclass
class NetworkParams:
    """``hidden`` is a list of (W, b) pairs; ``output`` the (W, b) of the averaged softmax."""

    hidden: list[tuple[np.ndarray, np.ndarray]]
    output: tuple[np.ndarray, np.ndarray]

    @property
    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [*self.hidden, self.output]

    @property
    def input_width(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.output[0].shape[1]

    @property
    def dims(self) -> list[int]:
        return [self.input_width] + [W.shape[1] for W, _ in self.layers]

    def copy(self) -> NetworkParams:
        return NetworkParams([(W.copy(), b.copy()) for W, b in self.hidden], (self.output[0].copy(), self.output[1].copy()))

    def flat(self) -> list[np.ndarray]:
        return [a for W, b in self.layers for a in (W, b)]


def init_params(input_width: int, hidden_layers: int, hidden_units: int, n_classes: int, rng: np.random.Generator) -> NetworkParams:
    """Uniform weights with variance 2/fan_in, zero biases."""
    dims = [input_width] + [hidden_units] * hidden_layers + [n_classes]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        a = math.sqrt(6.0 / fan_in)
        layers.append((rng.uniform(-a, a, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return NetworkParams(layers[:-1], layers[-1])


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ----------------------------------------------------------------- batches


@dataclass
class Batch:
    x: sparse.csr_matrix | np.ndarray
    offsets: np.ndarray  # start row of each example plus total row count
    targets: np.ndarray | None = None

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def __len__(self):
        return len(self.offsets) - 1


def make_batch(examples: Sequence[EncodedExample]) -> Batch:
    x = sparse.vstack([e.inputs for e in examples], format="csr")
    offsets = np.concatenate([[0], np.cumsum([e.n_vectors for e in examples])])
    targets = None
    if all(e.target is not None for e in examples):
        targets = np.array([e.target for e in examples], dtype=np.int64)
    return Batch(x, offsets, targets)


def _as_batch(inputs) -> Batch:
    if isinstance(inputs, Batch):
        return inputs
    if isinstance(inputs, EncodedExample):
        return make_batch([inputs])
    if sparse.issparse(inputs):
        inputs = inputs.toarray()
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("inputs must be a non-empty set of equal-width vectors")
    x = x[canonical_order(x)]
    return Batch(x, np.array([0, x.shape[0]]))


def _forward(params: NetworkParams, batch: Batch):
    if batch.x.shape[1] != params.input_width:
        raise ValueError(f"input width {batch.x.shape[1]} != network input width {params.input_width}")
    acts = [batch.x]
    h = batch.x
    for W, b in params.hidden:
        h = np.maximum(h @ W + b, 0.0)
        acts.append(h)
    if sparse.issparse(h):
        h = h.toarray()
    pooled = np.add.reduceat(h, batch.offsets[:-1], axis=0) / batch.counts[:, None]
    W, b = params.output
    probs = softmax(pooled @ W + b)
    return acts, pooled, probs


def forward(params: NetworkParams, inputs) -> np.ndarray:
    """Probability vector for one example (a set of vectors), or a matrix for a Batch."""
    _, _, probs = _forward(params, _as_batch(inputs))
    return probs if isinstance(inputs, Batch) else probs[0]


def loss(probs: np.ndarray, target: int) -> float:
    return -math.log(max(float(probs[target]), LOG_FLOOR))


def mean_loss(probs: np.ndarray, targets: np.ndarray) -> float:
    p = probs[np.arange(len(targets)), targets]
    return float(-np.log(np.maximum(p, LOG_FLOOR)).mean())


def backward(params: NetworkParams, batch: Batch | Sequence[EncodedExample]) -> tuple[float, NetworkParams]:
    """Mean cross-entropy of the batch and its exact gradient (same layout as ``params``)."""
    if not isinstance(batch, Batch):
        batch = make_batch(batch)
    if batch.targets is None or len(batch) == 0:
        raise ValueError("backward needs a non-empty batch with targets")
    acts, pooled, probs = _forward(params, batch)
    n = len(batch)
    value = mean_loss(probs, batch.targets)

    d_logits = probs.copy()
    d_logits[np.arange(n), batch.targets] -= 1.0
    d_logits /= n
    W_out, _ = params.output
    grad_out = (pooled.T @ d_logits, d_logits.sum(axis=0))
    d_pooled = d_logits @ W_out.T
    counts = batch.counts
    d_h = np.repeat(d_pooled / counts[:, None], counts, axis=0)

    grads_hidden = []
    for layer in range(len(params.hidden) - 1, -1, -1):
        W, _ = params.hidden[layer]
        d_z = d_h * (acts[layer + 1] > 0)
        prev = acts[layer]
        grads_hidden.append((np.asarray(prev.T @ d_z), d_z.sum(axis=0)))
        if layer > 0:
            d_h = d_z @ W.T
    grads_hidden.reverse()
    return value, NetworkParams(grads_hidden, grad_out)


def predict(params: NetworkParams, inputs) -> list[int]:
    """Classes by descending probability; ties go to the lower class index."""
    return rank_classes(forward(params, inputs))


def rank_classes(probs: np.ndarray) -> list[int]:
    return np.lexsort((np.arange(len(probs)), -probs)).tolist()


# ---------------------------------------------------------------- training


@dataclass
class TrainConfig:
    hidden_layers: int = 5
    hidden_units: int = 1024
    init_lr: float = 0.01
    halve_threshold: float = 0.1
    stop_threshold: float = 0.01
    batch_size: int = 32
    seed: int = 0
    max_epochs: int = 100

    def __post_init__(self):
        if not (0 < self.stop_threshold < self.halve_threshold):
            raise ValueError("need 0 < stop_threshold < halve_threshold")
        if self.batch_size < 1 or self.max_epochs < 1 or self.hidden_layers < 0 or self.hidden_units < 1:
            raise ValueError("batch_size, max_epochs, hidden_units must be positive")


@dataclass
class LearningCurve:
    loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.loss)

    def to_tsv(self) -> str:
        rows = ["epoch\tloss\tlr\tseconds"]
        rows += [f"{i}\t{l:.6f}\t{r:.8g}\t{s:.3f}" for i, (l, r, s) in enumerate(zip(self.loss, self.lr, self.seconds), 1)]
        return "\n".join(rows) + "\n"


class HalvingSchedule:
    """Learning-rate control from per-epoch training loss.

    After each epoch the improvement over the previous epoch's loss is
    compared with two thresholds: below ``stop`` ends training, below
    ``halve`` halves the rate for the next epoch.  Both comparisons are strict.
    """

    def __init__(self, init_lr: float = 0.01, halve: float = 0.1, stop: float = 0.01):
        self.lr = init_lr
        self.halve = halve
        self.stop = stop
        self.previous: float | None = None
        self.done = False

    def update(self, epoch_loss: float) -> float:
        if self.previous is not None:
            improvement = self.previous - epoch_loss
            if improvement < self.stop:
                self.done = True
            elif improvement < self.halve:
                self.lr /= 2.0
        self.previous = epoch_loss
        return self.lr


def train(
    examples: Sequence[EncodedExample],
    config: TrainConfig,
    n_classes: int,
    params: NetworkParams | None = None,
    on_epoch=None,
) -> tuple[NetworkParams, LearningCurve]:
    """Mini-batch gradient descent under the halving schedule; deterministic in ``config.seed``."""
    if not examples:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    width = examples[0].inputs.shape[1]
    if params is None:
        params = init_params(width, config.hidden_layers, config.hidden_units, n_classes, rng)
    schedule = HalvingSchedule(config.init_lr, config.halve_threshold, config.stop_threshold)
    curve = LearningCurve()
    n = len(examples)
    for epoch in range(1, config.max_epochs + 1):
        lr = schedule.lr
        start = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            value, grads = backward(params, make_batch([examples[i] for i in idx]))
            if not math.isfinite(value):
                raise DivergenceError(f"loss became {value} in epoch {epoch}")
            total += value * len(idx)
            for (W, b), (gW, gb) in zip(params.layers, grads.layers):
                W -= lr * gW
                b -= lr * gb
        epoch_loss = total / n
        curve.loss.append(epoch_loss)
        curve.lr.append(lr)
        curve.seconds.append(time.perf_counter() - start)
        log.info("epoch %d loss %.4f lr %g", epoch, epoch_loss, lr)
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss, lr)
        schedule.update(epoch_loss)
        if schedule.done:
            break
    return params, curve


# -------------------------------------------------------------- model files


def save_model(path: str | Path, params: NetworkParams, meta: dict) -> None:
    """Single-file model: magic, version, JSON header, little-endian float64 payload."""
    header = dict(meta)
    header["dims"] = params.dims
    header["format_version"] = MODEL_VERSION
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<IQ", MODEL_VERSION, len(blob)))
        fh.write(blob)
        for a in params.flat():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_model(path: str | Path) -> tuple[NetworkParams, dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MODEL_MAGIC):
        raise ValueError(f"{path}: not a model file")
    off = len(MODEL_MAGIC)
    version, hlen = struct.unpack_from("<IQ", data, off)
    if version != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model format version {version}")
    off += struct.calcsize("<IQ")
    header = json.loads(data[off : off + hlen].decode("utf-8"))
    off += hlen
    dims = header["dims"]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        W = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out, offset=off).reshape(fan_in, fan_out).astype(np.float64)
        off += 8 * fan_in * fan_out
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=off).astype(np.float64)
        off += 8 * fan_out
        layers.append((W, b))
    if off != len(data):
        raise ValueError(f"{path}: trailing bytes in model file")
    return NetworkParams(layers[:-1], layers[-1]), header
