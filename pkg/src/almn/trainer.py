"""From-scratch MLP embedding network and the training loop: sample a
classes-by-samples batch, embed it, take the analytic loss gradient,
backpropagate through the network, apply momentum SGD, then move the
class centers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .batch import EmbeddingBatch
from .centers import CenterBank, ensure_centers, update_centers
from .data import BatchSpec, Dataset, sample_batch
from .errors import (
    DimensionMismatch,
    DivergenceDetected,
    NonFiniteGradient,
    NonFiniteResult,
)
from .gradients import almn_backward
from .losses import LossConfig

CHECKPOINT_VERSION = 1


@dataclass
class MlpModel:
    """Affine layers with rectifier activations; the last layer is the
    identity-activated embedding head."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def embedding_dim(self) -> int:
        return self.weights[-1].shape[1]


def init_mlp(input_dim: int, hidden: tuple[int, ...], embedding_dim: int,
             rng: np.random.Generator) -> MlpModel:
    """Uniform [-s, s] weights with s = sqrt(6 / (fan_in + fan_out)), zero biases."""
    sizes = [input_dim, *hidden, embedding_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases)


def forward(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    """Embeddings for a (batch, input_dim) matrix."""
    return _forward_full(model, inputs)[0][-1]


def _forward_full(model: MlpModel, inputs: np.ndarray):
    """Forward pass keeping activations and pre-activations for backprop."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != model.input_dim:
        raise DimensionMismatch(
            f"inputs of shape {inputs.shape} do not match input_dim {model.input_dim}"
        )
    acts = [inputs]
    preacts = []
    h = inputs
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        preacts.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts, preacts


def backward(model: MlpModel, acts, preacts, grad_embeddings: np.ndarray):
    """Parameter gradients given dLoss/dEmbeddings (already 1/N-scaled)."""
    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.biases)
    delta = np.asarray(grad_embeddings, dtype=np.float64)
    for i in range(len(model.weights) - 1, -1, -1):
        grad_w[i] = acts[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (preacts[i - 1] > 0)
    return grad_w, grad_b


@dataclass
class TrainConfig:
    """Training hyperparameters. Desk-scale defaults; the published
    large-scale settings (lr 1e-5, 512-d head on a pretrained CNN) remain
    selectable but diverge on a cold MLP."""

    iterations: int = 2000
    lr: float = 0.01
    lr_decay_factor: float = 0.8
    decay_at_iteration: int | None = None  # None: 60% of iterations
    momentum: float = 0.9
    weight_decay: float = 0.0002
    loss: LossConfig = field(default_factory=LossConfig)
    batch: BatchSpec = field(default_factory=lambda: BatchSpec(m=10, n=5))
    center_alpha: float = 0.5
    head_lr_multiplier: float = 10.0
    center_update_every: int = 1
    hidden: tuple[int, ...] = (64, 64)
    embedding_dim: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.center_update_every < 1:
            raise ValueError("center_update_every must be >= 1")

    @property
    def decay_iteration(self) -> int:
        if self.decay_at_iteration is not None:
            return self.decay_at_iteration
        return int(self.iterations * 0.6)


def train(ds: Dataset, cfg: TrainConfig) -> tuple[MlpModel, CenterBank, list[float]]:
    """Run the full training loop; fully deterministic given the seeds.

    Per iteration: sample batch -> forward -> analytic backward ->
    backpropagate the embedding gradients -> momentum SGD with weight
    decay and the head learning-rate multiplier -> damped center update.
    Raises DivergenceDetected (with the iteration index) on the first
    non-finite loss.
    """
    if cfg.loss.margin_mode not in ("almn", "baseline"):
        raise ValueError("training supports margin_mode 'almn' or 'baseline' only")
    rng_init = np.random.default_rng(cfg.seed)
    rng_sample = np.random.default_rng(cfg.batch.seed)
    model = init_mlp(ds.dim, tuple(cfg.hidden), cfg.embedding_dim, rng_init)
    bank = CenterBank(dim=cfg.embedding_dim, alpha=cfg.center_alpha)
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    head = len(model.weights) - 1
    loss_curve: list[float] = []

    for it in range(cfg.iterations):
        idx = sample_batch(ds, cfg.batch, rng_sample)
        acts, preacts = _forward_full(model, ds.features[idx])
        if not np.all(np.isfinite(acts[-1])):
            raise DivergenceDetected(it, f"non-finite embeddings at iteration {it}")
        batch = EmbeddingBatch(acts[-1], ds.labels[idx])
        ensure_centers(bank, batch)
        try:
            bundle = almn_backward(batch, bank, cfg.loss)
        except (NonFiniteGradient, NonFiniteResult) as e:
            raise DivergenceDetected(it, f"{e} at iteration {it}") from None
        if not np.isfinite(bundle.loss):
            raise DivergenceDetected(it)
        loss_curve.append(bundle.loss)

        grad_w, grad_b = backward(model, acts, preacts, bundle.grads)
        lr = cfg.lr if it < cfg.decay_iteration else cfg.lr * cfg.lr_decay_factor
        for i in range(len(model.weights)):
            lr_i = lr * (cfg.head_lr_multiplier if i == head else 1.0)
            vel_w[i] = cfg.momentum * vel_w[i] - lr_i * (
                grad_w[i] + cfg.weight_decay * model.weights[i]
            )
            vel_b[i] = cfg.momentum * vel_b[i] - lr_i * grad_b[i]
            model.weights[i] = model.weights[i] + vel_w[i]
            model.biases[i] = model.biases[i] + vel_b[i]

        if (it + 1) % cfg.center_update_every == 0:
            update_centers(bank, batch)

    return model, bank, loss_curve


def save_checkpoint(path, model: MlpModel, bank: CenterBank,
                    rng: np.random.Generator | None = None,
                    iteration: int = 0) -> None:
    """Single-file container: model shape and parameters, center bank,
    sampler rng state, iteration count."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "layer_sizes": model.layer_sizes,
        "iteration": iteration,
        "center_alpha": bank.alpha,
        "center_dim": bank.dim,
        "rng_state": rng.bit_generator.state if rng is not None else None,
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    labels = sorted(bank.centers)
    arrays["center_labels"] = np.array(labels, dtype=np.int64)
    arrays["center_vectors"] = (
        np.stack([bank.centers[z] for z in labels])
        if labels else np.zeros((0, bank.dim))
    )
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_checkpoint(path):
    """Inverse of save_checkpoint.

    Returns (model, bank, meta); meta contains the stored rng state and
    iteration count.
    """
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        n_layers = len(meta["layer_sizes"]) - 1
        weights = [z[f"w{i}"] for i in range(n_layers)]
        biases = [z[f"b{i}"] for i in range(n_layers)]
        bank = CenterBank(dim=int(meta["center_dim"]), alpha=float(meta["center_alpha"]))
        for z_label, vec in zip(z["center_labels"], z["center_vectors"]):
            bank.set(int(z_label), vec)
    return MlpModel(weights, biases), bank, meta
