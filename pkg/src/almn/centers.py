"""Per-class anchor vectors and their damped mini-batch update."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .batch import EmbeddingBatch
from .errors import DimensionMismatch, UninitializedCenter


@dataclass
class CenterBank:
    """Map from class id to its anchor vector, plus the update rate alpha.

    Centers are created lazily (first batch containing the class) and are
    mutated only by the training loop; they are treated as constants by
    loss backpropagation.
    """

    dim: int
    alpha: float = 0.5
    centers: dict[int, np.ndarray] = field(default_factory=dict)

    def has(self, class_id) -> bool:
        return int(class_id) in self.centers

    def get(self, class_id) -> np.ndarray:
        try:
            return self.centers[int(class_id)]
        except KeyError:
            raise UninitializedCenter(f"no center for class {class_id}") from None

    def set(self, class_id, vector) -> None:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.dim,):
            raise DimensionMismatch(
                f"center for class {class_id} has shape {vector.shape}, expected ({self.dim},)"
            )
        self.centers[int(class_id)] = vector

    def matrix_for(self, labels: np.ndarray) -> np.ndarray:
        """Per-sample center rows: row i is the center of labels[i]."""
        return np.stack([self.get(z) for z in labels])


def get_or_init_center(bank: CenterBank, class_id, batch_samples_of_class=()) -> np.ndarray:
    """Return the stored center, initializing it to the batch mean if unseen."""
    class_id = int(class_id)
    if bank.has(class_id):
        return bank.get(class_id)
    samples = np.asarray(batch_samples_of_class, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[None, :]
    if samples.size == 0:
        raise UninitializedCenter(
            f"class {class_id} is unseen and no samples were given to initialize it"
        )
    if samples.shape[1] != bank.dim:
        raise DimensionMismatch(
            f"samples have dimension {samples.shape[1]}, bank expects {bank.dim}"
        )
    center = samples.mean(axis=0)
    bank.set(class_id, center)
    return center


def ensure_centers(bank: CenterBank, batch: EmbeddingBatch) -> None:
    """Initialize any missing centers from the batch's class means."""
    for z in batch.classes:
        if not bank.has(z):
            get_or_init_center(bank, z, batch.embeddings[batch.labels == z])


def update_centers(bank: CenterBank, batch: EmbeddingBatch) -> CenterBank:
    """Damped move of each present class center toward its batch samples.

    c_z <- c_z - alpha * sum_i 1{y_i=z} (c_z - x_i) / (1 + sum_i 1{y_i=z})

    All samples see the pre-update center (simultaneous update); classes
    absent from the batch are untouched. Mutates and returns `bank`.
    """
    if batch.dim != bank.dim:
        raise DimensionMismatch(
            f"batch dimension {batch.dim} does not match bank dimension {bank.dim}"
        )
    updates = {}
    for z in batch.classes:
        z = int(z)
        old = bank.get(z)  # raises UninitializedCenter if missing
        members = batch.embeddings[batch.labels == z]
        count = members.shape[0]
        delta = (count * old - members.sum(axis=0)) / (1.0 + count)
        updates[z] = old - bank.alpha * delta
    for z, c in updates.items():
        bank.centers[z] = c
    return bank
