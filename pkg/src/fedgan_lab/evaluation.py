"""Downstream evaluation: divergence estimates, classifier, metrics, sweeps.

The sample-level divergence estimator histograms both sample sets on one
shared per-dimension equal-width grid spanning their joint range, applies
add-one smoothing, and hands the two normalized histograms to the exact
discrete divergence. The classifier is a small softmax net trained with
plain minibatch SGD on cross-entropy; metrics are the usual per-class
precision / sensitivity / F1 plus the confusion matrix, with
zero-denominator cases reported as 0 and flagged undefined so tables
stay numeric.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .divergence import DiscreteDistribution, jsd
from .federation import generate_synthetic
from .nets import (
    NetworkParameters,
    RngStream,
    apply_update,
    backward,
    forward,
    init_mlp,
)


class EvaluationError(ValueError):
    """Bad inputs to the evaluation harness."""


@dataclass(frozen=True)
class LabeledDataset:
    """Sample matrix with one integer class label per row."""

    samples: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __init__(self, samples, labels, num_classes) -> None:
        samples = np.asarray(samples, dtype=float)
        labels = np.asarray(labels, dtype=int)
        if samples.ndim != 2 or samples.shape[0] != labels.shape[0]:
            raise EvaluationError("sample and label counts must match")
        if num_classes < 1:
            raise EvaluationError("num_classes must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise EvaluationError("labels must lie in [0, num_classes)")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "num_classes", int(num_classes))

    def __len__(self) -> int:
        return int(self.labels.shape[0])


@dataclass(frozen=True)
class MixingConfig:
    """Synthetic-to-real count ratio for augmentation sweeps."""

    ratio: float
    per_class: bool = True

    def __post_init__(self) -> None:
        if self.ratio < 0:
            raise EvaluationError("ratio must be >= 0")


@dataclass
class ClassMetrics:
    """Per-class precision/sensitivity/F1 plus the confusion matrix."""

    precision: np.ndarray
    sensitivity: np.ndarray
    f1: np.ndarray
    confusion: np.ndarray
    accuracy: float
    undefined: dict[str, list[int]] = field(default_factory=dict)


def empirical_jsd(real, generated, bins: int = 16) -> float:
    """Histogram divergence between two sample sets on a shared grid.

    Both sets are binned per dimension over their joint range with
    add-one smoothing, so the result is finite, symmetric, and within
    [0, ln 2].
    """
    real = np.asarray(real, dtype=float)
    generated = np.asarray(generated, dtype=float)
    if real.ndim != 2 or generated.ndim != 2 or real.shape[1] != generated.shape[1]:
        raise EvaluationError("inputs must be sample matrices of equal dim")
    if real.shape[0] < 1 or generated.shape[0] < 1:
        raise EvaluationError("inputs must be non-empty")
    if bins < 2:
        raise EvaluationError("bins must be >= 2")

    joint = np.vstack([real, generated])
    edges = []
    for d in range(joint.shape[1]):
        lo, hi = joint[:, d].min(), joint[:, d].max()
        if lo == hi:  # degenerate dimension: one wide bin still works
            lo, hi = lo - 0.5, hi + 0.5
        edges.append(np.linspace(lo, hi, bins + 1))
    h_real, _ = np.histogramdd(real, bins=edges)
    h_gen, _ = np.histogramdd(generated, bins=edges)
    p = DiscreteDistribution.from_weights(h_real.ravel() + 1.0)
    q = DiscreteDistribution.from_weights(h_gen.ravel() + 1.0)
    return jsd(p, q)


def classifier_architecture(
    input_dim: int, num_classes: int, rng: RngStream, *, hidden: int = 16
) -> NetworkParameters:
    """Small leaky-relu net with a softmax head."""
    return init_mlp(
        [input_dim, hidden, num_classes],
        rng,
        hidden_activation="leaky-relu",
        output_activation="softmax",
    )


def train_classifier(
    train: LabeledDataset,
    epochs: int,
    learning_rate: float,
    rng: RngStream,
    *,
    minibatch_size: int = 32,
    hidden: int = 16,
    initial: NetworkParameters | None = None,
) -> NetworkParameters:
    """Minibatch cross-entropy SGD; deterministic given the stream."""
    if len(train) < 1:
        raise EvaluationError("training set is empty")
    if train.num_classes < 2:
        raise EvaluationError("need at least two classes")
    net = initial
    if net is None:
        net = classifier_architecture(
            train.samples.shape[1], train.num_classes, rng, hidden=hidden
        )
    for _ in range(epochs):
        order = rng.permutation(len(train))
        for start in range(0, len(train), minibatch_size):
            idx = order[start : start + minibatch_size]
            grads = backward(
                net, train.samples[idx], "classifier-ce", targets=train.labels[idx]
            )
            net = apply_update(net, grads, -learning_rate)
    return net


def predict(classifier: NetworkParameters, samples) -> np.ndarray:
    return np.argmax(forward(classifier, samples), axis=1)


def confusion_matrix(
    true_labels: np.ndarray, predicted: np.ndarray, num_classes: int
) -> np.ndarray:
    counts = np.zeros((num_classes, num_classes), dtype=int)
    for t, p in zip(true_labels, predicted):
        counts[t, p] += 1
    return counts


def metrics_from_confusion(confusion: np.ndarray) -> ClassMetrics:
    """Per-class precision/sensitivity/F1; zero denominators flagged."""
    confusion = np.asarray(confusion)
    n = confusion.shape[0]
    tp = np.diag(confusion).astype(float)
    predicted = confusion.sum(axis=0).astype(float)
    actual = confusion.sum(axis=1).astype(float)
    undefined: dict[str, list[int]] = {"precision": [], "sensitivity": [], "f1": []}

    precision = np.zeros(n)
    sensitivity = np.zeros(n)
    f1 = np.zeros(n)
    for c in range(n):
        if predicted[c] > 0:
            precision[c] = tp[c] / predicted[c]
        else:
            undefined["precision"].append(c)
        if actual[c] > 0:
            sensitivity[c] = tp[c] / actual[c]
        else:
            undefined["sensitivity"].append(c)
        if precision[c] + sensitivity[c] > 0:
            f1[c] = 2 * precision[c] * sensitivity[c] / (precision[c] + sensitivity[c])
        else:
            undefined["f1"].append(c)
    total = confusion.sum()
    accuracy = float(tp.sum() / total) if total else 0.0
    return ClassMetrics(precision, sensitivity, f1, confusion, accuracy, undefined)


def evaluate(classifier: NetworkParameters, test: LabeledDataset) -> ClassMetrics:
    """Argmax predictions scored against the held-out labels."""
    if test.samples.shape[1] != classifier.in_dim:
        raise EvaluationError("test dim does not match classifier input")
    predicted = predict(classifier, test.samples)
    return metrics_from_confusion(
        confusion_matrix(test.labels, predicted, test.num_classes)
    )


def macro_f1(metrics: ClassMetrics) -> float:
    return float(np.mean(metrics.f1))


@dataclass(frozen=True)
class SweepRow:
    ratio: float
    train_size: int
    accuracy: float
    per_class_precision: tuple[float, ...]
    per_class_sensitivity: tuple[float, ...]
    per_class_f1: tuple[float, ...]
    confusion: tuple[tuple[int, ...], ...]


def mixed_training_set(
    real: LabeledDataset,
    generators: dict[int, NetworkParameters],
    mixing: MixingConfig,
    rng: RngStream,
) -> LabeledDataset:
    """Real data plus ratio x |real| generated samples.

    per_class (default) spreads the synthetic budget equally over the
    classes, matching the reference generation tables where every class
    receives the same synthetic volume regardless of its real count (so
    augmentation also rebalances). With per_class off, each class gets
    ratio x its own real count, preserving the imbalance.
    """
    if mixing.ratio == 0:
        return real
    samples = [real.samples]
    labels = [real.labels]
    if mixing.per_class:
        per_class_count = int(round(mixing.ratio * len(real) / real.num_classes))
        counts = {c: per_class_count for c in range(real.num_classes)}
    else:
        counts = {
            c: int(round(mixing.ratio * int(np.sum(real.labels == c))))
            for c in range(real.num_classes)
        }
    for label, count in counts.items():
        if count == 0:
            continue
        samples.append(generate_synthetic(generators[label], rng, count))
        labels.append(np.full(count, label, dtype=int))
    return LabeledDataset(
        np.vstack(samples), np.concatenate(labels), real.num_classes
    )


def mixing_sweep(
    real_train: LabeledDataset,
    real_test: LabeledDataset,
    generators: dict[int, NetworkParameters],
    ratios: list[MixingConfig],
    rng: RngStream,
    *,
    epochs: int = 120,
    learning_rate: float = 0.05,
    train_size: int | None = None,
) -> list[SweepRow]:
    """Train/evaluate once per mixing ratio; ratio 0 is the real-only run.

    When train_size is given, that many real rows are subsampled with the
    run stream before mixing (matching the varying-training-size tables).
    """
    if not ratios:
        raise EvaluationError("ratios must be non-empty")
    rows = []
    for mixing in ratios:
        cell_rng = np.random.default_rng(rng.integers(0, 2**63))
        base = real_train
        if train_size is not None and train_size < len(real_train):
            keep = cell_rng.choice(len(real_train), size=train_size, replace=False)
            base = LabeledDataset(
                real_train.samples[keep], real_train.labels[keep],
                real_train.num_classes,
            )
        mixed = mixed_training_set(base, generators, mixing, cell_rng)
        net = train_classifier(mixed, epochs, learning_rate, cell_rng)
        metrics = evaluate(net, real_test)
        rows.append(
            SweepRow(
                mixing.ratio,
                len(mixed),
                metrics.accuracy,
                tuple(metrics.precision),
                tuple(metrics.sensitivity),
                tuple(metrics.f1),
                tuple(tuple(int(v) for v in row) for row in metrics.confusion),
            )
        )
    return rows


def export_sweep_csv(rows: list[SweepRow], path) -> None:
    if not rows:
        raise EvaluationError("nothing to export")
    n_classes = len(rows[0].per_class_precision)
    header = ["ratio", "train_size", "accuracy"]
    for c in range(n_classes):
        header += [f"precision_{c}", f"sensitivity_{c}", f"f1_{c}"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            record = [row.ratio, row.train_size, row.accuracy]
            for c in range(n_classes):
                record += [
                    row.per_class_precision[c],
                    row.per_class_sensitivity[c],
                    row.per_class_f1[c],
                ]
            writer.writerow(record)


def export_confusion_csv(confusion, path) -> None:
    """Confusion matrix as flattened labeled rows."""
    matrix = np.asarray(confusion)
    n = matrix.shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true_class"] + [f"predicted_{c}" for c in range(n)])
        for c in range(n):
            writer.writerow([c] + [int(v) for v in matrix[c]])
