"""Distillation loss with analytic gradients and a linear-softmax sandbox.

The loss on a batch of ``n`` samples is::

    (1 - sum_t w_t) CE(y, softmax(Z))  +  sum_t w_t tau^2 CE(softmax(Z_t / tau), softmax(Z / tau))

averaged over samples, where ``CE(p, q) = -sum_k p_k log q_k`` takes the
target distribution first.  Teacher logits are constants.

Sandbox models are linear-softmax classifiers that read only the first ``d``
features of the input, so the feature count plays the role of model size.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import log_softmax

__all__ = ["softmax_t", "KdBatch", "kd_loss", "kd_loss_grad", "SandboxModel", "Dataset",
           "gen_synthetic_dataset", "train_sandbox", "stable_lr", "accuracy", "KdDivergenceError",
           "TrainResult", "pretrain_teacher", "SANDBOX_FEATURES", "kd_demo"]

# feature counts standing in for the three model sizes
SANDBOX_FEATURES = {"small": 16, "medium": 24, "large": 32}


def softmax_t(z, tau: float = 1.0) -> np.ndarray:
    """Temperature softmax along the last axis."""
    if not tau > 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    z = np.asarray(z, dtype=float) / tau
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _cross_entropy(p, log_q) -> np.ndarray:
    """Per-sample CE(p, q) from log q; 0 log 0 counts as 0."""
    return -np.sum(np.where(p > 0, p * log_q, 0.0), axis=-1)


@dataclass
class KdBatch:
    student_logits: np.ndarray             # (n, K)
    teacher_logits: list[np.ndarray]       # each (n, K)
    labels: np.ndarray                     # (n, K) one-hot, or (n,) class ids
    temperature: float = 4.0
    weights: Sequence[float] = ()

    def __post_init__(self):
        self.student_logits = np.atleast_2d(np.asarray(self.student_logits, dtype=float))
        n, k = self.student_logits.shape
        self.teacher_logits = [np.asarray(t, dtype=float) for t in self.teacher_logits]
        for i, t in enumerate(self.teacher_logits):
            if t.shape != (n, k):
                raise ValueError(f"teacher {i} logits have shape {t.shape}, expected {(n, k)}")
        labels = np.asarray(self.labels)
        if labels.ndim == 1:
            if labels.shape[0] != n or np.any((labels < 0) | (labels >= k)):
                raise ValueError("class ids must have one entry in 0..K-1 per sample")
            labels = np.eye(k)[labels.astype(int)]
        if labels.shape != (n, k):
            raise ValueError(f"labels have shape {labels.shape}, expected {(n, k)}")
        if not (np.all((labels == 0) | (labels == 1)) and np.all(labels.sum(axis=1) == 1)):
            raise ValueError("labels must be one-hot")
        self.labels = labels.astype(float)
        self.weights = tuple(float(w) for w in self.weights)
        if len(self.weights) != len(self.teacher_logits):
            raise ValueError("need one weight per teacher")
        if any(w < 0 for w in self.weights) or sum(self.weights) >= 1:
            raise ValueError("teacher weights must be >= 0 and sum to less than 1")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")

    @property
    def label_weight(self) -> float:
        return 1.0 - sum(self.weights)


def _loss_grad(z, labels, targets, weights, tau, grad=True):
    """Loss and logit gradient given teacher distributions ``targets`` at ``tau``."""
    label_w = 1.0 - sum(weights)
    log_p = log_softmax(z, axis=1)
    log_q = log_softmax(z / tau, axis=1)
    loss = label_w * _cross_entropy(labels, log_p)
    for w, pt in zip(weights, targets):
        loss = loss + w * tau ** 2 * _cross_entropy(pt, log_q)
    loss = float(np.mean(loss))
    if not grad:
        return loss, None
    g = label_w * (np.exp(log_p) - labels)
    q = np.exp(log_q)
    for w, pt in zip(weights, targets):
        g = g + w * tau * (q - pt)
    return loss, g / z.shape[0]


def _targets(batch: KdBatch):
    return [softmax_t(zt, batch.temperature) for zt in batch.teacher_logits]


def kd_loss(batch: KdBatch) -> float:
    return _loss_grad(batch.student_logits, batch.labels, _targets(batch), batch.weights,
                      batch.temperature, grad=False)[0]


def kd_loss_grad(batch: KdBatch) -> np.ndarray:
    """Gradient of :func:`kd_loss` with respect to the student logits, (n, K)."""
    return _loss_grad(batch.student_logits, batch.labels, _targets(batch), batch.weights,
                      batch.temperature)[1]


# -- sandbox ---------------------------------------------------------------------


@dataclass
class SandboxModel:
    W: np.ndarray          # (K, d)
    b: np.ndarray          # (K,)
    label: str = ""

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.b.shape[0] != self.W.shape[0]:
            raise ValueError("bias length must match the class count")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ValueError("model parameters must be finite")

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def n_features(self) -> int:
        return self.W.shape[1]

    @property
    def architecture(self) -> str:
        return f"linear-{self.n_features}"

    @classmethod
    def zeros(cls, n_classes: int, n_features: int, label: str = "") -> "SandboxModel":
        return cls(np.zeros((n_classes, n_features)), np.zeros(n_classes), label)

    def logits(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] < self.n_features:
            raise ValueError(f"model reads {self.n_features} features, data has {X.shape[1]}")
        return X[:, :self.n_features] @ self.W.T + self.b

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.logits(X), axis=1)

    def copy(self, label: str | None = None) -> "SandboxModel":
        return SandboxModel(self.W.copy(), self.b.copy(), self.label if label is None else label)

    # checkpoint: {"format": "risshare.sandbox", "label", "W": [[...]], "b": [...]}
    def save(self, path):
        with open(path, "w") as fh:
            json.dump({"format": "risshare.sandbox", "label": self.label,
                       "W": self.W.tolist(), "b": self.b.tolist()}, fh)

    @classmethod
    def load(cls, path) -> "SandboxModel":
        with open(path) as fh:
            d = json.load(fh)
        if d.get("format") != "risshare.sandbox":
            raise ValueError(f"{path}: not a sandbox checkpoint")
        return cls(d["W"], d["b"], d.get("label", ""))


@dataclass
class Dataset:
    """Train / held-out pool / test split of a labelled feature set."""

    X_train: np.ndarray
    y_train: np.ndarray
    X_pool: np.ndarray
    y_pool: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    n_classes: int

    @property
    def n_features(self) -> int:
        return self.X_train.shape[1]

    @property
    def X_full(self) -> np.ndarray:
        return np.vstack([self.X_train, self.X_pool])

    @property
    def y_full(self) -> np.ndarray:
        return np.concatenate([self.y_train, self.y_pool])

    def save(self, path):
        """Write an ``.npz`` archive with one array per field."""
        np.savez(path, X_train=self.X_train, y_train=self.y_train, X_pool=self.X_pool,
                 y_pool=self.y_pool, X_test=self.X_test, y_test=self.y_test,
                 n_classes=np.array(self.n_classes))

    @classmethod
    def load(cls, path) -> "Dataset":
        with np.load(path) as f:
            return cls(f["X_train"], f["y_train"], f["X_pool"], f["y_pool"], f["X_test"],
                       f["y_test"], int(f["n_classes"]))


def gen_synthetic_dataset(seed: int, n_classes: int = 16, n_features: int = 32,
                          n_per_class: int = 200, spread: float = 1.0,
                          train_frac: float = 0.02, test_frac: float = 0.8,
                          separation: float = 5.0) -> Dataset:
    """Gaussian clusters around class means on a sphere of radius ``separation``.

    Samples are shuffled and split into ``train_frac`` labelled training data,
    ``test_frac`` test data and the remaining pool.  Means on a sphere keep
    every class linearly separable when ``spread`` is 0.
    """
    if n_classes < 2 or n_features < 2:
        raise ValueError("need at least 2 classes and 2 features")
    if not (0 < train_frac and 0 < test_frac and train_frac + test_frac <= 1):
        raise ValueError("train and test fractions must be positive and sum to at most 1")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((n_classes, n_features))
    means *= separation / np.linalg.norm(means, axis=1, keepdims=True)
    y = np.repeat(np.arange(n_classes), n_per_class)
    X = means[y] + spread * rng.standard_normal((y.size, n_features))
    perm = rng.permutation(y.size)
    X, y = X[perm], y[perm]
    n_train = max(n_classes, int(round(train_frac * y.size)))
    n_test = int(round(test_frac * y.size))
    tr, te = slice(0, n_train), slice(n_train, n_train + n_test)
    pool = slice(n_train + n_test, None)
    return Dataset(X[tr], y[tr], X[pool], y[pool], X[te], y[te], n_classes)


def accuracy(model: SandboxModel, X, y) -> float:
    return float(np.mean(model.predict(X) == y))


def stable_lr(X) -> float:
    """Step size bound 4 / lambda_max(X1^T X1 / n) with X1 = [X, 1].

    The loss Hessian in the logits is bounded by 1/2 for any weights summing
    to at most one, so gradient descent is stable strictly below this.
    """
    X1 = np.hstack([np.asarray(X, dtype=float), np.ones((len(X), 1))])
    return 4.0 / np.linalg.eigvalsh(X1.T @ X1 / len(X1))[-1]


class KdDivergenceError(FloatingPointError):
    def __init__(self, step: int):
        super().__init__(f"training loss became non-finite at step {step}")
        self.step = step


@dataclass
class TrainResult:
    model: SandboxModel
    trace: list[tuple[int, float, float]] = field(default_factory=list)   # (epoch, train_loss, test_acc)

    @property
    def final_accuracy(self) -> float:
        return self.trace[-1][2]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "test_acc"])
            for e, loss, acc in self.trace:
                w.writerow([e, repr(loss), repr(acc)])


def train_sandbox(dataset: Dataset, teachers: Sequence[SandboxModel] = (), weights: Sequence[float] = (),
                  tau: float = 4.0, steps: int = 500, lr: float | None = None, seed: int = 0,
                  n_features: int | None = None, init: SandboxModel | None = None,
                  X=None, y=None, eval_every: int = 50, label: str = "student") -> TrainResult:
    """Full-batch gradient descent on the distillation loss.

    Trains on ``dataset.X_train`` unless ``X``/``y`` are given.  ``lr``
    defaults to half of :func:`stable_lr`.  The student starts from ``init``
    or from small seeded weights.  Returns the model and a trace of
    ``(epoch, train_loss, test_acc)`` every ``eval_every`` steps and at the end.
    """
    X = dataset.X_train if X is None else np.asarray(X, dtype=float)
    y = dataset.y_train if y is None else np.asarray(y)
    k = dataset.n_classes
    if init is not None:
        model = init.copy(label)
    else:
        d = n_features or dataset.n_features
        rng = np.random.default_rng(seed)
        model = SandboxModel(0.01 * rng.standard_normal((k, d)), np.zeros(k), label)
    d = model.n_features
    Xs = X[:, :d]
    if lr is None:
        lr = 0.5 * stable_lr(Xs)
    onehot = np.eye(k)[y]
    # validates shapes and weights once; the loop reuses the teacher targets
    check = KdBatch(np.zeros((len(X), k)), [t.logits(X) for t in teachers], onehot, tau, weights)
    targets, weights = _targets(check), check.weights

    trace = []
    W, b = model.W.copy(), model.b.copy()
    # overflow surfaces as a non-finite loss, reported below
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(steps + 1):
            Z = Xs @ W.T + b
            loss, G = _loss_grad(Z, onehot, targets, weights, tau)
            if not np.isfinite(loss):
                raise KdDivergenceError(step)
            if step % eval_every == 0 or step == steps:
                acc = float(np.mean(np.argmax(dataset.X_test[:, :d] @ W.T + b, axis=1) == dataset.y_test))
                trace.append((step, loss, acc))
            if step == steps:
                break
            W -= lr * (G.T @ Xs)
            b -= lr * G.sum(axis=0)
    return TrainResult(SandboxModel(W, b, label), trace)


def pretrain_teacher(dataset: Dataset, n_features: int | None = None, steps: int = 2000,
                     seed: int = 0, label: str = "teacher") -> SandboxModel:
    """Plain label training on the train and pool samples together."""
    return train_sandbox(dataset, steps=steps, seed=seed, n_features=n_features, X=dataset.X_full,
                         y=dataset.y_full, eval_every=steps, label=label).model


def kd_demo(seed: int = 0, weights=(0.25, 0.25), tau: float = 4.0, steps: int = 500,
            dataset: Dataset | None = None) -> dict:
    """Two pretrained teachers of different sizes distilled into a small student.

    Returns test accuracies of both teachers, of the student trained on the
    labelled split alone and of the same student trained with the teachers,
    along with both training traces.
    """
    ds = dataset if dataset is not None else gen_synthetic_dataset(seed)
    big = pretrain_teacher(ds, SANDBOX_FEATURES["large"], seed=seed, label="teacher-large")
    mid = pretrain_teacher(ds, SANDBOX_FEATURES["medium"], seed=seed + 1, label="teacher-medium")
    d = SANDBOX_FEATURES["small"]
    plain = train_sandbox(ds, steps=steps, seed=seed, n_features=d, label="student-plain")
    kd = train_sandbox(ds, [big, mid], weights, tau, steps=steps, seed=seed, n_features=d,
                       label="student-kd")
    return {
        "seed": seed,
        "teacher_acc": [accuracy(big, ds.X_test, ds.y_test), accuracy(mid, ds.X_test, ds.y_test)],
        "plain_acc": plain.final_accuracy,
        "kd_acc": kd.final_accuracy,
        "plain": plain,
        "kd": kd,
    }
