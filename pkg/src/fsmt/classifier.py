"""Character n-gram logistic-regression formality classifier.

Features are hashed character n-grams (orders 1-4 by default) of the
target text; training is plain batch gradient descent with a fixed
learning rate, so runs are bit-reproducible given the same data. Neutral
examples are duplicated into both classes before fitting.

The silver-labeling policy keeps a probability only when it clears the
formal threshold (>= 0.85 by default) or the informal one (<= 0.15);
everything in between is the dead zone and receives no label.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import sparse

from .textcore import FormalityLabel, Segment

MODEL_FORMAT_VERSION = 1


class ClassifierError(Exception):
    pass


class DegenerateData(ClassifierError):
    """Training data contains only one class."""


class EmptyClass(ClassifierError):
    pass


@dataclass(frozen=True)
class SilverPolicy:
    formal_threshold: float = 0.85
    informal_threshold: float = 0.15

    def __post_init__(self):
        if not (0.5 < self.formal_threshold <= 1.0):
            raise ValueError("formal_threshold must be in (0.5, 1]")
        if not (0.0 <= self.informal_threshold < 0.5):
            raise ValueError("informal_threshold must be in [0, 0.5)")


def silver_label(p_formal: float, policy: SilverPolicy = SilverPolicy()) -> Optional[FormalityLabel]:
    """Formal iff p >= formal threshold, Informal iff p <= informal one,
    otherwise None (dead zone, record dropped)."""
    if p_formal >= policy.formal_threshold:
        return FormalityLabel.FORMAL
    if p_formal <= policy.informal_threshold:
        return FormalityLabel.INFORMAL
    return None


@dataclass(frozen=True)
class TrainSettings:
    n_min: int = 1
    n_max: int = 4
    vocab_hash_bits: int = 18
    learning_rate: float = 0.5
    epochs: int = 200
    l2: float = 1e-4
    seed: int = 0


def _hash_ngram_entries(text: str, n_min: int, n_max: int, bits: int) -> dict[int, float]:
    """Deterministic L2-normalized hashed n-gram counts (crc32, seed-free)."""
    mask = (1 << bits) - 1
    counts: dict[int, float] = {}
    padded = f" {text} "
    for n in range(n_min, n_max + 1):
        for i in range(len(padded) - n + 1):
            gram = padded[i : i + n].encode("utf-8")
            idx = zlib.crc32(gram) & mask
            counts[idx] = counts.get(idx, 0.0) + 1.0
    norm = sum(v * v for v in counts.values()) ** 0.5
    if norm > 0:
        counts = {k: v / norm for k, v in counts.items()}
    return counts


def _hash_ngrams(text: str, n_min: int, n_max: int, bits: int) -> np.ndarray:
    vec = np.zeros(1 << bits, dtype=np.float64)
    for k, v in _hash_ngram_entries(text, n_min, n_max, bits).items():
        vec[k] = v
    return vec


def _feature_matrix(texts: Sequence[str], settings: "TrainSettings") -> sparse.csr_matrix:
    data, indices, indptr = [], [], [0]
    for t in texts:
        entries = sorted(
            _hash_ngram_entries(t, settings.n_min, settings.n_max, settings.vocab_hash_bits).items()
        )
        indices.extend(k for k, _ in entries)
        data.extend(v for _, v in entries)
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(texts), 1 << settings.vocab_hash_bits),
    )


@dataclass
class LinearNGramModel:
    n_range: tuple[int, int]
    vocab_hash_bits: int
    weights: np.ndarray  # dense (2**bits,)
    bias: float

    def featurize(self, text: str) -> np.ndarray:
        return _hash_ngrams(text, self.n_range[0], self.n_range[1], self.vocab_hash_bits)

    def save(self, path) -> None:
        payload = {
            "format_version": MODEL_FORMAT_VERSION,
            "n_range": list(self.n_range),
            "vocab_hash_bits": self.vocab_hash_bits,
            "bias": self.bias,
            # sparse map feature index -> weight
            "weights": {
                str(i): w for i, w in zip(*_sparsify(self.weights))
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "LinearNGramModel":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format_version") != MODEL_FORMAT_VERSION:
            raise ClassifierError(f"unsupported model format: {payload.get('format_version')}")
        weights = np.zeros(1 << payload["vocab_hash_bits"], dtype=np.float64)
        for k, v in payload["weights"].items():
            weights[int(k)] = v
        return cls(
            n_range=tuple(payload["n_range"]),
            vocab_hash_bits=payload["vocab_hash_bits"],
            weights=weights,
            bias=payload["bias"],
        )


def _sparsify(weights: np.ndarray):
    idx = np.nonzero(weights)[0]
    return idx.tolist(), weights[idx].tolist()


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def expand_neutral(
    examples: Iterable[tuple[Segment, FormalityLabel]]
) -> list[tuple[str, int]]:
    """Binary training rows; Neutral examples contribute one row per class."""
    rows = []
    for seg, label in examples:
        if label is FormalityLabel.FORMAL:
            rows.append((seg.text, 1))
        elif label is FormalityLabel.INFORMAL:
            rows.append((seg.text, 0))
        elif label is FormalityLabel.NEUTRAL:
            rows.append((seg.text, 1))
            rows.append((seg.text, 0))
        else:
            raise ValueError(f"untrainable label {label}")
    return rows


def train_classifier(
    examples: Sequence[tuple[Segment, FormalityLabel]],
    settings: TrainSettings = TrainSettings(),
) -> tuple[LinearNGramModel, list[float]]:
    """Fit the classifier; returns (model, per-epoch training losses).

    The loss history is on the training set and decreases monotonically
    for the default step size (full-batch descent on a convex objective).
    """
    rows = expand_neutral(examples)
    labels = {y for _, y in rows}
    if labels != {0, 1}:
        raise DegenerateData("training data must contain both Formal and Informal examples")
    X = _feature_matrix([t for t, _ in rows], settings)
    y = np.array([lab for _, lab in rows], dtype=np.float64)
    n, dim = X.shape
    w = np.zeros(dim, dtype=np.float64)
    b = 0.0
    losses = []
    for _ in range(settings.epochs):
        p = _sigmoid(X @ w + b)
        eps = 1e-12
        loss = -np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps))
        loss += 0.5 * settings.l2 * float(w @ w)
        losses.append(float(loss))
        grad_z = (p - y) / n
        w -= settings.learning_rate * (X.T @ grad_z + settings.l2 * w)
        b -= settings.learning_rate * float(np.sum(grad_z))
    model = LinearNGramModel(
        n_range=(settings.n_min, settings.n_max),
        vocab_hash_bits=settings.vocab_hash_bits,
        weights=w,
        bias=b,
    )
    return model, losses


def predict_proba(model: LinearNGramModel, segment: Segment) -> float:
    """P(formal | target text); sigmoid of the linear score."""
    x = model.featurize(segment.text)
    return float(_sigmoid(x @ model.weights + model.bias))


@dataclass(frozen=True)
class ClassAccuracyReport:
    formal_accuracy: float
    informal_accuracy: float
    n_formal: int
    n_informal: int

    def to_dict(self) -> dict:
        return {
            "formal_accuracy": self.formal_accuracy,
            "informal_accuracy": self.informal_accuracy,
            "n_formal": self.n_formal,
            "n_informal": self.n_informal,
        }


def eval_classifier(
    model: LinearNGramModel,
    dev_set: Sequence[tuple[Segment, FormalityLabel]],
) -> ClassAccuracyReport:
    """Per-class accuracy at the 0.5 decision boundary."""
    correct = {1: 0, 0: 0}
    totals = {1: 0, 0: 0}
    for seg, label in dev_set:
        if label is FormalityLabel.FORMAL:
            gold = 1
        elif label is FormalityLabel.INFORMAL:
            gold = 0
        else:
            continue
        totals[gold] += 1
        pred = 1 if predict_proba(model, seg) >= 0.5 else 0
        correct[gold] += pred == gold
    if totals[1] == 0 or totals[0] == 0:
        raise EmptyClass("dev set must contain both Formal and Informal examples")
    return ClassAccuracyReport(
        formal_accuracy=correct[1] / totals[1],
        informal_accuracy=correct[0] / totals[0],
        n_formal=totals[1],
        n_informal=totals[0],
    )


def read_external_scores(path) -> dict[str, float]:
    """External probability file: JSONL rows {id, p_formal}."""
    scores = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            row = json.loads(line)
            if "id" not in row or "p_formal" not in row:
                raise ClassifierError(f"line {lineno}: expected fields id, p_formal")
            p = float(row["p_formal"])
            if not (0.0 <= p <= 1.0):
                raise ClassifierError(f"line {lineno}: p_formal out of [0, 1]")
            scores[str(row["id"])] = p
    return scores
