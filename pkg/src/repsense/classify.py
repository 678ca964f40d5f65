"""Per-frame statistical features and a Gaussian naive Bayes classifier.

Each channel contributes six statistics (mean, std, min, max, rms and the
zero-crossing count of the mean-removed signal) and every vector ends with the
frame duration in seconds.  All likelihood arithmetic is done in log space.

Model file format (text, one record per line)::

    gaussian-nb 1
    classes=CR,LU,...
    priors=<float>,<float>,...
    layout=<feature>,<feature>,...
    <class>,<feature>,<mean>,<variance>      # one line per (class, feature)

Floats are written with ``repr`` so a save/load cycle is exact.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from repsense.dsp import resolved_signs
from repsense.errors import LayoutMismatchError, TrainingError
from repsense.recording import ChannelId, Exercise, _atomic_write

STATISTICS = ("mean", "std", "min", "max", "rms", "zc")
DURATION = "duration"
VARIANCE_FLOOR = 1e-6
_LOG_2PI = float(np.log(2.0 * np.pi))
_MODEL_MAGIC = "gaussian-nb 1"


def feature_layout(channels: Iterable[ChannelId]) -> tuple[str, ...]:
    names = [f"{c.name}:{stat}" for c in sorted(channels) for stat in STATISTICS]
    return tuple(names) + (DURATION,)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    layout: tuple[str, ...]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (len(self.layout),):
            raise LayoutMismatchError("values and layout differ in length")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", tuple(self.layout))

    def select(self, layout: Sequence[str]) -> "FeatureVector":
        index = {name: i for i, name in enumerate(self.layout)}
        try:
            cols = [index[name] for name in layout]
        except KeyError as exc:
            raise LayoutMismatchError(f"feature {exc.args[0]!r} not present") from None
        return FeatureVector(self.values[cols], tuple(layout))


def channel_statistics(block: np.ndarray) -> np.ndarray:
    """(channels, 6) statistics for a (samples, channels) block.

    Moments are taken over sorted columns so the result does not depend on
    sample order; the crossing count is reversal-invariant by construction.
    """
    block = np.asarray(block, dtype=np.float64)
    ordered = np.sort(block, axis=0)
    mean = ordered.mean(axis=0)
    std = np.sqrt(np.mean((ordered - mean) ** 2, axis=0))
    rms = np.sqrt(np.mean(ordered**2, axis=0))
    zc = np.empty(block.shape[1])
    for j in range(block.shape[1]):
        s = resolved_signs(block[:, j])
        zc[j] = np.count_nonzero(s[:-1] != s[1:])
    return np.column_stack([mean, std, ordered[0], ordered[-1], rms, zc])


def extract_features(frame, channel_subset: Iterable[ChannelId]) -> FeatureVector:
    """Feature vector of one repetition frame restricted to ``channel_subset``."""
    subset = sorted(set(channel_subset))
    if not subset:
        raise ValueError("channel subset is empty")
    index = {c: i for i, c in enumerate(frame.channel_ids)}
    missing = [c.name for c in subset if c not in index]
    if missing:
        raise LayoutMismatchError(f"frame lacks channels {missing}")
    if frame.n_samples < 4:
        raise ValueError("frame needs at least 4 samples")
    block = frame.channel_slice[:, [index[c] for c in subset]]
    stats = channel_statistics(block)
    values = np.concatenate([stats.ravel(), [frame.duration]])
    return FeatureVector(values, feature_layout(subset))


@dataclass(frozen=True, eq=False)
class GaussianNbModel:
    classes: tuple[Exercise, ...]
    priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    layout: tuple[str, ...]

    def __post_init__(self) -> None:
        k, d = len(self.classes), len(self.layout)
        priors = np.asarray(self.priors, dtype=np.float64)
        means = np.asarray(self.means, dtype=np.float64).reshape(k, d)
        variances = np.asarray(self.variances, dtype=np.float64).reshape(k, d)
        if priors.shape != (k,):
            raise ValueError("one prior per class required")
        if abs(priors.sum() - 1.0) > 1e-9:
            raise ValueError("priors must sum to 1")
        if np.any(variances < VARIANCE_FLOOR):
            raise ValueError("variances must respect the floor")
        for a in (priors, means, variances):
            a.flags.writeable = False
        object.__setattr__(self, "classes", tuple(Exercise(c) for c in self.classes))
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "layout", tuple(self.layout))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GaussianNbModel):
            return NotImplemented
        return (
            self.classes == other.classes
            and self.layout == other.layout
            and np.array_equal(self.priors, other.priors)
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.variances, other.variances)
        )

    def format(self) -> str:
        lines = [
            _MODEL_MAGIC,
            "classes=" + ",".join(c.name for c in self.classes),
            "priors=" + ",".join(repr(float(p)) for p in self.priors),
            "layout=" + ",".join(self.layout),
        ]
        for i, cls in enumerate(self.classes):
            for j, name in enumerate(self.layout):
                lines.append(f"{cls.name},{name},{float(self.means[i, j])!r},{float(self.variances[i, j])!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "GaussianNbModel":
        lines = text.splitlines()
        if not lines or lines[0].strip() != _MODEL_MAGIC:
            raise ValueError("not a gaussian-nb model file")
        header = {}
        for line in lines[1:4]:
            key, _, value = line.partition("=")
            header[key] = value
        classes = tuple(Exercise.parse(c) for c in header["classes"].split(","))
        priors = [float(p) for p in header["priors"].split(",")]
        layout = tuple(header["layout"].split(","))
        col = {name: j for j, name in enumerate(layout)}
        row = {c: i for i, c in enumerate(classes)}
        means = np.full((len(classes), len(layout)), np.nan)
        variances = np.full_like(means, np.nan)
        for line in lines[4:]:
            if not line.strip():
                continue
            label, name, mean, var = line.split(",")
            i, j = row[Exercise.parse(label)], col[name]
            means[i, j] = float(mean)
            variances[i, j] = float(var)
        if np.isnan(means).any() or np.isnan(variances).any():
            raise ValueError("model file is missing (class, feature) entries")
        return cls(classes, np.array(priors), means, variances, layout)

    def save(self, path: str | os.PathLike) -> None:
        _atomic_write(Path(path), self.format())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "GaussianNbModel":
        return cls.parse(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class Prediction:
    label: Exercise
    log_posteriors: dict[Exercise, float]

    def posteriors(self) -> dict[Exercise, float]:
        logs = np.array(list(self.log_posteriors.values()))
        p = np.exp(logs - logs.max())
        p /= p.sum()
        return dict(zip(self.log_posteriors, p.tolist()))


def fit(
    X: np.ndarray,
    labels: Sequence[Exercise],
    layout: Sequence[str],
    classes: Sequence[Exercise] | None = None,
    variance_floor: float = VARIANCE_FLOOR,
) -> GaussianNbModel:
    """Train from a feature matrix; ``train`` is the FeatureVector front end."""
    X = np.asarray(X, dtype=np.float64)
    y = np.array([int(Exercise(lbl)) for lbl in labels])
    if X.ndim != 2 or X.shape[0] != len(y) or X.shape[1] != len(layout):
        raise LayoutMismatchError("feature matrix does not match labels/layout")
    if len(y) == 0:
        raise TrainingError("no training examples")
    if classes is None:
        classes = sorted({Exercise(v) for v in y})
    classes = tuple(sorted(Exercise(c) for c in classes))
    counts = np.array([np.count_nonzero(y == int(c)) for c in classes])
    empty = [c.name for c, n in zip(classes, counts) if n == 0]
    if empty:
        raise TrainingError(f"no examples for classes {empty}")
    if np.count_nonzero(np.isin(y, [int(c) for c in classes])) != len(y):
        raise TrainingError("labels outside the declared classes")
    means = np.empty((len(classes), X.shape[1]))
    variances = np.empty_like(means)
    for i, c in enumerate(classes):
        rows = X[y == int(c)]
        means[i] = rows.mean(axis=0)
        variances[i] = np.maximum(rows.var(axis=0), variance_floor)
    priors = counts / counts.sum()
    return GaussianNbModel(classes, priors, means, variances, tuple(layout))


def train(
    features: Sequence[FeatureVector],
    labels: Sequence[Exercise],
    classes: Sequence[Exercise] | None = None,
) -> GaussianNbModel:
    if len(features) != len(labels):
        raise ValueError("features and labels differ in length")
    if not features:
        raise TrainingError("no training examples")
    layout = features[0].layout
    if any(f.layout != layout for f in features):
        raise LayoutMismatchError("feature vectors do not share one layout")
    X = np.vstack([f.values for f in features])
    return fit(X, labels, layout, classes)


def log_joint(model: GaussianNbModel, X: np.ndarray) -> np.ndarray:
    """(n, classes) matrix of log prior + summed Gaussian log densities."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != len(model.layout):
        raise LayoutMismatchError("feature count differs from the model layout")
    var = model.variances
    const = -0.5 * (np.log(var) + _LOG_2PI).sum(axis=1)
    diff = X[:, None, :] - model.means[None, :, :]
    quad = -0.5 * np.sum(diff * diff / var[None, :, :], axis=2)
    return np.log(model.priors)[None, :] + const[None, :] + quad


def predict_matrix(model: GaussianNbModel, X: np.ndarray) -> np.ndarray:
    """Class ordinal index (into ``model.classes``) for each row of ``X``."""
    return np.argmax(log_joint(model, X), axis=1)


def predict(model: GaussianNbModel, features: FeatureVector) -> Prediction:
    if features.layout != model.layout:
        raise LayoutMismatchError("feature layout differs from the model layout")
    logs = log_joint(model, features.values)[0]
    # argmax returns the first maximum, i.e. the lowest class ordinal on ties
    label = model.classes[int(np.argmax(logs))]
    return Prediction(label, {c: float(v) for c, v in zip(model.classes, logs)})
