"""Evaluation protocol: stratified 80:20 split, k-fold CV, reports and ablation.

Report file layout (one per report)::

    8 rows of comma-separated confusion counts, rows = truth, label order CR..PU
    recall,<label>,<value>        one per label
    accuracy,<value>
    protocol,<split|cv>
    config,<name>,<with_cpu 0|1>
    seed,<seed>

The summary across configurations is CSV with header ``config,with_cpu,accuracy``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from repsense import classify
from repsense.errors import ConfigError, SplitError
from repsense.recording import (
    EXTREMITIES,
    ChannelId,
    Exercise,
    SensorPosition,
    Session,
)
from repsense.segmentation import DEFAULT_CONFIG, RepetitionFrame, SegmentationConfig, segment

LABELS = tuple(Exercise)
N_LABELS = len(LABELS)
P = SensorPosition


class Protocol(Enum):
    SPLIT_80_20 = "split"
    CV_K4 = "cv"


class ConfigName(Enum):
    ALL = "ALL"
    TR = "TR"
    TL = "TL"
    T = "T"
    BR = "BR"
    BL = "BL"
    B = "B"
    L = "L"
    R = "R"
    CPU_ONLY = "CPU_ONLY"


# Table groups with TL read as the left wrist and T as both wrists
GROUP_POSITIONS = {
    ConfigName.ALL: frozenset(EXTREMITIES),
    ConfigName.TR: frozenset({P.WRIST_RIGHT}),
    ConfigName.TL: frozenset({P.WRIST_LEFT}),
    ConfigName.T: frozenset({P.WRIST_LEFT, P.WRIST_RIGHT}),
    ConfigName.BR: frozenset({P.FOOT_RIGHT}),
    ConfigName.BL: frozenset({P.FOOT_LEFT}),
    ConfigName.B: frozenset({P.FOOT_LEFT, P.FOOT_RIGHT}),
    ConfigName.L: frozenset({P.WRIST_LEFT, P.FOOT_LEFT}),
    ConfigName.R: frozenset({P.WRIST_RIGHT, P.FOOT_RIGHT}),
    ConfigName.CPU_ONLY: frozenset(),
}
GROUPS = tuple(n for n in ConfigName if n is not ConfigName.CPU_ONLY)


@dataclass(frozen=True)
class SensorConfig:
    name: ConfigName
    include_cpu: bool

    def __post_init__(self) -> None:
        if self.name is ConfigName.CPU_ONLY and not self.include_cpu:
            raise ValueError("CPU_ONLY always includes the CPU")

    @property
    def positions(self) -> frozenset[SensorPosition]:
        extra = {P.CHEST} if self.include_cpu else set()
        return GROUP_POSITIONS[self.name] | extra

    @property
    def label(self) -> str:
        if self.name is ConfigName.CPU_ONLY:
            return "CPU_ONLY"
        return f"{self.name.value}{'+CPU' if self.include_cpu else ''}"

    def channels(self, available: Iterable[ChannelId]) -> tuple[ChannelId, ...]:
        available = tuple(available)
        present = {c.position for c in available}
        missing = sorted(p.slug for p in self.positions - present)
        if missing:
            raise ConfigError(f"config {self.label} needs sensors {missing} absent from the data")
        return tuple(sorted(c for c in available if c.position in self.positions))


def standard_configs() -> list[SensorConfig]:
    """Every group with and without CPU channels, then CPU_ONLY: 19 configs."""
    out = [SensorConfig(n, cpu) for n in GROUPS for cpu in (True, False)]
    out.append(SensorConfig(ConfigName.CPU_ONLY, True))
    return out


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    confusion: np.ndarray
    config: SensorConfig | None
    protocol: Protocol
    seed: int
    test_ids: tuple[int, ...] = field(default=(), repr=False)

    def __post_init__(self) -> None:
        cm = np.asarray(self.confusion, dtype=np.int64)
        if cm.shape != (N_LABELS, N_LABELS):
            raise ValueError("confusion matrix must be 8x8")
        cm.flags.writeable = False
        object.__setattr__(self, "confusion", cm)

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def overall_accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.total) if self.total else float("nan")

    @property
    def per_class_recall(self) -> dict[Exercise, float]:
        rows = self.confusion.sum(axis=1)
        return {
            lbl: (float(self.confusion[i, i] / rows[i]) if rows[i] else float("nan"))
            for i, lbl in enumerate(LABELS)
        }

    def format(self) -> str:
        lines = [",".join(str(int(v)) for v in row) for row in self.confusion]
        lines += [f"recall,{lbl.name},{val!r}" for lbl, val in self.per_class_recall.items()]
        lines.append(f"accuracy,{self.overall_accuracy!r}")
        lines.append(f"protocol,{self.protocol.value}")
        if self.config is not None:
            lines.append(f"config,{self.config.name.value},{int(self.config.include_cpu)}")
        lines.append(f"seed,{self.seed}")
        return "\n".join(lines) + "\n"


def confusion_matrix(truth: Sequence[int], predicted: Sequence[int]) -> np.ndarray:
    cm = np.zeros((N_LABELS, N_LABELS), dtype=np.int64)
    np.add.at(cm, (np.asarray(truth, dtype=int), np.asarray(predicted, dtype=int)), 1)
    return cm


def summary_csv(reports: Sequence[EvaluationReport]) -> str:
    lines = ["config,with_cpu,accuracy"]
    for r in reports:
        name = r.config.name.value if r.config is not None else "NONE"
        cpu = int(r.config.include_cpu) if r.config is not None else 0
        lines.append(f"{name},{cpu},{r.overall_accuracy!r}")
    return "\n".join(lines) + "\n"


# --- splitting ------------------------------------------------------------------------


def _label_array(labels: Sequence[Exercise]) -> np.ndarray:
    return np.array([int(Exercise(lbl)) for lbl in labels], dtype=int)


def split_80_20(labels: Sequence[Exercise], seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified split of example indices into (train, test).

    Each class contributes round(0.2 * n) shuffled examples to the test side.
    """
    y = _label_array(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if len(idx) < 5:
            raise SplitError(f"class {Exercise(c).name} has {len(idx)} examples, need at least 5")
        idx = rng.permutation(idx)
        n_test = int(np.floor(0.2 * len(idx) + 0.5))
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_folds(labels: Sequence[Exercise], k: int, seed: int) -> list[np.ndarray]:
    """k disjoint index arrays; per class the fold sizes differ by at most one."""
    if k < 2:
        raise SplitError("k must be at least 2")
    y = _label_array(labels)
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        if len(idx) < k:
            raise SplitError(f"class {Exercise(c).name} has {len(idx)} examples, fewer than k={k}")
        # rotate the starting fold so remainders spread across folds
        for j, i in enumerate(idx):
            folds[(j + offset) % k].append(int(i))
        offset += len(idx)
    return [np.array(sorted(f), dtype=int) for f in folds]


def _evaluate_indices(
    X: np.ndarray, y: np.ndarray, layout: tuple[str, ...], train: np.ndarray, test: np.ndarray
) -> np.ndarray:
    model = classify.fit(X[train], [Exercise(v) for v in y[train]], layout)
    pred_idx = classify.predict_matrix(model, X[test])
    predicted = np.array([int(model.classes[i]) for i in pred_idx], dtype=int)
    return confusion_matrix(y[test], predicted)


def evaluate_split(
    X: np.ndarray,
    labels: Sequence[Exercise],
    layout: Sequence[str],
    seed: int,
    config: SensorConfig | None = None,
    split: tuple[np.ndarray, np.ndarray] | None = None,
) -> EvaluationReport:
    y = _label_array(labels)
    train, test = split if split is not None else split_80_20(labels, seed)
    cm = _evaluate_indices(np.asarray(X), y, tuple(layout), train, test)
    return EvaluationReport(cm, config, Protocol.SPLIT_80_20, seed, tuple(int(i) for i in test))


def cross_validate(
    X: np.ndarray,
    labels: Sequence[Exercise],
    layout: Sequence[str],
    k: int = 4,
    seed: int = 0,
    config: SensorConfig | None = None,
) -> EvaluationReport:
    """Stratified k-fold CV; every example is predicted exactly once."""
    X = np.asarray(X)
    y = _label_array(labels)
    folds = stratified_folds(labels, k, seed)
    cm = np.zeros((N_LABELS, N_LABELS), dtype=np.int64)
    all_idx = np.arange(len(y))
    for fold in folds:
        train = np.setdiff1d(all_idx, fold, assume_unique=True)
        cm += _evaluate_indices(X, y, tuple(layout), train, fold)
    return EvaluationReport(cm, config, Protocol.CV_K4, seed, tuple(int(i) for i in all_idx))


# --- frame tables ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FrameTable:
    """Features of every segmented frame over all session channels."""

    features: np.ndarray
    labels: tuple[Exercise, ...]
    layout: tuple[str, ...]
    channel_ids: tuple[ChannelId, ...]
    session_ids: tuple[str, ...]
    frames: tuple[RepetitionFrame, ...] = field(repr=False, default=())

    def __len__(self) -> int:
        return len(self.labels)

    def columns_for(self, channels: Iterable[ChannelId]) -> tuple[np.ndarray, tuple[str, ...]]:
        layout = classify.feature_layout(channels)
        index = {name: i for i, name in enumerate(self.layout)}
        cols = [index[name] for name in layout]
        return self.features[:, cols], layout

    def restrict(self, config: SensorConfig) -> tuple[np.ndarray, tuple[str, ...]]:
        return self.columns_for(config.channels(self.channel_ids))


def frame_table(
    sessions: Sequence[Session],
    seg_config: SegmentationConfig = DEFAULT_CONFIG,
    *,
    segmented: Sequence | None = None,
    keep_frames: bool = False,
) -> FrameTable:
    """Segment labeled sessions and extract full-channel features per frame."""
    if not sessions:
        raise ValueError("no sessions")
    channel_ids = sessions[0].channel_ids
    if any(s.channel_ids != channel_ids for s in sessions):
        raise ConfigError("sessions do not share one channel layout")
    if any(s.exercise is None for s in sessions):
        raise ValueError("every session needs an exercise label")
    rows, labels, sids, frames = [], [], [], []
    for i, session in enumerate(sessions):
        result = segmented[i] if segmented is not None else segment(session, seg_config)
        for frame in result.frames:
            rows.append(classify.extract_features(frame, channel_ids).values)
            labels.append(session.exercise)
            sids.append(session.session_id)
            if keep_frames:
                frames.append(frame)
    layout = classify.feature_layout(channel_ids)
    X = np.vstack(rows) if rows else np.zeros((0, len(layout)))
    return FrameTable(X, tuple(labels), layout, channel_ids, tuple(sids), tuple(frames))


def run_ablation(
    table: FrameTable | Sequence[Session],
    configs: Sequence[SensorConfig] | None = None,
    seed: int = 0,
) -> list[EvaluationReport]:
    """Retrain and test each config on one shared 80:20 split of the frames."""
    if not isinstance(table, FrameTable):
        table = frame_table(table)
    configs = standard_configs() if configs is None else list(configs)
    # resolve every config before any training so a bad request fails fast
    restricted = [table.restrict(cfg) for cfg in configs]
    split = split_80_20(table.labels, seed)
    return [
        evaluate_split(X, table.labels, layout, seed, cfg, split)
        for cfg, (X, layout) in zip(configs, restricted)
    ]


# --- segmentation scoring -------------------------------------------------------------------


@dataclass(frozen=True)
class SegmentationScore:
    n_true: int
    n_frames: int
    matched: int
    max_deviation: float  # worst boundary deviation among matches, as a fraction of the period

    @property
    def recall(self) -> float:
        return self.matched / self.n_true if self.n_true else 1.0

    @property
    def precision(self) -> float:
        return self.matched / self.n_frames if self.n_frames else 1.0


def match_repetitions(
    frames: Sequence[tuple[float, float]],
    truth: Sequence[tuple[float, float]],
    tolerance: float = 0.15,
) -> list[tuple[int, int, float]]:
    """One-to-one matches ``(frame, truth, deviation)`` between spans in seconds.

    A frame matches a true repetition when both of its boundaries are within
    ``tolerance`` times the true duration.  Truth is taken in order and each
    frame is claimed by at most one repetition.
    """
    matches = []
    used = set()
    for ti, (ts, te) in enumerate(truth):
        period = te - ts
        best = None
        for fi, (fs, fe) in enumerate(frames):
            if fi in used or fe < ts - period or fs > te + period:
                continue
            dev = max(abs(fs - ts), abs(fe - te)) / period
            if dev < tolerance and (best is None or dev < best[1]):
                best = (fi, dev)
        if best is not None:
            used.add(best[0])
            matches.append((best[0], ti, best[1]))
    return matches


def score_segmentation(
    frames: Sequence[tuple[float, float]],
    truth: Sequence[tuple[float, float]],
    tolerance: float = 0.15,
) -> SegmentationScore:
    matches = match_repetitions(frames, truth, tolerance)
    worst = max((m[2] for m in matches), default=0.0)
    return SegmentationScore(len(truth), len(frames), len(matches), worst)


def break_skipped(
    skipped_spans: Sequence[tuple[float, float]],
    before: tuple[float, float],
    after: tuple[float, float],
    tolerance: float = 0.15,
) -> bool:
    """Whether the break between true repetitions ``before`` and ``after`` was skipped.

    The break's edges may be overrun by ``tolerance`` times the duration of the
    bordering repetition, the same allowance a matched frame boundary gets.
    """
    lo = before[1] + tolerance * (before[1] - before[0])
    hi = after[0] - tolerance * (after[1] - after[0])
    return any(a <= lo and hi <= b for a, b in skipped_spans)
